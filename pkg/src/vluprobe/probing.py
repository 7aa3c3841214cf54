"""Prompt templates, slot policies, and the two probing score functions.

A template body holds exactly one completion slot `[*]`, at most one item
marker `<w>`, and at most one review marker `<s>`. Rendering with a slot value
produces a completed text t_c; rendering without one produces the masked text
t_m according to the template's slot policy:

- ProviderMask: insert the provider's mask token string.
- RemoveSlot: delete the marker and normalize whitespace.
- Filler(word): insert a fixed word.

Similarity probing scores a completion as the cosine between the direction-
normalized pooled embeddings of t_m and t_c. MLM probing asks the provider for
the candidates' log-probabilities at the single mask position. Both produce
rows of a ScoreTable; predictions take the argmax with ties broken by lowest
candidate index, and rankings sort descending with stable tie order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

from .errors import (
    EmptyRow,
    LengthMismatch,
    MaskUnavailable,
    MissingArgument,
    ZeroVector,
)
from .providers import ModelProvider, ProviderInfo

SLOT = "[*]"
ITEM_MARK = "<w>"
REVIEW_MARK = "<s>"

PROVIDER_MASK = "provider_mask"
REMOVE_SLOT = "remove_slot"
FILLER = "filler"

NOUN_FORM = "noun"
ADJECTIVE_FORM = "adjective"


@dataclass(frozen=True)
class SlotPolicy:
    """What fills the [*] slot when no candidate is being inserted."""

    kind: str
    filler: str | None = None

    def __post_init__(self):
        if self.kind not in (PROVIDER_MASK, REMOVE_SLOT, FILLER):
            raise ValueError(f"unknown slot policy {self.kind!r}")
        if self.kind == FILLER and not self.filler:
            raise ValueError("Filler policy needs a word")


@dataclass(frozen=True)
class PromptTemplate:
    body: str
    slot_policy: SlotPolicy = SlotPolicy(REMOVE_SLOT)
    candidate_form: str = NOUN_FORM
    candidates: tuple[str, ...] | None = None  # per-prompt pair, sentiment style

    def __post_init__(self):
        if self.body.count(SLOT) != 1:
            raise ValueError(f"body must contain exactly one {SLOT}: {self.body!r}")
        if self.body.count(ITEM_MARK) > 1 or self.body.count(REVIEW_MARK) > 1:
            raise ValueError(f"at most one {ITEM_MARK} and one {REVIEW_MARK}: {self.body!r}")
        if self.candidate_form not in (NOUN_FORM, ADJECTIVE_FORM):
            raise ValueError(f"unknown candidate form {self.candidate_form!r}")


_WS = re.compile(r"\s+")


def _normalize_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


def render(
    template: PromptTemplate,
    item: str | None = None,
    slot_value: str | None = None,
    review: str | None = None,
    provider_info: ProviderInfo | None = None,
) -> str:
    """Substitute markers in the template body.

    slot_value=None applies the template's slot policy; ProviderMask then
    requires provider_info with has_mask_token=true.
    """
    body = template.body
    if ITEM_MARK in body:
        if item is None:
            raise MissingArgument(f"template needs an item: {body!r}")
        body = body.replace(ITEM_MARK, item)
    if REVIEW_MARK in body:
        if review is None:
            raise MissingArgument(f"template needs a review: {body!r}")
        body = body.replace(REVIEW_MARK, review)
    if slot_value is not None:
        return body.replace(SLOT, slot_value)
    policy = template.slot_policy
    if policy.kind == FILLER:
        return body.replace(SLOT, policy.filler)
    if policy.kind == PROVIDER_MASK:
        if provider_info is None or not provider_info.has_mask_token:
            raise MaskUnavailable("provider lacks a mask token")
        return body.replace(SLOT, provider_info.mask_token)
    return _normalize_ws(body.replace(SLOT, " "))


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[str, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidate set must be non-empty")
        if any(not c for c in self.candidates):
            raise ValueError("candidates must be non-empty strings")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("candidates must be unique")

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, i: int) -> str:
        return self.candidates[i]


@dataclass(frozen=True)
class ScoreTable:
    """items x candidates scores from one prompt.

    candidates is either one shared CandidateSet or a per-item tuple of
    CandidateSets aligned with items; rows align with candidates row-wise.
    """

    method: str  # "sp" | "mlm"
    items: tuple[str, ...]
    candidates: CandidateSet | tuple[CandidateSet, ...]
    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if self.method not in ("sp", "mlm"):
            raise ValueError(f"unknown method {self.method!r}")
        if len(self.rows) != len(self.items):
            raise LengthMismatch(f"{len(self.rows)} rows for {len(self.items)} items")
        per_item = isinstance(self.candidates, tuple)
        if per_item and len(self.candidates) != len(self.items):
            raise LengthMismatch("per-item candidate sets must align with items")
        for i, row in enumerate(self.rows):
            cands = self.candidates[i] if per_item else self.candidates
            if len(row) != len(cands):
                raise LengthMismatch(f"row {i}: {len(row)} scores for {len(cands)} candidates")
            for v in row:
                if not math.isfinite(v):
                    raise ValueError(f"non-finite score in row {i}")
                if self.method == "sp" and not -1.0 - 1e-6 <= v <= 1.0 + 1e-6:
                    raise ValueError(f"similarity score out of range in row {i}: {v}")
                if self.method == "mlm" and v > 0.0:
                    raise ValueError(f"log-probability above 0 in row {i}: {v}")

    def candidates_for(self, i: int) -> CandidateSet:
        return self.candidates[i] if isinstance(self.candidates, tuple) else self.candidates


def _unit(vec: Sequence[float]) -> list[float]:
    norm = math.sqrt(math.fsum(c * c for c in vec))
    if norm < 1e-12:
        raise ZeroVector("embedding norm below 1e-12")
    return [c / norm for c in vec]


def stroop_scores(
    provider: ModelProvider, masked_text: str, completed_texts: Sequence[str]
) -> list[float]:
    """Cosine similarity of each completion's embedding to the masked text's."""
    vectors = provider.embed([masked_text, *completed_texts])
    vm = _unit(vectors[0])
    out = []
    for vec in vectors[1:]:
        vc = _unit(vec)
        s = math.fsum(a * b for a, b in zip(vm, vc))
        out.append(max(-1.0, min(1.0, s)))
    return out


def mlm_scores(
    provider: ModelProvider, masked_text: str, candidates: CandidateSet | Sequence[str]
) -> list[float]:
    """Log-probability of each single-token candidate at the mask position."""
    info = provider.info()
    if not info.has_mask_token:
        raise MaskUnavailable(f"provider {info.name!r} has no mask token")
    return provider.mlm_logprobs(masked_text, list(candidates))


def predict_categorical(row: Sequence[float]) -> int:
    """Index of the maximum score; ties go to the lowest index."""
    if len(row) == 0:
        raise EmptyRow("cannot predict from an empty row")
    best = 0
    for i in range(1, len(row)):
        if row[i] > row[best]:
            best = i
    return best


def rank_candidates(row: Sequence[float]) -> list[int]:
    """Indices in stable descending score order."""
    if len(row) == 0:
        raise EmptyRow("cannot rank an empty row")
    return sorted(range(len(row)), key=lambda i: -row[i])


def parse_prompt_file(path) -> list[PromptTemplate]:
    """One template per line; blank lines and `#` comments skipped.

    A ` ;; cand1,cand2` suffix attaches a per-prompt candidate pair.
    """
    templates = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cands: tuple[str, ...] | None = None
            if ";;" in line:
                body, _, tail = line.partition(";;")
                line = body.strip()
                cands = tuple(c.strip() for c in tail.split(",") if c.strip())
            templates.append(PromptTemplate(body=line, candidates=cands))
    return templates
