"""Synthetic groundability data: template cross-product, seeded subsampling,
NLL percentile filtering, and zero-shot NLI labeling.

Phrases follow the fixed template "Alex {verb}ing Riley's {noun}" where
"{verb}ing" is verbatim concatenation: input verb lists must carry
"-ing"-ready stems (giv, hid, announc, ...); no morphology is applied here.

The NLL filter keeps phrases whose sequence NLL is at most the nearest-rank
p-th percentile (the ceil(p/100 * n)-th smallest value), so on tie-free inputs
exactly ceil(p/100 * n) phrases survive, lowest NLL first in original order.

NLI labeling wraps each phrase into the premise "This is a picture of
{phrase}." against the fixed hypothesis "Riley can be seen in the picture."
and assigns label 1 iff p_entailment > 0.5 (strict).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DuplicateWord, EmptyList
from .providers import ModelProvider
from .rng import sample_prefix

HYPOTHESIS = "Riley can be seen in the picture."
_NLL_BATCH = 128


class PhraseGrid(Sequence[str]):
    """The |verbs| x |nouns| phrase cross-product as a lazy sequence.

    Index i maps to (verbs[i // len(nouns)], nouns[i % len(nouns)]); nothing is
    materialized, so full-scale grids (5M phrases) stay cheap.
    """

    def __init__(self, verbs: Sequence[str], nouns: Sequence[str]):
        if not verbs or not nouns:
            raise EmptyList("verbs and nouns must be non-empty")
        for name, words in (("verbs", verbs), ("nouns", nouns)):
            seen = set()
            for w in words:
                if w in seen:
                    raise DuplicateWord(f"duplicate in {name}: {w!r}")
                seen.add(w)
        self._verbs = list(verbs)
        self._nouns = list(nouns)

    def __len__(self) -> int:
        return len(self._verbs) * len(self._nouns)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        verb = self._verbs[i // len(self._nouns)]
        noun = self._nouns[i % len(self._nouns)]
        return f"Alex {verb}ing Riley's {noun}"


def generate(verbs: Sequence[str], nouns: Sequence[str]) -> PhraseGrid:
    """All |verbs|*|nouns| template phrases; duplicates in either list are
    rejected (they would break the phrase-set bijection)."""
    return PhraseGrid(verbs, nouns)


def sample_n(phrases: Sequence[str], n: int, seed: int) -> list[str]:
    """Uniform sample without replacement: seeded Fisher-Yates prefix."""
    if n > len(phrases):
        raise EmptyList(f"cannot sample {n} from {len(phrases)} phrases")
    return sample_prefix(phrases, n, seed)


def nll_scores(phrases: Sequence[str], provider: ModelProvider) -> list[float]:
    out: list[float] = []
    for start in range(0, len(phrases), _NLL_BATCH):
        out.extend(provider.sequence_nll(list(phrases[start : start + _NLL_BATCH])))
    return out


def nll_percentile_filter(
    phrases: Sequence[str],
    provider: ModelProvider,
    percentile: float = 20.0,
    scores: Sequence[float] | None = None,
) -> tuple[list[str], list[float]]:
    """Keep phrases with NLL <= the nearest-rank p-th percentile.

    Returns (kept phrases in input order, their NLLs). Precomputed scores can
    be passed to avoid rescoring.
    """
    if not 0.0 < percentile <= 100.0:
        raise ValueError("percentile must be in (0, 100]")
    if not phrases:
        raise EmptyList("no phrases to filter")
    nlls = list(scores) if scores is not None else nll_scores(phrases, provider)
    rank = math.ceil(percentile / 100.0 * len(nlls))  # 1-based nearest rank
    threshold = sorted(nlls)[rank - 1]
    kept = [(p, v) for p, v in zip(phrases, nlls) if v <= threshold]
    return [p for p, _ in kept], [v for _, v in kept]


def nli_label(phrases: Sequence[str], provider: ModelProvider) -> tuple[list[int], list[float]]:
    """Label 1 iff p_entailment > 0.5, strictly. Returns (labels, p_e)."""
    labels: list[int] = []
    pes: list[float] = []
    for phrase in phrases:
        probs = provider.nli(f"This is a picture of {phrase}.", HYPOTHESIS)
        pes.append(probs.entailment)
        labels.append(1 if probs.entailment > 0.5 else 0)
    return labels, pes


@dataclass(frozen=True)
class LabeledPhrase:
    phrase: str
    nll: float
    p_entailment: float
    label: int


def run_pipeline(
    verbs: Sequence[str],
    nouns: Sequence[str],
    n: int,
    seed: int,
    provider: ModelProvider,
    percentile: float = 20.0,
) -> list[LabeledPhrase]:
    """generate -> sample_n -> nll filter -> nli label, fully determined by
    (verbs, nouns, n, seed, provider seed)."""
    sampled = sample_n(generate(verbs, nouns), n, seed)
    kept, nlls = nll_percentile_filter(sampled, provider, percentile)
    labels, pes = nli_label(kept, provider)
    return [
        LabeledPhrase(phrase=p, nll=v, p_entailment=pe, label=lb)
        for p, v, pe, lb in zip(kept, nlls, pes, labels)
    ]


def write_jsonl(records: Sequence[LabeledPhrase], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "phrase": rec.phrase,
                        "nll": rec.nll,
                        "p_entailment": rec.p_entailment,
                        "label": rec.label,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
