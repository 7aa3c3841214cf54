"""Model provider abstraction and the deterministic mock provider.

A provider exposes six operations over a text encoder (and optional companion
models): info, embed, mlm_logprobs, token_count, sequence_nll, nli. Remote
providers speak the NDJSON protocol in vluprobe.protocol; the mock below is a
pure function of (dim, seed, inputs) so every test in this package, and any
conforming implementation in another language, reproduces identical bits.

Mock value derivation (frozen contract):

- embed(text): components are drawn from a SplitMix64 stream seeded with
  seed XOR fnv1a64(utf8(text)); each uniform u in [0,1) maps to 2u - 1; the
  dim-vector is then L2-normalized.
- mlm_logprobs(masked_text, candidate): -10 * u where u is the first uniform
  from the stream seeded with seed XOR fnv1a64(utf8(masked_text) || 0x1F ||
  utf8(candidate)).
- sequence_nll(text): 100 * u, first uniform from the stream seeded with
  seed XOR fnv1a64(utf8(text)).
- nli(premise, hypothesis): softmax over (-10*u1, -10*u2, -10*u3), the first
  three uniforms from the stream seeded with seed XOR fnv1a64(utf8(premise) ||
  0x1F || utf8(hypothesis)); returned in order (contradiction, neutral,
  entailment).
- token_count(text): whitespace-delimited word count; empty or whitespace-only
  text is an EmptyText error.
- info(): name "mock", embedding_dim dim, has_mask_token true, mask_token
  "[MASK]", max_tokens 64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from .errors import EmptyText, MaskUnavailable, MultiTokenCandidate, TooLong
from .rng import stream_for


@dataclass(frozen=True)
class ProviderInfo:
    name: str
    embedding_dim: int
    has_mask_token: bool
    mask_token: str | None
    max_tokens: int


@dataclass(frozen=True)
class NliProbs:
    """MNLI-style class probabilities; must sum to 1 within tolerance."""

    contradiction: float
    neutral: float
    entailment: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.contradiction, self.neutral, self.entailment)


@runtime_checkable
class ModelProvider(Protocol):
    """The six-operation surface every provider implements.

    embed and sequence_nll are batch operations; per-text failures carry the
    failing index. Implementations are deterministic for fixed construction
    parameters.
    """

    def info(self) -> ProviderInfo: ...

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...

    def mlm_logprobs(self, masked_text: str, candidates: Sequence[str]) -> list[float]: ...

    def token_count(self, text: str) -> int: ...

    def sequence_nll(self, texts: Sequence[str]) -> list[float]: ...

    def nli(self, premise: str, hypothesis: str) -> NliProbs: ...

    def close(self) -> None: ...


class MockProvider:
    """Fully deterministic provider; see the module docstring for the bit
    contract. Thread-safe: all operations are pure functions of the inputs."""

    def __init__(self, dim: int = 8, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self._dim = dim
        self._seed = seed

    def info(self) -> ProviderInfo:
        return ProviderInfo(
            name="mock",
            embedding_dim=self._dim,
            has_mask_token=True,
            mask_token="[MASK]",
            max_tokens=64,
        )

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for i, text in enumerate(texts):
            self._check_text(text, i)
            rng = stream_for(self._seed, text.encode("utf-8"))
            raw = [2.0 * rng.next_float() - 1.0 for _ in range(self._dim)]
            norm = math.sqrt(sum(c * c for c in raw))
            out.append([c / norm for c in raw])
        return out

    def mlm_logprobs(self, masked_text: str, candidates: Sequence[str]) -> list[float]:
        if masked_text.count("[MASK]") != 1:
            raise MaskUnavailable("masked_text must contain exactly one [MASK]")
        logps = []
        for i, cand in enumerate(candidates):
            if self.token_count(cand) != 1:
                raise MultiTokenCandidate(i)
            rng = stream_for(self._seed, masked_text.encode("utf-8"), cand.encode("utf-8"))
            logps.append(-10.0 * rng.next_float())
        return logps

    def token_count(self, text: str) -> int:
        words = text.split()
        if not words:
            raise EmptyText("cannot tokenize empty text")
        return len(words)

    def sequence_nll(self, texts: Sequence[str]) -> list[float]:
        out = []
        for i, text in enumerate(texts):
            self._check_text(text, i)
            rng = stream_for(self._seed, text.encode("utf-8"))
            out.append(100.0 * rng.next_float())
        return out

    def nli(self, premise: str, hypothesis: str) -> NliProbs:
        if not premise.strip() or not hypothesis.strip():
            raise EmptyText("nli inputs must be non-empty")
        rng = stream_for(self._seed, premise.encode("utf-8"), hypothesis.encode("utf-8"))
        logits = [-10.0 * rng.next_float() for _ in range(3)]
        m = max(logits)
        exps = [math.exp(v - m) for v in logits]
        z = sum(exps)
        return NliProbs(exps[0] / z, exps[1] / z, exps[2] / z)

    def close(self) -> None:
        pass

    def _check_text(self, text: str, index: int) -> None:
        if not text.strip():
            raise EmptyText(f"text at index {index} is empty")
        if len(text.split()) > self.info().max_tokens:
            raise TooLong(index)
