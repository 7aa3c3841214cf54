"""Transformer checkpoint wrappers behind the provider surface.

One process serves one embedding checkpoint, optionally joined by a causal-LM
checkpoint for sequence NLL and an NLI-tuned classifier for entailment
probabilities. All models run frozen, in eval mode, under no_grad, so
repeated requests are deterministic.

Architecture is chosen from the checkpoint config:

- CLIP-family text towers (`model_type` clip / clip_text_model) load
  `CLIPTextModelWithProjection`; they report has_mask_token=false and their
  default pooling is the projected text embedding.
- FLAVA checkpoints load `FlavaTextModel` (pooler output available).
- Checkpoints whose tokenizer defines a mask token load
  `AutoModelForMaskedLM`, enabling the mlm_logprobs op; embeddings pool the
  final hidden states.
- Everything else loads the bare `AutoModel`.

Pooling choices: `auto` (family default: CLIP projection, else pooler output
when the model produces one, else masked mean), `mean` (attention-masked mean
of the final hidden states), `cls` (first-token hidden state), `pooler`
(the model's pooler output). Embeddings are returned unnormalized; the
probing side normalizes when it needs directions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch

from .wire import (
    EmptyText,
    MaskUnavailable,
    MultiTokenCandidate,
    ProviderError,
    TooLong,
)

POOLINGS = ("auto", "mean", "cls", "pooler")

_SANE_LENGTH = 100_000  # tokenizer.model_max_length sentinel values exceed this


@dataclass(frozen=True)
class Info:
    name: str
    embedding_dim: int
    has_mask_token: bool
    mask_token: str | None
    max_tokens: int


def _default_name(model_id: str) -> str:
    return Path(str(model_id)).name or str(model_id)


def _max_tokens(config, tokenizer) -> int:
    candidates = []
    for attr in ("max_position_embeddings", "n_positions"):
        value = getattr(config, attr, None)
        if isinstance(value, int) and 0 < value < _SANE_LENGTH:
            candidates.append(value)
    length = getattr(tokenizer, "model_max_length", None)
    if isinstance(length, int) and 0 < length < _SANE_LENGTH:
        candidates.append(length)
    if not candidates:
        raise ProviderError("cannot determine the model's maximum input length")
    return min(candidates)


def _check_nonempty(texts) -> None:
    for text in texts:
        if not text.strip():
            raise EmptyText("empty or whitespace-only text")


class TextModel:
    """Embeddings, token counts, and (when available) masked-LM scoring."""

    def __init__(self, model_id: str, pooling: str = "auto", device: str = "cpu", name=None):
        from transformers import AutoConfig, AutoTokenizer

        if pooling not in POOLINGS:
            raise ProviderError(f"unknown pooling {pooling!r}; choose from {POOLINGS}")
        self._pooling = pooling
        self._device = torch.device(device)
        self._name = name or _default_name(model_id)

        config = AutoConfig.from_pretrained(model_id)
        model_type = getattr(config, "model_type", "")
        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        if self._tokenizer.pad_token is None:
            # Padding positions are masked out of pooling, so any token works.
            fallback = self._tokenizer.eos_token or self._tokenizer.sep_token
            if fallback is not None:
                self._tokenizer.pad_token = fallback
        self._family = "encoder"
        if model_type in ("clip", "clip_text_model"):
            from transformers import CLIPTextModelWithProjection

            self._model = CLIPTextModelWithProjection.from_pretrained(model_id)
            self._family = "clip"
            text_config = getattr(config, "text_config", config)
            if pooling in ("auto", "pooler"):  # projected text embedding
                self._dim = self._model.config.projection_dim
            else:  # mean/cls pool the pre-projection hidden states
                self._dim = text_config.hidden_size
            self._max_tokens = _max_tokens(text_config, self._tokenizer)
        elif model_type == "flava":
            from transformers import FlavaTextModel

            self._model = FlavaTextModel.from_pretrained(model_id)
            text_config = getattr(config, "text_config", config)
            self._dim = getattr(text_config, "hidden_size")
            self._max_tokens = _max_tokens(text_config, self._tokenizer)
        elif self._tokenizer.mask_token is not None:
            from transformers import AutoModelForMaskedLM

            self._model = AutoModelForMaskedLM.from_pretrained(model_id)
            self._family = "mlm"
            self._dim = config.hidden_size
            self._max_tokens = _max_tokens(config, self._tokenizer)
        else:
            from transformers import AutoModel

            self._model = AutoModel.from_pretrained(model_id)
            self._dim = config.hidden_size
            self._max_tokens = _max_tokens(config, self._tokenizer)
        self._model.to(self._device)
        self._model.eval()

    # -- provider surface ------------------------------------------------------

    def info(self) -> Info:
        mask = None if self._family == "clip" else self._tokenizer.mask_token
        return Info(
            name=self._name,
            embedding_dim=self._dim,
            has_mask_token=mask is not None,
            mask_token=mask,
            max_tokens=self._max_tokens,
        )

    def embed(self, texts: list[str]) -> list[list[float]]:
        _check_nonempty(texts)
        self._check_lengths(texts)
        batch = self._tokenizer(
            list(texts), padding=True, truncation=False, return_tensors="pt"
        ).to(self._device)
        with torch.no_grad():
            if self._family == "mlm":
                output = self._model(**batch, output_hidden_states=True)
                hidden = output.hidden_states[-1]
                pooler = None
            else:
                output = self._model(**batch)
                hidden = getattr(output, "last_hidden_state", None)
                pooler = getattr(output, "pooler_output", None)
            pooled = self._pool(output, hidden, pooler, batch.get("attention_mask"))
        return [[float(x) for x in row] for row in pooled.cpu()]

    def mlm_logprobs(self, masked_text: str, candidates: list[str]) -> list[float]:
        if self._family != "mlm":
            raise MaskUnavailable(f"model {self._name!r} has no mask token")
        _check_nonempty([masked_text])
        self._check_lengths([masked_text])
        candidate_ids = [self._single_token_id(c, i) for i, c in enumerate(candidates)]
        batch = self._tokenizer(masked_text, return_tensors="pt").to(self._device)
        mask_positions = (
            (batch["input_ids"][0] == self._tokenizer.mask_token_id).nonzero().flatten()
        )
        if len(mask_positions) != 1:
            raise ProviderError(
                f"expected exactly one mask token, found {len(mask_positions)}"
            )
        with torch.no_grad():
            logits = self._model(**batch).logits[0, mask_positions[0]]
            logprobs = torch.log_softmax(logits, dim=-1)
        return [float(logprobs[cid]) for cid in candidate_ids]

    def token_count(self, text: str) -> int:
        _check_nonempty([text])
        ids = self._tokenizer(text, add_special_tokens=False)["input_ids"]
        if not ids:
            raise ProviderError(f"text tokenized to nothing: {text!r}")
        return len(ids)

    # -- internals ---------------------------------------------------------------

    def _check_lengths(self, texts) -> None:
        for i, text in enumerate(texts):
            n = len(self._tokenizer(text, truncation=False)["input_ids"])
            if n > self._max_tokens:
                raise TooLong(i, f"text at index {i} is {n} tokens (max {self._max_tokens})")

    def _single_token_id(self, candidate: str, index: int) -> int:
        ids = self._tokenizer(candidate, add_special_tokens=False)["input_ids"]
        if len(ids) == 1:
            return ids[0]
        # Byte-BPE vocabularies key mid-sentence words on a leading space.
        spaced = self._tokenizer(" " + candidate, add_special_tokens=False)["input_ids"]
        if len(spaced) == 1:
            return spaced[0]
        raise MultiTokenCandidate(index, f"{candidate!r} is not a single token")

    def _pool(self, output, hidden, pooler, attention_mask):
        pooling = self._pooling
        if pooling == "auto":
            if self._family == "clip":
                return output.text_embeds
            if pooler is not None:
                return pooler
            pooling = "mean"
        if pooling == "pooler":
            if self._family == "clip":
                return output.text_embeds
            if pooler is None:
                raise ProviderError(f"model {self._name!r} produces no pooler output")
            return pooler
        if hidden is None:
            raise ProviderError(f"model {self._name!r} exposes no hidden states to pool")
        if pooling == "cls":
            return hidden[:, 0]
        if attention_mask is None:
            return hidden.mean(dim=1)
        mask = attention_mask.unsqueeze(-1).to(hidden.dtype)
        return (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)


class CausalScorer:
    """Sequence NLL under a causal language model."""

    def __init__(self, model_id: str, device: str = "cpu"):
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModelForCausalLM.from_pretrained(model_id)
        self._max_tokens = _max_tokens(self._model.config, self._tokenizer)
        self._device = torch.device(device)
        self._model.to(self._device)
        self._model.eval()

    def sequence_nll(self, texts: list[str]) -> list[float]:
        _check_nonempty(texts)
        out = []
        for i, text in enumerate(texts):
            ids = self._tokenizer(text, truncation=False, return_tensors="pt")["input_ids"]
            if ids.shape[1] > self._max_tokens:
                raise TooLong(i, f"text at index {i} is {ids.shape[1]} tokens")
            if ids.shape[1] < 2:
                out.append(0.0)  # nothing is conditionally predicted
                continue
            ids = ids.to(self._device)
            with torch.no_grad():
                logits = self._model(input_ids=ids).logits[0]
            logprobs = torch.log_softmax(logits[:-1], dim=-1)
            targets = ids[0, 1:]
            picked = logprobs[torch.arange(targets.shape[0]), targets]
            out.append(float(-picked.sum()))
        return out


class NliScorer:
    """(p_contradiction, p_neutral, p_entailment) from an NLI classifier."""

    def __init__(self, model_id: str, device: str = "cpu"):
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModelForSequenceClassification.from_pretrained(model_id)
        self._max_tokens = _max_tokens(self._model.config, self._tokenizer)
        self._device = torch.device(device)
        self._model.to(self._device)
        self._model.eval()
        by_name = {str(v).lower(): k for k, v in self._model.config.id2label.items()}
        try:
            self._order = tuple(by_name[k] for k in ("contradiction", "neutral", "entailment"))
        except KeyError as e:
            raise ProviderError(
                f"NLI model labels {sorted(by_name)} do not name contradiction/neutral/entailment"
            ) from e

    def nli(self, premise: str, hypothesis: str) -> tuple[float, float, float]:
        _check_nonempty([premise, hypothesis])
        batch = self._tokenizer(premise, hypothesis, truncation=False, return_tensors="pt")
        if batch["input_ids"].shape[1] > self._max_tokens:
            raise TooLong(0, "premise/hypothesis pair exceeds max_tokens")
        batch = batch.to(self._device)
        with torch.no_grad():
            probs = torch.softmax(self._model(**batch).logits[0], dim=-1)
        c, n, e = (float(probs[i]) for i in self._order)
        return c, n, e


class CheckpointProvider:
    """The provider surface: one text model plus optional NLL/NLI backends."""

    def __init__(self, text_model: TextModel, nll_backend=None, nli_backend=None):
        self._text = text_model
        self._nll = nll_backend
        self._nli = nli_backend

    def info(self):
        return self._text.info()

    def embed(self, texts):
        return self._text.embed(texts)

    def mlm_logprobs(self, masked_text, candidates):
        return self._text.mlm_logprobs(masked_text, candidates)

    def token_count(self, text):
        return self._text.token_count(text)

    def sequence_nll(self, texts):
        if self._nll is None:
            raise ProviderError("no NLL model configured (start with --nll-model)")
        return self._nll.sequence_nll(texts)

    def nli(self, premise, hypothesis):
        if self._nli is None:
            raise ProviderError("no NLI model configured (start with --nli-model)")
        return self._nli.nli(premise, hypothesis)
