"""Server side of the NDJSON model-provider protocol.

One JSON object per line, UTF-8, canonically encoded (sorted keys, compact
separators, raw UTF-8) so any recorded line re-encodes to itself. Requests
carry {"id": int, "op": str, ...}; responses echo the id with {"ok": true,
...} on success or {"ok": false, "error": "Name: message"} on failure, plus
an integer "index" field when the failure names one input. Ops:

  info          {}                              -> {name, embedding_dim, has_mask_token, mask_token, max_tokens}
  embed         {texts: [str]}                  -> {vectors: [[float]]}
  mlm_logprobs  {masked_text: str,
                 candidates: [str]}             -> {logprobs: [float]}
  token_count   {text: str}                     -> {count: int}
  sequence_nll  {texts: [str]}                  -> {nlls: [float]}
  nli           {premise: str, hypothesis: str} -> {p_contradiction, p_neutral, p_entailment}

This module is self-contained on purpose: the sidecar talks to the probing
engine only over this wire format, never through its Python API.
"""

from __future__ import annotations

import json

OPS = ("info", "embed", "mlm_logprobs", "token_count", "sequence_nll", "nli")


class ProviderFailure(Exception):
    """Base for failures that travel over the wire as "Name: message".

    The class name is the wire name, so subclasses must keep stable names.
    """


class ProviderError(ProviderFailure):
    pass


class ProtocolError(ProviderFailure):
    pass


class MaskUnavailable(ProviderFailure):
    pass


class EmptyText(ProviderFailure):
    pass


class MultiTokenCandidate(ProviderFailure):
    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"candidate at index {index} is not a single token")


class TooLong(ProviderFailure):
    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"text at index {index} exceeds max_tokens")


def encode_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def decode_line(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"bad JSON line: {e}") from e
    if not isinstance(obj, dict):
        raise ProtocolError("protocol messages must be JSON objects")
    return obj


def error_response(request_id, exc: Exception) -> dict:
    resp = {"id": request_id, "ok": False, "error": f"{type(exc).__name__}: {exc}"}
    index = getattr(exc, "index", None)
    if isinstance(index, int):
        resp["index"] = index
    return resp


def _texts(request: dict) -> list[str]:
    texts = request.get("texts")
    if not isinstance(texts, list) or any(not isinstance(t, str) for t in texts):
        raise ProtocolError("texts must be a list of strings")
    return texts


def dispatch_request(provider, request: dict) -> dict:
    """Answer one decoded request; provider failures become error responses."""
    request_id = request.get("id")
    try:
        if not isinstance(request_id, int):
            raise ProtocolError("request id must be an integer")
        op = request.get("op")
        if op == "info":
            info = provider.info()
            return {
                "id": request_id,
                "ok": True,
                "name": info.name,
                "embedding_dim": info.embedding_dim,
                "has_mask_token": info.has_mask_token,
                "mask_token": info.mask_token,
                "max_tokens": info.max_tokens,
            }
        if op == "embed":
            return {"id": request_id, "ok": True, "vectors": provider.embed(_texts(request))}
        if op == "mlm_logprobs":
            masked = request.get("masked_text")
            candidates = request.get("candidates")
            if not isinstance(masked, str) or not isinstance(candidates, list):
                raise ProtocolError("mlm_logprobs needs masked_text and candidates")
            return {
                "id": request_id,
                "ok": True,
                "logprobs": provider.mlm_logprobs(masked, candidates),
            }
        if op == "token_count":
            text = request.get("text")
            if not isinstance(text, str):
                raise ProtocolError("token_count needs text")
            return {"id": request_id, "ok": True, "count": provider.token_count(text)}
        if op == "sequence_nll":
            return {"id": request_id, "ok": True, "nlls": provider.sequence_nll(_texts(request))}
        if op == "nli":
            premise = request.get("premise")
            hypothesis = request.get("hypothesis")
            if not isinstance(premise, str) or not isinstance(hypothesis, str):
                raise ProtocolError("nli needs premise and hypothesis")
            p_c, p_n, p_e = provider.nli(premise, hypothesis)
            return {
                "id": request_id,
                "ok": True,
                "p_contradiction": p_c,
                "p_neutral": p_n,
                "p_entailment": p_e,
            }
        raise ProtocolError(f"unknown op {op!r}")
    except ProviderFailure as e:
        return error_response(request_id if isinstance(request_id, int) else None, e)


def serve(provider, reader, writer) -> None:
    """Answer requests from reader on writer until EOF, in arrival order.

    Survives anything the provider raises: unexpected exceptions become
    ProviderError-style error responses rather than killing the loop.
    """
    for raw in reader:
        line = raw.strip()
        if not line:
            continue
        try:
            request = decode_line(line)
        except ProtocolError as e:
            writer.write(encode_line(error_response(None, e)) + "\n")
            writer.flush()
            continue
        try:
            response = dispatch_request(provider, request)
        except Exception as e:
            rid = request.get("id")
            response = error_response(rid if isinstance(rid, int) else None, e)
        writer.write(encode_line(response) + "\n")
        writer.flush()
