"""NDJSON wire protocol for model providers.

One JSON object per line, UTF-8. Requests carry {"id": int, "op": str, ...};
responses echo the id with {"ok": true, ...} on success or
{"ok": false, "error": "ErrorName: message"} on failure. Error responses may
carry an integer "index" field for per-text failures. Ops and payload fields:

  op "info"           request {}                                response {name, embedding_dim, has_mask_token, mask_token, max_tokens}
  op "embed"          request {texts: [str]}                    response {vectors: [[float]]}
  op "mlm_logprobs"   request {masked_text: str,
                               candidates: [str]}               response {logprobs: [float]}
  op "token_count"    request {text: str}                       response {count: int}
  op "sequence_nll"   request {texts: [str]}                    response {nlls: [float]}
  op "nli"            request {premise: str, hypothesis: str}   response {p_contradiction, p_neutral, p_entailment}

Lines are encoded canonically (sorted keys, no spaces, UTF-8 passthrough) so a
golden transcript line re-encodes to itself. A client may pipeline requests;
responses are matched by id, in any order. Transports: a child process's
standard streams, or a TCP socket.

A golden transcript file alternates request and response lines and drives the
conformance suite for any provider implementation.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
from typing import Sequence

from .errors import (
    EmptyText,
    MaskUnavailable,
    MultiTokenCandidate,
    ProbeError,
    ProtocolError,
    ProviderError,
    TooLong,
)
from .providers import ModelProvider, NliProbs, ProviderInfo

OPS = ("info", "embed", "mlm_logprobs", "token_count", "sequence_nll", "nli")

_INDEXED_ERRORS = {"MultiTokenCandidate": MultiTokenCandidate, "TooLong": TooLong}
_PLAIN_ERRORS = {
    "MaskUnavailable": MaskUnavailable,
    "EmptyText": EmptyText,
    "ProtocolError": ProtocolError,
    "ProviderError": ProviderError,
}


def encode_line(obj: dict) -> str:
    """Canonical encoding: sorted keys, compact separators, raw UTF-8."""
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


def raise_from_error(resp: dict) -> None:
    """Rebuild the typed exception a failure response describes."""
    message = resp.get("error", "unknown provider error")
    name, _, detail = message.partition(":")
    name = name.strip()
    detail = detail.strip() or message
    if name in _INDEXED_ERRORS:
        raise _INDEXED_ERRORS[name](int(resp.get("index", -1)), detail)
    raise _PLAIN_ERRORS.get(name, ProviderError)(detail)


def dispatch_request(provider: ModelProvider, request: dict) -> dict:
    """Run one decoded request against a local provider object.

    Shared by every server loop and by the conformance replayer; never raises
    for provider-level failures (they become error responses).
    """
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
            vectors = provider.embed(_texts(request))
            return {"id": request_id, "ok": True, "vectors": vectors}
        if op == "mlm_logprobs":
            masked = request.get("masked_text")
            candidates = request.get("candidates")
            if not isinstance(masked, str) or not isinstance(candidates, list):
                raise ProtocolError("mlm_logprobs needs masked_text and candidates")
            logprobs = provider.mlm_logprobs(masked, candidates)
            return {"id": request_id, "ok": True, "logprobs": logprobs}
        if op == "token_count":
            text = request.get("text")
            if not isinstance(text, str):
                raise ProtocolError("token_count needs text")
            return {"id": request_id, "ok": True, "count": provider.token_count(text)}
        if op == "sequence_nll":
            nlls = provider.sequence_nll(_texts(request))
            return {"id": request_id, "ok": True, "nlls": nlls}
        if op == "nli":
            premise = request.get("premise")
            hypothesis = request.get("hypothesis")
            if not isinstance(premise, str) or not isinstance(hypothesis, str):
                raise ProtocolError("nli needs premise and hypothesis")
            probs = provider.nli(premise, hypothesis)
            return {
                "id": request_id,
                "ok": True,
                "p_contradiction": probs.contradiction,
                "p_neutral": probs.neutral,
                "p_entailment": probs.entailment,
            }
        raise ProtocolError(f"unknown op {op!r}")
    except ProbeError as e:
        return error_response(request_id if isinstance(request_id, int) else None, e)


def _texts(request: dict) -> list[str]:
    texts = request.get("texts")
    if not isinstance(texts, list) or any(not isinstance(t, str) for t in texts):
        raise ProtocolError("texts must be a list of strings")
    return texts


def serve(provider: ModelProvider, reader, writer) -> None:
    """Answer NDJSON requests from reader on writer until EOF."""
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
        except Exception as e:  # a provider bug must not kill the loop
            rid = request.get("id")
            response = error_response(rid if isinstance(rid, int) else None, e)
        writer.write(encode_line(response) + "\n")
        writer.flush()


class RemoteProvider:
    """ModelProvider over an NDJSON transport (child process or TCP).

    Not thread-safe: one connection serves one logical client. Run several
    connections for parallelism.
    """

    def __init__(self, transport):
        self._transport = transport
        self._next_id = 0
        self._pending: dict[int, dict] = {}

    # -- transport plumbing -------------------------------------------------
    def _call(self, op: str, **fields) -> dict:
        request_id = self._next_id
        self._next_id += 1
        request = {"id": request_id, "op": op, **fields}
        self._transport.send_line(encode_line(request))
        resp = self._receive(request_id)
        if resp.get("ok") is not True:
            raise_from_error(resp)
        return resp

    def _receive(self, request_id: int) -> dict:
        if request_id in self._pending:
            return self._pending.pop(request_id)
        while True:
            line = self._transport.recv_line()
            if line is None:
                raise ProtocolError("connection closed while awaiting response")
            if not line.strip():
                continue
            resp = decode_line(line)
            rid = resp.get("id")
            if rid == request_id:
                return resp
            if isinstance(rid, int):
                self._pending[rid] = resp
            else:
                # A response the server could not attribute to any request.
                raise_from_error(resp)

    # -- provider surface ----------------------------------------------------
    def info(self) -> ProviderInfo:
        resp = self._call("info")
        try:
            return ProviderInfo(
                name=resp["name"],
                embedding_dim=resp["embedding_dim"],
                has_mask_token=resp["has_mask_token"],
                mask_token=resp["mask_token"],
                max_tokens=resp["max_tokens"],
            )
        except KeyError as e:
            raise ProtocolError(f"info response missing field {e}") from e

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        resp = self._call("embed", texts=list(texts))
        vectors = resp.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProtocolError("embed response misaligned with request")
        return vectors

    def mlm_logprobs(self, masked_text: str, candidates: Sequence[str]) -> list[float]:
        resp = self._call("mlm_logprobs", masked_text=masked_text, candidates=list(candidates))
        logprobs = resp.get("logprobs")
        if not isinstance(logprobs, list) or len(logprobs) != len(candidates):
            raise ProtocolError("mlm_logprobs response misaligned with request")
        return logprobs

    def token_count(self, text: str) -> int:
        resp = self._call("token_count", text=text)
        count = resp.get("count")
        if not isinstance(count, int):
            raise ProtocolError("token_count response missing count")
        return count

    def sequence_nll(self, texts: Sequence[str]) -> list[float]:
        resp = self._call("sequence_nll", texts=list(texts))
        nlls = resp.get("nlls")
        if not isinstance(nlls, list) or len(nlls) != len(texts):
            raise ProtocolError("sequence_nll response misaligned with request")
        return nlls

    def nli(self, premise: str, hypothesis: str) -> NliProbs:
        resp = self._call("nli", premise=premise, hypothesis=hypothesis)
        try:
            return NliProbs(
                contradiction=resp["p_contradiction"],
                neutral=resp["p_neutral"],
                entailment=resp["p_entailment"],
            )
        except KeyError as e:
            raise ProtocolError(f"nli response missing field {e}") from e

    def close(self) -> None:
        self._transport.close()


class StdioTransport:
    """Runs a provider as a child process and speaks NDJSON on its stdio."""

    def __init__(self, cmd: str | Sequence[str]):
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )

    def send_line(self, line: str) -> None:
        if self._proc.stdin is None:
            raise ProtocolError("child stdin closed")
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as e:
            raise ProtocolError(f"child process went away: {e}") from e

    def recv_line(self) -> str | None:
        if self._proc.stdout is None:
            return None
        line = self._proc.stdout.readline()
        return line if line else None

    def close(self) -> None:
        if self._proc.stdin:
            try:
                self._proc.stdin.close()
            except (OSError, ValueError):
                pass  # child already gone; nothing left to flush
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class TcpTransport:
    def __init__(self, host: str, port: int):
        try:
            self._sock = socket.create_connection((host, port), timeout=30)
        except OSError as e:
            raise ProtocolError(f"cannot connect to {host}:{port}: {e}") from e
        self._reader = self._sock.makefile("r", encoding="utf-8")
        self._writer = self._sock.makefile("w", encoding="utf-8")

    def send_line(self, line: str) -> None:
        try:
            self._writer.write(line + "\n")
            self._writer.flush()
        except OSError as e:
            raise ProtocolError(f"connection lost: {e}") from e

    def recv_line(self) -> str | None:
        line = self._reader.readline()
        return line if line else None

    def close(self) -> None:
        try:
            self._writer.close()
            self._reader.close()
        finally:
            self._sock.close()


def read_transcript(path) -> list[tuple[dict, dict]]:
    """Parse a golden transcript: alternating request and response lines."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if len(lines) % 2 != 0:
        raise ProtocolError("transcript must alternate request/response lines")
    for i in range(0, len(lines), 2):
        pairs.append((decode_line(lines[i]), decode_line(lines[i + 1])))
    return pairs


def payload_close(expected, actual, float_tol: float = 0.0) -> bool:
    """Structural equality with optional absolute tolerance on numbers."""
    if isinstance(expected, bool) or isinstance(actual, bool):
        return expected == actual
    if isinstance(expected, (int, float)) and isinstance(actual, (int, float)):
        return abs(float(expected) - float(actual)) <= float_tol
    if isinstance(expected, list) and isinstance(actual, list):
        return len(expected) == len(actual) and all(
            payload_close(e, a, float_tol) for e, a in zip(expected, actual)
        )
    if isinstance(expected, dict) and isinstance(actual, dict):
        return expected.keys() == actual.keys() and all(
            payload_close(v, actual[k], float_tol) for k, v in expected.items()
        )
    return expected == actual
