"""Command-line entry point: load checkpoints, then serve the line protocol.

    vluprobe-sidecar --model bert-base-uncased
    vluprobe-sidecar --model openai/clip-vit-base-patch32 --pooling auto
    vluprobe-sidecar --model bert-base-uncased --transport tcp:9100
    vluprobe-sidecar --model bert-base-uncased --nll-model gpt2-large \
        --nli-model roberta-large-mnli

One process serves one embedding checkpoint. Requests are answered in the
order received over a single request-processing loop; the TCP transport
accepts one client at a time. Checkpoint loading happens before the first
request — a model that fails to load exits nonzero with the error on stderr.
"""

from __future__ import annotations

import argparse
import socket
import sys

from . import __version__
from .models import POOLINGS, CausalScorer, CheckpointProvider, NliScorer, TextModel
from .wire import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vluprobe-sidecar",
        description="Serve a transformer checkpoint over the text-probe line protocol.",
    )
    parser.add_argument("--model", required=True, help="checkpoint id or local path")
    parser.add_argument(
        "--pooling",
        choices=POOLINGS,
        default="auto",
        help="sentence embedding pooling (default: auto — the family default)",
    )
    parser.add_argument(
        "--transport",
        default="stdio",
        help="'stdio' (default) or 'tcp:PORT' to listen on 127.0.0.1:PORT",
    )
    parser.add_argument("--device", default="cpu", help="torch device (default: cpu)")
    parser.add_argument(
        "--nll-model", default=None, help="causal LM checkpoint backing sequence_nll"
    )
    parser.add_argument(
        "--nli-model", default=None, help="NLI classifier checkpoint backing nli"
    )
    parser.add_argument(
        "--name", default=None, help="provider name to report (default: model basename)"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def _parse_transport(spec: str):
    if spec == "stdio":
        return ("stdio", None)
    if spec.startswith("tcp:"):
        try:
            port = int(spec[len("tcp:") :])
        except ValueError:
            raise SystemExit(f"error: invalid tcp port in transport {spec!r}")
        if not 0 <= port <= 65535:
            raise SystemExit(f"error: tcp port out of range in transport {spec!r}")
        return ("tcp", port)
    raise SystemExit(f"error: unknown transport {spec!r} (use 'stdio' or 'tcp:PORT')")


def _serve_tcp(provider, port: int) -> None:
    with socket.create_server(("127.0.0.1", port)) as server:
        host, bound = server.getsockname()
        print(f"listening on {host}:{bound}", file=sys.stderr, flush=True)
        while True:
            conn, _ = server.accept()
            with conn:
                reader = conn.makefile("r", encoding="utf-8")
                writer = conn.makefile("w", encoding="utf-8")
                try:
                    serve(provider, reader, writer)
                except (BrokenPipeError, ConnectionResetError):
                    pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kind, port = _parse_transport(args.transport)

    try:  # keep stderr for real diagnostics, not tokenizer-length warnings
        from transformers.utils import logging as hf_logging

        hf_logging.set_verbosity_error()
        hf_logging.disable_progress_bar()
    except Exception:
        pass

    try:
        text_model = TextModel(
            args.model, pooling=args.pooling, device=args.device, name=args.name
        )
        nll = CausalScorer(args.nll_model, device=args.device) if args.nll_model else None
        nli = NliScorer(args.nli_model, device=args.device) if args.nli_model else None
    except Exception as exc:  # checkpoint problems must fail startup, not requests
        print(f"error: failed to load model: {exc}", file=sys.stderr)
        return 1
    provider = CheckpointProvider(text_model, nll_backend=nll, nli_backend=nli)

    try:
        if kind == "stdio":
            serve(provider, sys.stdin, sys.stdout)
        else:
            _serve_tcp(provider, port)
    except KeyboardInterrupt:
        return 130
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
