#!/usr/bin/env python3
"""Regenerate the checked-in golden files under tests/goldens/.

Every golden is produced deterministically from the seeded mock provider and
the fixtures under tests/fixtures/, so reruns must be byte-identical. Run from
the repository root:

    python3 scripts/record_goldens.py
"""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
GOLDENS = ROOT / "tests" / "goldens"
FIXTURES = ROOT / "tests" / "fixtures"

from vluprobe.cli import main as cli_main  # noqa: E402
from vluprobe.protocol import dispatch_request, encode_line  # noqa: E402
from vluprobe.providers import MockProvider  # noqa: E402


def record_protocol_transcript() -> None:
    provider = MockProvider(dim=8, seed=0)
    requests = [
        {"id": 0, "op": "info"},
        {"id": 1, "op": "embed", "texts": ["red", "blue"]},
        {"id": 2, "op": "mlm_logprobs", "masked_text": "the sky is [MASK]", "candidates": ["blue", "red"]},
        {"id": 3, "op": "token_count", "text": "saudi arabia"},
        {"id": 4, "op": "sequence_nll", "texts": ["hello world"]},
        {"id": 5, "op": "nli", "premise": "a cat", "hypothesis": "an animal"},
        {"id": 6, "op": "embed", "texts": ["ok", ""]},
        {"id": 7, "op": "mlm_logprobs", "masked_text": "no mask here", "candidates": ["x"]},
    ]
    lines = []
    for request in requests:
        response = dispatch_request(provider, request)
        lines.append(encode_line(request))
        lines.append(encode_line(response))
    path = GOLDENS / "protocol_transcript.ndjson"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path.relative_to(ROOT)} ({len(requests)} request/response pairs)")


def _run_cli(argv: list[str]) -> None:
    code = cli_main(argv)
    if code != 0:
        raise SystemExit(f"golden command failed with exit code {code}: {argv}")


def record_run_goldens() -> None:
    _run_cli(
        [
            "run",
            str(FIXTURES / "task_color.json"),
            "--provider",
            "mock:dim=8,seed=0",
            "--out",
            str(GOLDENS / "run_color_results.json"),
            "--markdown",
            str(GOLDENS / "run_color_table.md"),
            "--scores",
            str(GOLDENS / "run_color_scores.jsonl"),
        ]
    )
    _run_cli(
        [
            "run",
            str(FIXTURES / "task_color_mlm.json"),
            "--provider",
            "mock:dim=8,seed=0",
            "--out",
            str(GOLDENS / "run_color_mlm_results.json"),
        ]
    )
    print("wrote run_color_{results.json,table.md,scores.jsonl} and run_color_mlm_results.json")


def record_bias_golden() -> None:
    _run_cli(
        [
            "bias",
            "--corpus",
            str(FIXTURES / "bias_corpus.txt"),
            "--colors",
            str(FIXTURES / "bias_colors.txt"),
            "--targets",
            str(FIXTURES / "bias_targets.txt"),
            "--out",
            str(GOLDENS / "bias_counts.tsv"),
        ]
    )
    print("wrote bias_counts.tsv")


def record_groundgen_golden() -> None:
    _run_cli(
        [
            "groundgen",
            "--verbs",
            str(FIXTURES / "verbs.txt"),
            "--nouns",
            str(FIXTURES / "nouns.txt"),
            "--n",
            "10",
            "--seed",
            "3",
            "--percentile",
            "20",
            "--provider",
            "mock:dim=8,seed=0",
            "--out",
            str(GOLDENS / "groundgen_labeled.jsonl"),
        ]
    )
    print("wrote groundgen_labeled.jsonl")


def main() -> int:
    GOLDENS.mkdir(parents=True, exist_ok=True)
    record_protocol_transcript()
    record_run_goldens()
    record_bias_golden()
    record_groundgen_golden()
    return 0


if __name__ == "__main__":
    sys.exit(main())
