"""Command-line orchestration.

Subcommands:
- run        score a task file against a provider, emit results JSON + table
- bias       stream a corpus through the color bigram counter
- groundgen  generate NLL-filtered, NLI-labeled groundability phrases
- linprobe   logistic-regression probe over cached or fresh embeddings
- serve-mock speak the NDJSON provider protocol for the seeded mock model

Provider spec grammar (uniform across commands):
    mock:dim=D,seed=S      in-process mock provider (defaults dim=8, seed=0)
    stdio:cmd="..."        child process speaking NDJSON on its stdio
    tcp:HOST:PORT          NDJSON over a TCP connection

Exit codes: 0 success, 2 validation error (bad flags, unreadable or invalid
inputs), 3 provider failure (connection loss, protocol violation, a prompt
losing every item). Diagnostics go to stderr as `error: Name: message`.

Results JSON files carry `"schema": 1` and are dumped with sorted keys and
two-space indentation, so identical inputs give byte-identical outputs.

Environment: PROBE_CACHE_DIR names a directory for embedding-cache JSONL
files; `linprobe` uses it when --cache is not given. No other variables are
consulted.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
import threading
from pathlib import Path

import jsonschema

from . import bias as bias_mod
from . import groundgen, linprobe, protocol
from .datasets import load_color, load_mnli, task_from_config
from .errors import ProbeError, PromptFailure, ProtocolError, ProviderError
from .metrics import bootstrap_ci, roc_auc
from .providers import MockProvider
from .tasks import TaskResult, run_task

SCHEMA_VERSION = 1

#: Short metric names accepted by --metric, resolved before running.
METRIC_ALIASES = {
    "acc": "accuracy",
    "acc_ctd": "accuracy",
    "acc_ncd": "accuracy",
    "acc_shape": "accuracy",
    "acc_sent": "accuracy",
    "cbt_p": "accuracy",
    "r": "pearson",
    "rho": "spearman",
    "tau": "kendall_tau_b",
    "r@1": "recall@1",
    "r@5": "recall@5",
    "r@10": "recall@10",
}

_SLOT_POLICY_SCHEMA = {
    "oneOf": [
        {"enum": ["remove_slot", "provider_mask"]},
        {
            "type": "object",
            "required": ["filler"],
            "additionalProperties": False,
            "properties": {"filler": {"type": "string", "minLength": 1}},
        },
    ]
}

TASK_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "kind", "method", "metrics", "dataset"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "kind": {"enum": ["regression", "categorical", "retrieval", "binary"]},
        "method": {"enum": ["sp", "mlm"]},
        "metrics": {
            "type": "array",
            "items": {"type": "string", "minLength": 1},
            "minItems": 1,
        },
        "dataset": {
            "type": "object",
            "required": ["format", "path"],
            "additionalProperties": False,
            "properties": {
                "format": {
                    "enum": ["concreteness", "color", "shapeit", "cities", "cbt", "imdb"]
                },
                "path": {"type": "string", "minLength": 1},
                "variant": {"enum": ["ctd", "ncd"]},
                "group": {"enum": ["N", "V", "P"]},
                "seed": {"type": "integer"},
            },
        },
        "prompts": {
            "type": "object",
            "required": ["file"],
            "additionalProperties": False,
            "properties": {
                "file": {"type": "string", "minLength": 1},
                "slot_policy": _SLOT_POLICY_SCHEMA,
                "candidate_forms": {
                    "type": "array",
                    "items": {"enum": ["noun", "adjective"]},
                    "minItems": 1,
                },
            },
        },
        "candidates": {
            "type": "array",
            "items": {"type": "string", "minLength": 1},
            "minItems": 1,
        },
        "slot_policy": _SLOT_POLICY_SCHEMA,
        "filter_with_provider": {"type": "boolean"},
        "bootstrap": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_boot": {"type": "integer", "minimum": 1},
                "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "seed": {"type": "integer"},
            },
        },
    },
}

_VALIDATION_EXIT = 2
_PROVIDER_EXIT = 3


class _CliValidation(Exception):
    """Input problem surfaced by the CLI itself (exit 2)."""


def parse_provider_spec(spec: str):
    """Zero-argument provider factory from a provider spec string.

    A factory (rather than an instance) lets --jobs N open one connection per
    worker.
    """
    if spec == "mock" or spec.startswith("mock:"):
        params = {"dim": 8, "seed": 0}
        rest = spec.partition(":")[2]
        if rest:
            for part in rest.split(","):
                key, sep, value = part.partition("=")
                if not sep or key not in params:
                    raise _CliValidation(f"bad mock parameter {part!r}")
                try:
                    params[key] = int(value)
                except ValueError as e:
                    raise _CliValidation(f"bad mock parameter {part!r}") from e
        return lambda: MockProvider(dim=params["dim"], seed=params["seed"])
    if spec.startswith("stdio:"):
        rest = spec[len("stdio:") :]
        key, sep, cmd = rest.partition("=")
        if key != "cmd" or not sep:
            raise _CliValidation('stdio spec must look like stdio:cmd="..."')
        if len(cmd) >= 2 and cmd[0] == cmd[-1] and cmd[0] in "\"'":
            cmd = cmd[1:-1]
        if not cmd.strip():
            raise _CliValidation("stdio spec has an empty command")
        return lambda: protocol.RemoteProvider(protocol.StdioTransport(cmd))
    if spec.startswith("tcp:"):
        rest = spec[len("tcp:") :]
        host, sep, port_text = rest.rpartition(":")
        if not sep or not host:
            raise _CliValidation("tcp spec must look like tcp:HOST:PORT")
        try:
            port = int(port_text)
        except ValueError as e:
            raise _CliValidation(f"bad tcp port {port_text!r}") from e
        return lambda: protocol.RemoteProvider(protocol.TcpTransport(host, port))
    raise _CliValidation(f"unknown provider spec {spec!r}")


def _resolve_metrics(names):
    out = []
    for name in names:
        resolved = METRIC_ALIASES.get(name, name)
        if resolved not in out:
            out.append(resolved)
    return out


def _load_task_config(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as e:
        raise _CliValidation(f"cannot read task file: {e}") from e
    except json.JSONDecodeError as e:
        raise _CliValidation(f"task file is not valid JSON: {e}") from e
    try:
        jsonschema.validate(config, TASK_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise _CliValidation(f"task file invalid at {where}: {e.message}") from e
    return config


def _dump_json(payload: dict, path) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def _report_payload(report) -> dict:
    return {
        "per_prompt": dict(sorted(report.per_prompt.items())),
        "max": report.max,
        "mean": report.mean,
        "std": report.std,
        "ci": list(report.ci) if report.ci is not None else None,
        "ci_level": report.ci_level,
    }


def _results_payload(result: TaskResult, provider_info) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "task": result.name,
        "kind": result.kind,
        "method": result.method,
        "provider": {
            "name": provider_info.name,
            "embedding_dim": provider_info.embedding_dim,
        },
        "prompts": result.prompt_bodies,
        "metrics": {name: _report_payload(rep) for name, rep in result.reports.items()},
        "skipped": result.skipped,
    }


def _markdown_table(result: TaskResult) -> str:
    lines = [
        "| task | method | metric | max | mean | std |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for name in sorted(result.reports):
        rep = result.reports[name]
        lines.append(
            f"| {result.name} | {result.method} | {name} "
            f"| {rep.max:.4f} | {rep.mean:.4f} | {rep.std:.4f} |"
        )
    return "\n".join(lines) + "\n"


def _write_scores(result: TaskResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t_idx, table in enumerate(result.tables):
            pid = f"p{t_idx:02d}"
            for i, item in enumerate(table.items):
                cands = table.candidates_for(i)
                for j, candidate in enumerate(cands):
                    fh.write(
                        json.dumps(
                            {
                                "item": item,
                                "candidate": candidate,
                                "score": table.rows[i][j],
                                "prompt_id": pid,
                                "method": table.method,
                            },
                            sort_keys=True,
                            ensure_ascii=False,
                        )
                        + "\n"
                    )


def cmd_run(args) -> int:
    task_path = Path(args.task_file)
    config = _load_task_config(task_path)
    if args.metric:
        config["metrics"] = _resolve_metrics(args.metric)
    factory = parse_provider_spec(args.provider)
    provider = factory()
    try:
        spec = task_from_config(config, task_path.parent, provider)
        result = run_task(
            spec,
            provider,
            jobs=args.jobs,
            provider_factory=factory if args.jobs > 1 else None,
        )
        info = provider.info()
    finally:
        provider.close()
    payload = _results_payload(result, info)
    if args.out:
        _dump_json(payload, args.out)
    table = _markdown_table(result)
    if args.markdown:
        with open(args.markdown, "w", encoding="utf-8") as fh:
            fh.write(table)
    if args.scores:
        _write_scores(result, args.scores)
    sys.stdout.write(table)
    return 0


def _shard_lines(paths, shards: int, shard_index: int):
    """Lazy round-robin selection: lines whose global index ≡ shard_index.

    One pass per shard keeps memory flat at the cost of re-reading the corpus
    shards times; counting itself never buffers lines.
    """
    index = 0
    for path in paths:
        with bias_mod.open_lines(path) as fh:
            for line in fh:
                if index % shards == shard_index:
                    yield line
                index += 1


def cmd_bias(args) -> int:
    colors = bias_mod.read_word_list(args.colors)
    targets = bias_mod.read_word_list(args.targets)
    for path in args.corpus:
        if not Path(path).exists():
            raise _CliValidation(f"corpus file not found: {path}")
    if args.shards < 1:
        raise _CliValidation("--shards must be >= 1")
    if args.shards == 1:
        parts = []
        for path in args.corpus:
            with bias_mod.open_lines(path) as fh:
                parts.append(bias_mod.count_stream(fh, colors, targets))
        counts = bias_mod.merge(parts)
    else:
        counts = bias_mod.merge(
            bias_mod.count_stream(_shard_lines(args.corpus, args.shards, s), colors, targets)
            for s in range(args.shards)
        )
    if args.out:
        bias_mod.write_tsv(counts, args.out)
    if args.golds:
        golds = load_color(args.golds, args.golds_variant)
        summary = bias_mod.evaluate(counts, golds.records)
        sys.stdout.write(
            "accuracy {accuracy:.4f} over {evaluated} words "
            "({skipped} without evidence)\n".format(
                accuracy=summary["accuracy"],
                evaluated=summary["evaluated"],
                skipped=len(summary["no_evidence"]),
            )
        )
    return 0


def cmd_groundgen(args) -> int:
    verbs = bias_mod.read_word_list(args.verbs)
    nouns = bias_mod.read_word_list(args.nouns)
    if not 0.0 < args.percentile <= 100.0:
        raise _CliValidation("--percentile must be in (0, 100]")
    grid_size = len(verbs) * len(nouns)
    if args.n > grid_size:
        raise _CliValidation(f"--n {args.n} exceeds the {grid_size}-phrase grid")
    factory = parse_provider_spec(args.provider)
    provider = factory()
    try:
        records = groundgen.run_pipeline(
            verbs, nouns, args.n, args.seed, provider, percentile=args.percentile
        )
    finally:
        provider.close()
    groundgen.write_jsonl(records, args.out)
    sys.stdout.write(f"wrote {len(records)} labeled phrases to {args.out}\n")
    return 0


def _load_labeled_jsonl(path):
    """Rows {phrase, label} (groundgen output); returns (texts, labels)."""
    texts, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise _CliValidation(f"{path}:{line_no}: not valid JSON: {e}") from e
            if "phrase" not in obj or "label" not in obj:
                raise _CliValidation(f"{path}:{line_no}: needs phrase and label")
            texts.append(str(obj["phrase"]))
            labels.append(int(obj["label"]))
    if not texts:
        raise _CliValidation(f"{path}: no labeled rows")
    return texts, labels


def _linprobe_features(args, dataset_path, cache_path, provider):
    """(features, labels) for one dataset under the selected probe task."""
    if args.task == "groundability":
        texts, labels = _load_labeled_jsonl(dataset_path)
        vectors = linprobe.embed_with_cache(provider, texts, cache_path)
        return vectors, labels
    pairs = load_mnli(dataset_path)
    premises = [p.premise for p in pairs.records]
    hypotheses = [p.hypothesis for p in pairs.records]
    labels = [p.label for p in pairs.records]
    texts = premises + hypotheses
    vectors = linprobe.embed_with_cache(provider, texts, cache_path)
    half = len(premises)
    features = [
        linprobe.pair_features(vectors[i], vectors[half + i]) for i in range(half)
    ]
    return features, labels


def _default_cache_path(args, dataset_path) -> str | None:
    if args.cache:
        return args.cache
    cache_dir = os.environ.get("PROBE_CACHE_DIR")
    if not cache_dir:
        return None
    stem = Path(dataset_path).stem
    return str(Path(cache_dir) / f"{args.task}-{stem}.jsonl")


def cmd_linprobe(args) -> int:
    provider = None
    cache_path = _default_cache_path(args, args.dataset)
    if args.provider is None and cache_path is None:
        raise _CliValidation(
            "need --provider, --cache, or PROBE_CACHE_DIR to obtain embeddings"
        )
    if args.provider is not None:
        provider = parse_provider_spec(args.provider)()
    max_iter = args.max_iter
    if max_iter is None:
        max_iter = 1000 if args.task == "groundability" else 400
    try:
        features, labels = _linprobe_features(args, args.dataset, cache_path, provider)
        payload: dict = {
            "schema": SCHEMA_VERSION,
            "task": args.task,
            "C": args.C,
            "max_iter": max_iter,
            "seed": args.seed,
        }
        if args.eval_dataset:
            eval_feats, eval_labels = _linprobe_features(
                args, args.eval_dataset, cache_path, provider
            )
            model = linprobe.fit(features, labels, C=args.C, max_iter=max_iter)
            scores = [linprobe.predict_proba(model, x) for x in eval_feats]
            auc = roc_auc(scores, eval_labels)

            def stat(indices):
                return roc_auc([scores[i] for i in indices], [eval_labels[i] for i in indices])

            ci = bootstrap_ci(stat, len(scores), args.n_boot, args.level, args.seed)
            payload.update(
                {
                    "mode": "train-eval",
                    "auc": auc,
                    "ci": list(ci),
                    "ci_level": args.level,
                    "n_boot": args.n_boot,
                    "converged": model.converged,
                }
            )
        else:
            aucs, mean = linprobe.kfold_auc(
                features, labels, k=args.folds, seed=args.seed, C=args.C, max_iter=max_iter
            )
            payload.update({"mode": "kfold", "folds": args.folds, "aucs": aucs, "mean_auc": mean})
    finally:
        if provider is not None:
            provider.close()
    if args.out:
        _dump_json(payload, args.out)
    if "mean_auc" in payload:
        sys.stdout.write(f"mean AUC {payload['mean_auc']:.4f} over {args.folds} folds\n")
    else:
        sys.stdout.write(
            "AUC {auc:.4f} (CI {lo:.4f}..{hi:.4f} at {level})\n".format(
                auc=payload["auc"], lo=payload["ci"][0], hi=payload["ci"][1], level=args.level
            )
        )
    return 0


def _serve_stdio(provider) -> None:
    protocol.serve(provider, sys.stdin, sys.stdout)


def _serve_tcp(provider_factory, port: int) -> None:
    server = socket.create_server(("127.0.0.1", port))
    sys.stderr.write(f"listening on 127.0.0.1:{server.getsockname()[1]}\n")
    sys.stderr.flush()

    def handle(conn):
        provider = provider_factory()
        with conn:
            reader = conn.makefile("r", encoding="utf-8")
            writer = conn.makefile("w", encoding="utf-8")
            try:
                protocol.serve(provider, reader, writer)
            except (BrokenPipeError, ConnectionResetError):
                pass
            finally:
                provider.close()

    with server:
        while True:
            conn, _addr = server.accept()
            threading.Thread(target=handle, args=(conn,), daemon=True).start()


def cmd_serve_mock(args) -> int:
    make = lambda: MockProvider(dim=args.dim, seed=args.seed)  # noqa: E731
    if args.tcp is None:
        provider = make()
        try:
            _serve_stdio(provider)
        finally:
            provider.close()
    else:
        _serve_tcp(make, args.tcp)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vluprobe",
        description="Zero-shot knowledge probing over NDJSON model providers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="score a task file against a provider")
    p_run.add_argument("task_file", help="task description JSON")
    p_run.add_argument("--provider", required=True, help="mock:... | stdio:cmd=... | tcp:HOST:PORT")
    p_run.add_argument("--out", help="write results JSON here")
    p_run.add_argument("--markdown", help="write the Markdown result table here")
    p_run.add_argument("--scores", help="write per-candidate scores JSONL here")
    p_run.add_argument(
        "--metric",
        action="append",
        help="override task metrics (repeatable; aliases like acc_ctd resolve)",
    )
    p_run.add_argument("--jobs", type=int, default=1, help="provider connections (default 1)")
    p_run.set_defaults(func=cmd_run)

    p_bias = sub.add_parser("bias", help="count color-word bigrams over a corpus")
    p_bias.add_argument("--corpus", nargs="+", required=True, help="text or .gz corpus files")
    p_bias.add_argument("--colors", required=True, help="ordered color list file")
    p_bias.add_argument("--targets", required=True, help="target word list file")
    p_bias.add_argument("--golds", help="color-gold JSONL for the accuracy line")
    p_bias.add_argument("--golds-variant", choices=["ctd", "ncd"], default="ctd")
    p_bias.add_argument("--out", help="write word/color counts TSV here")
    p_bias.add_argument("--shards", type=int, default=1, help="count in N shards, then merge")
    p_bias.set_defaults(func=cmd_bias)

    p_gen = sub.add_parser("groundgen", help="generate labeled groundability phrases")
    p_gen.add_argument("--verbs", required=True, help="-ing-ready verb stems, one per line")
    p_gen.add_argument("--nouns", required=True, help="nouns, one per line")
    p_gen.add_argument("--n", type=int, required=True, help="phrases to sample from the grid")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--percentile", type=float, default=20.0, help="NLL keep percentile")
    p_gen.add_argument("--provider", required=True)
    p_gen.add_argument("--out", required=True, help="labeled phrases JSONL")
    p_gen.set_defaults(func=cmd_groundgen)

    p_lin = sub.add_parser("linprobe", help="logistic-regression probe on embeddings")
    p_lin.add_argument("--dataset", required=True, help="labeled JSONL (see --task)")
    p_lin.add_argument("--task", choices=["groundability", "nli"], required=True)
    p_lin.add_argument("--provider", help="provider spec for fresh embeddings")
    p_lin.add_argument("--cache", help="embedding-cache JSONL (read and extended)")
    p_lin.add_argument("--eval-dataset", help="held-out dataset: train/eval instead of k-fold")
    p_lin.add_argument("--folds", type=int, default=5)
    p_lin.add_argument("--seed", type=int, default=0)
    p_lin.add_argument("--C", type=float, default=1.0)
    p_lin.add_argument("--max-iter", type=int, default=None, help="default 1000/400 by task")
    p_lin.add_argument("--n-boot", type=int, default=200)
    p_lin.add_argument("--level", type=float, default=0.95)
    p_lin.add_argument("--out", help="write results JSON here")
    p_lin.set_defaults(func=cmd_linprobe)

    p_mock = sub.add_parser("serve-mock", help="serve the seeded mock provider")
    p_mock.add_argument("--dim", type=int, default=8)
    p_mock.add_argument("--seed", type=int, default=0)
    p_mock.add_argument("--tcp", type=int, default=None, help="listen on this port instead of stdio")
    p_mock.set_defaults(func=cmd_serve_mock)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CliValidation as e:
        sys.stderr.write(f"error: {e}\n")
        return _VALIDATION_EXIT
    except (ProviderError, ProtocolError, PromptFailure) as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return _PROVIDER_EXIT
    except ProbeError as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return _VALIDATION_EXIT
    except FileNotFoundError as e:
        sys.stderr.write(f"error: file not found: {e.filename}\n")
        return _VALIDATION_EXIT
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
