#!/usr/bin/env python3
"""Run the full zero-shot probing battery against one provider.

Each task template in scripts/tasks/*.json names a dataset under
scripts/tasks/data/ (not bundled; see README for the expected JSONL schemas).
For every selected task this driver invokes the `vluprobe run` command,
writes per-task results JSON + Markdown into --out-dir, and ends with a
combined summary table of the prompt-max metric values.

Typical invocations:

    # deterministic mock provider, smoke-run two tasks
    python3 scripts/run_battery.py --provider mock:dim=32,seed=0 \
        --tasks color_ctd shapeit --out-dir /tmp/results

    # real checkpoint served over stdio by a sidecar process
    python3 scripts/run_battery.py \
        --provider 'stdio:cmd="vluprobe-sidecar --model openai/clip-vit-base-patch32"' \
        --out-dir results/clip
"""

import argparse
import json
import sys
from pathlib import Path

from vluprobe.cli import main as vluprobe_main

TASK_DIR = Path(__file__).resolve().parent / "tasks"


def discover_tasks(names):
    available = {p.stem: p for p in sorted(TASK_DIR.glob("*.json"))}
    if not names:
        return list(available.values())
    missing = [n for n in names if n not in available]
    if missing:
        raise SystemExit(
            f"unknown task template(s): {', '.join(missing)}; "
            f"available: {', '.join(sorted(available))}"
        )
    return [available[n] for n in names]


def dataset_path(task_file: Path) -> Path:
    config = json.loads(task_file.read_text(encoding="utf-8"))
    return (task_file.parent / config["dataset"]["path"]).resolve()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--provider", required=True, help="provider spec (see `vluprobe run --help`)")
    parser.add_argument("--tasks", nargs="*", default=[], help="template stems; default: all")
    parser.add_argument("--out-dir", required=True, help="directory for per-task results")
    parser.add_argument("--jobs", type=int, default=1, help="provider connections per task")
    parser.add_argument("--scores", action="store_true", help="also write per-candidate score JSONL")
    parser.add_argument(
        "--skip-missing", action="store_true", help="skip tasks whose dataset file is absent"
    )
    parser.add_argument(
        "--keep-going", action="store_true", help="continue past a failing task (report at the end)"
    )
    args = parser.parse_args(argv)

    tasks = discover_tasks(args.tasks)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    runnable = []
    for task_file in tasks:
        data = dataset_path(task_file)
        if data.exists():
            runnable.append(task_file)
        elif args.skip_missing:
            print(f"skip {task_file.stem}: dataset {data} not found", file=sys.stderr)
        else:
            raise SystemExit(
                f"dataset for {task_file.stem} not found: {data}\n"
                "place the JSONL files under scripts/tasks/data/ or pass --skip-missing"
            )

    failures = []
    for task_file in runnable:
        stem = task_file.stem
        argv_run = [
            "run",
            str(task_file),
            "--provider",
            args.provider,
            "--out",
            str(out_dir / f"{stem}.json"),
            "--markdown",
            str(out_dir / f"{stem}.md"),
            "--jobs",
            str(args.jobs),
        ]
        if args.scores:
            argv_run += ["--scores", str(out_dir / f"{stem}.scores.jsonl")]
        print(f"== {stem} ==", flush=True)
        code = vluprobe_main(argv_run)
        if code != 0:
            failures.append((stem, code))
            if not args.keep_going:
                return code

    print("\n| task | method | metric | max |")
    print("| --- | --- | --- | --- |")
    for task_file in runnable:
        stem = task_file.stem
        results_file = out_dir / f"{stem}.json"
        if not results_file.exists():
            continue
        payload = json.loads(results_file.read_text(encoding="utf-8"))
        for metric in sorted(payload["metrics"]):
            best = payload["metrics"][metric]["max"]
            print(f"| {payload['task']} | {payload['method']} | {metric} | {best:.4f} |")

    if failures:
        print(f"\n{len(failures)} task(s) failed: {failures}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
