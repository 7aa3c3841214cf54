"""Acceptance suite: one test per headline guarantee, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v` — each criterion reports as its
own PASSED/FAILED line. Every oracle here is re-derived independently of the
library code (pairwise O(n^2) statistics, hand PRNG re-implementation, byte
comparison against checked-in goldens).
"""

import json
import math
import random
import resource
import time

import numpy as np
import pytest

from vluprobe import bias, groundgen, linprobe, metrics, probing
from vluprobe.cli import main as cli_main
from vluprobe.datasets import (
    load_cbt,
    load_cities,
    load_color,
    load_concreteness,
    load_imdb,
    load_mnli,
    load_shapeit,
)
from vluprobe.providers import MockProvider


def announce(line: str) -> None:
    print(f"\nACCEPTANCE PASS: {line}")


# -- criterion 1: metric oracle suite ---------------------------------------------------


def pearson_pairwise(xs, ys):
    """Pairwise-difference (O(n^2)) route: cov and variances from all pairs."""
    n = len(xs)
    cov = math.fsum((xs[i] - xs[j]) * (ys[i] - ys[j]) for i in range(n) for j in range(n))
    vx = math.fsum((xs[i] - xs[j]) ** 2 for i in range(n) for j in range(n))
    vy = math.fsum((ys[i] - ys[j]) ** 2 for i in range(n) for j in range(n))
    return cov / math.sqrt(vx * vy)


def ranks_bruteforce(values):
    """Average ranks via direct counting, no sorting."""
    out = []
    for v in values:
        less = sum(1 for u in values if u < v)
        equal = sum(1 for u in values if u == v)
        out.append(less + (equal + 1) / 2.0)
    return out


def tau_b_bruteforce(xs, ys):
    n = len(xs)
    concordant = discordant = untied_x = untied_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (xs[i] > xs[j]) - (xs[i] < xs[j])
            dy = (ys[i] > ys[j]) - (ys[i] < ys[j])
            if dx != 0:
                untied_x += 1
            if dy != 0:
                untied_y += 1
            if dx * dy > 0:
                concordant += 1
            elif dx * dy < 0:
                discordant += 1
    return (concordant - discordant) / math.sqrt(untied_x * untied_y)


def auc_bruteforce(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (0.5 if p == q else 0.0)
    return total / (len(pos) * len(neg))


class _Splitmix:
    """Hand re-implementation of the documented PRNG, from decimal constants."""

    def __init__(self, seed):
        self.state = seed & (2**64 - 1)

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) % 2**64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
        return z ^ (z >> 31)

    def next_float(self):
        return (self.next_u64() >> 11) * 2.0**-53


def _fnv64(data):
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) % 2**64
    return h


def bootstrap_bruteforce(values, n_boot, level, seed):
    """Percentile bootstrap of the mean, re-deriving the counter streams."""
    stats = []
    for b in range(n_boot):
        payload = seed.to_bytes(8, "little") + b.to_bytes(8, "little")
        rng = _Splitmix(_fnv64(payload))
        idx = [int(rng.next_float() * len(values)) for _ in values]
        stats.append(math.fsum(values[i] for i in idx) / len(values))
    stats.sort()

    def pct(q):
        pos = q * (len(stats) - 1)
        lo, hi = math.floor(pos), math.ceil(pos)
        if lo == hi:
            return stats[lo]
        return stats[lo] * (1 - (pos - lo)) + stats[hi] * (pos - lo)

    alpha = (1 - level) / 2
    return pct(alpha), pct(1 - alpha)


def test_criterion_1_metric_oracles():
    start = time.monotonic()
    tol = 1e-9

    # Hand-valued examples.
    assert metrics.pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=tol)
    assert metrics.pearson([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0, abs=tol)
    assert metrics.pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=tol)
    assert metrics.spearman([1, 2, 3], [1, 10, 100]) == pytest.approx(1.0, abs=tol)
    assert metrics.spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=tol)
    assert metrics.spearman([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5, abs=tol)
    assert metrics.kendall_tau_b([1, 2, 3], [5, 6, 7]) == pytest.approx(1.0, abs=tol)
    assert metrics.kendall_tau_b([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=tol)
    assert metrics.kendall_tau_b([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(4 / 6, abs=tol)
    assert metrics.accuracy(["red"], [{"red", "green"}]) == 1.0
    assert metrics.accuracy(["blue"], [{"red"}]) == 0.0
    assert metrics.recall_at_k([["a", "b", "c"]], ["a"], 1) == 1.0
    assert metrics.recall_at_k([["x", "y", "a"]], ["a"], 1) == 0.0
    assert metrics.recall_at_k([["x", "y", "a"]], ["a"], 5) == 1.0
    eq = [{"u.s.", "us", "usa", "u.s.a.", "u.s"}]
    assert metrics.recall_at_k([["u.s."]], ["usa"], 1, equivalence=eq) == 1.0
    assert metrics.roc_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == pytest.approx(0.75, abs=tol)
    assert metrics.roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == pytest.approx(0.5, abs=tol)

    # Seeded bootstrap on a 3-item toy set, against a hand PRNG re-execution.
    toy = [1.0, 2.0, 4.0]

    def stat(idx):
        return math.fsum(toy[i] for i in idx) / len(toy)

    got = metrics.bootstrap_ci(stat, 3, n_boot=8, level=0.9, seed=11)
    want = bootstrap_bruteforce(toy, n_boot=8, level=0.9, seed=11)
    assert got == pytest.approx(want, abs=tol)

    # 1,000 randomized instances against O(n^2) pairwise oracles.
    rng = random.Random(20260819)
    for trial in range(1000):
        n = rng.randint(3, 12)
        while True:
            xs = [float(rng.randint(0, 6)) for _ in range(n)]
            ys = [float(rng.randint(0, 6)) for _ in range(n)]
            if len(set(xs)) > 1 and len(set(ys)) > 1:
                break
        assert metrics.pearson(xs, ys) == pytest.approx(pearson_pairwise(xs, ys), abs=tol)
        assert metrics.spearman(xs, ys) == pytest.approx(
            pearson_pairwise(ranks_bruteforce(xs), ranks_bruteforce(ys)), abs=tol
        )
        assert metrics.kendall_tau_b(xs, ys) == pytest.approx(tau_b_bruteforce(xs, ys), abs=tol)
        scores = [rng.random() for _ in range(n)]
        labels = [rng.randint(0, 1) for _ in range(n)]
        if len(set(labels)) == 2:
            assert metrics.roc_auc(scores, labels) == pytest.approx(
                auc_bruteforce(scores, labels), abs=tol
            )
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"metric oracle suite took {elapsed:.1f}s"
    announce(f"metric oracles: hand values + 1000 pairwise-oracle trials in {elapsed:.1f}s")


# -- criterion 2: similarity probing is scale invariant ---------------------------------


class _Scaled:
    """Provider whose embeddings are a positive rescaling of the base's."""

    def __init__(self, base, scale):
        self._base = base
        self._scale = scale

    def info(self):
        return self._base.info()

    def embed(self, texts):
        return [[self._scale * x for x in v] for v in self._base.embed(texts)]

    def close(self):
        pass


def test_criterion_2_sp_scale_invariance():
    start = time.monotonic()
    rng = random.Random(7)
    words = "amber basalt cedar dune ember fjord grove heath inlet juniper".split()
    for case in range(100):
        base = MockProvider(dim=rng.randint(2, 16), seed=rng.getrandbits(32))
        scale = 10.0 ** rng.uniform(-6, 6)
        scaled = _Scaled(base, scale)
        masked = " ".join(rng.choice(words) for _ in range(rng.randint(1, 4)))
        k = rng.randint(2, 6)
        candidates = [f"{rng.choice(words)} {i}" for i in range(k)]

        plain = probing.stroop_scores(base, masked, candidates)
        rescaled = probing.stroop_scores(scaled, masked, candidates)
        for a, b in zip(plain, rescaled):
            assert a == pytest.approx(b, abs=1e-9)
        assert probing.predict_categorical(plain) == probing.predict_categorical(rescaled)
        assert probing.rank_candidates(plain) == probing.rank_candidates(rescaled)
        assert probing.stroop_scores(base, masked, [masked])[0] == pytest.approx(1.0, abs=1e-9)
        assert probing.stroop_scores(scaled, masked, [masked])[0] == pytest.approx(1.0, abs=1e-9)
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"invariance suite took {elapsed:.1f}s"
    announce(f"similarity scale invariance: 100 random configurations in {elapsed:.1f}s")


# -- criterion 3: masked-prediction argmax ----------------------------------------------


def test_criterion_3_mlm_argmax_exact():
    provider = MockProvider(dim=8, seed=0)
    rng = random.Random(99)
    words = "pearl quartz reef shale tundra vale willow yarrow zinc opal".split()
    for case in range(1000):
        masked = f"the [MASK] {rng.choice(words)}"
        k = rng.randint(2, 8)
        candidates = [f"{rng.choice(words)}{i}" for i in range(k)]
        row = probing.mlm_scores(provider, masked, candidates)
        best, best_idx = row[0], 0
        for i, v in enumerate(row):
            if v > best:  # strict: ties keep the lowest index
                best, best_idx = v, i
        assert probing.predict_categorical(row) == best_idx
    announce("masked-prediction argmax matches brute force on 1000 random rows, exact")


# -- criterion 4: logistic regression ---------------------------------------------------


def test_criterion_4_logistic_regression():
    start = time.monotonic()
    rng = np.random.default_rng(42)

    # Analytic gradient vs central differences at 100 random points.
    worst = 0.0
    for point in range(100):
        n, d = int(rng.integers(2, 12)), int(rng.integers(1, 6))
        X = rng.normal(size=(n, d))
        t = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        if len(set(t.tolist())) < 2:
            t[0] = -t[0]
        C = float(rng.uniform(0.1, 3.0))
        theta = rng.normal(size=d + 1)
        _, grad = linprobe._objective_grad(theta, X, t, C)
        h = 1e-5
        num = np.empty_like(theta)
        for i in range(d + 1):
            e = np.zeros_like(theta)
            e[i] = h
            up, _ = linprobe._objective_grad(theta + e, X, t, C)
            dn, _ = linprobe._objective_grad(theta - e, X, t, C)
            num[i] = (up - dn) / (2 * h)
        rel = float(np.linalg.norm(num - grad) / max(np.linalg.norm(grad), 1e-12))
        worst = max(worst, rel)
    assert worst <= 1e-4, f"worst relative gradient error {worst:.2e}"

    # Separable blobs: every fold separates perfectly.
    features, labels = [], []
    jitter = random.Random(5)
    for i in range(40):
        label = i % 2
        center = 5.0 if label else -5.0
        features.append([center + jitter.uniform(-1, 1), jitter.uniform(-1, 1)])
        labels.append(label)
    aucs, mean = linprobe.kfold_auc(features, labels, k=5, seed=0)
    assert aucs == [1.0] * 5
    assert mean == 1.0

    # Objective history decreases monotonically.
    model = linprobe.fit(features, labels)
    history = model.objective_history
    assert len(history) >= 2
    for a, b in zip(history, history[1:]):
        assert b <= a + 1e-12
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"logistic-regression suite took {elapsed:.1f}s"
    announce(
        f"logistic regression: gradient check (worst {worst:.1e}), "
        f"blob folds all 1.0, monotone objective, {elapsed:.1f}s"
    )


# -- criterion 5: loader filter fidelity ------------------------------------------------


def check_report(report, input_count, kept, dropped):
    assert report.input_count == input_count
    assert report.kept == kept
    assert report.dropped == dropped
    assert report.balanced()


def test_criterion_5_loader_filter_fidelity(fixtures, mock):
    concrete = load_concreteness(fixtures / "concreteness.jsonl")
    check_report(concrete.report, 6, 4, {"not_unigram": 1, "not_noun": 1})

    ctd = load_color(fixtures / "color_ctd.jsonl", "ctd")
    check_report(ctd.report, 4, 4, {})

    ncd = load_color(fixtures / "color_ncd.jsonl", "ncd")
    check_report(ncd.report, 5, 4, {"purple_only": 1})
    assert ncd.report.notes == {"purple_label_stripped": 2}

    shapes = load_shapeit(fixtures / "shapeit.jsonl")
    check_report(shapes.report, 4, 4, {})

    cities = load_cities(fixtures / "cities.jsonl", providers=[mock])
    check_report(cities.report, 6, 5, {"multi_token_answer": 1})

    groups, cbt_report = load_cbt(fixtures / "cbt.jsonl", providers=[mock])
    check_report(cbt_report, 5, 3, {"too_long": 1, "multi_token_answer": 1})
    assert [q.answer for q in groups["N"]] == ["book", "bird"]
    assert [q.answer for q in groups["V"]] == ["swim"]
    assert groups["P"] == []

    reviews = load_imdb(fixtures / "imdb.jsonl", seed=0, providers=[mock])
    check_report(reviews.report, 4, 2, {"too_long": 1, "no_sentences": 1})

    pairs = load_mnli(fixtures / "mnli.jsonl")
    check_report(pairs.report, 5, 4, {"neutral": 1})
    assert [p.label for p in pairs.records] == [1, 0, 1, 0]
    announce("loader filters: exact kept/dropped counts, accounting identity on all eight")


# -- criterion 6: reporting-bias counter ------------------------------------------------


def test_criterion_6_bias_counter(fixtures, tmp_path):
    colors = bias.read_word_list(fixtures / "bias_colors.txt")
    targets = bias.read_word_list(fixtures / "bias_targets.txt")
    with bias.open_lines(fixtures / "bias_corpus.txt") as fh:
        counts = bias.count_stream(fh, colors, targets)
    assert counts.n_w == {"banana": 2, "grass": 3, "coal": 1, "brick": 3}
    assert counts.n_cw == {
        ("yellow", "banana"): 1,
        ("green", "grass"): 2,
        ("black", "coal"): 1,
        ("red", "brick"): 1,
        ("brown", "brick"): 1,
    }

    # 4-shard round-robin merge equals the single pass, byte for byte.
    def shard(index, shards):
        with bias.open_lines(fixtures / "bias_corpus.txt") as fh:
            for i, line in enumerate(fh):
                if i % shards == index:
                    yield line

    merged = bias.merge(bias.count_stream(shard(s, 4), colors, targets) for s in range(4))
    one_tsv, four_tsv = tmp_path / "one.tsv", tmp_path / "four.tsv"
    bias.write_tsv(counts, one_tsv)
    bias.write_tsv(merged, four_tsv)
    assert four_tsv.read_bytes() == one_tsv.read_bytes()

    # 10M-line synthetic stream: counted without materializing the corpus.
    patterns = (
        "the red car parked",
        "a green tree swayed",
        "blue sky over the car",
        "tree by the yellow tree",
        "no target words here at all",
    )

    def synthetic(n):
        for i in range(n):
            yield patterns[i % 5]

    before_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    big = bias.count_stream(synthetic(10_000_000), ["red", "green", "blue", "yellow"], ["car", "tree"])
    after_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    assert big.n_w == {"car": 4_000_000, "tree": 6_000_000}
    assert len(big.n_w) <= 2
    assert len(big.n_cw) <= 4 * 2
    grew_mb = (after_kb - before_kb) / 1024.0
    assert grew_mb < 200.0, f"peak RSS grew {grew_mb:.0f} MB over a 10M-line stream"
    announce(
        f"bias counter: hand counts exact, 4-shard == 1-shard bytes, "
        f"10M lines with {grew_mb:.0f} MB peak growth"
    )


# -- criterion 7: groundability pipeline ------------------------------------------------


def test_criterion_7_groundability_pipeline(fixtures, goldens, tmp_path):
    verbs = bias.read_word_list(fixtures / "verbs.txt")
    nouns = bias.read_word_list(fixtures / "nouns.txt")
    records = groundgen.run_pipeline(verbs, nouns, 10, 3, MockProvider(dim=8, seed=0), percentile=20.0)
    out = tmp_path / "labeled.jsonl"
    groundgen.write_jsonl(records, out)
    assert out.read_bytes() == (goldens / "groundgen_labeled.jsonl").read_bytes()

    # Nearest-rank filter keeps exactly ceil(0.2 n) items when scores are tie-free.
    rng = random.Random(13)
    for n in range(1, 51):
        phrases = [f"p{i}" for i in range(n)]
        nlls = rng.sample(range(10 * n), n)  # distinct -> tie-free
        kept, _ = groundgen.nll_percentile_filter(
            phrases, provider=None, percentile=20.0, scores=[float(v) for v in nlls]
        )
        assert len(kept) == math.ceil(0.2 * n), f"n={n}"
    announce("groundability pipeline: golden bytes + ceil(0.2n) nearest-rank for n=1..50")


# -- criterion 8: CLI reproduces goldens ------------------------------------------------


def test_criterion_8_cli_goldens(fixtures, goldens, tmp_path, capsys):
    results, table, scores = (
        tmp_path / "results.json",
        tmp_path / "table.md",
        tmp_path / "scores.jsonl",
    )
    code = cli_main(
        [
            "run",
            str(fixtures / "task_color.json"),
            "--provider",
            "mock:dim=8,seed=0",
            "--out",
            str(results),
            "--markdown",
            str(table),
            "--scores",
            str(scores),
        ]
    )
    assert code == 0
    assert results.read_bytes() == (goldens / "run_color_results.json").read_bytes()
    assert table.read_bytes() == (goldens / "run_color_table.md").read_bytes()
    assert scores.read_bytes() == (goldens / "run_color_scores.jsonl").read_bytes()

    mlm_results = tmp_path / "mlm.json"
    code = cli_main(
        [
            "run",
            str(fixtures / "task_color_mlm.json"),
            "--provider",
            "mock:dim=8,seed=0",
            "--out",
            str(mlm_results),
        ]
    )
    assert code == 0
    assert mlm_results.read_bytes() == (goldens / "run_color_mlm_results.json").read_bytes()

    tsv = tmp_path / "counts.tsv"
    code = cli_main(
        [
            "bias",
            "--corpus",
            str(fixtures / "bias_corpus.txt"),
            "--colors",
            str(fixtures / "bias_colors.txt"),
            "--targets",
            str(fixtures / "bias_targets.txt"),
            "--out",
            str(tsv),
        ]
    )
    assert code == 0
    assert tsv.read_bytes() == (goldens / "bias_counts.tsv").read_bytes()

    labeled = tmp_path / "labeled.jsonl"
    code = cli_main(
        [
            "groundgen",
            "--verbs",
            str(fixtures / "verbs.txt"),
            "--nouns",
            str(fixtures / "nouns.txt"),
            "--n",
            "10",
            "--seed",
            "3",
            "--percentile",
            "20",
            "--provider",
            "mock:dim=8,seed=0",
            "--out",
            str(labeled),
        ]
    )
    assert code == 0
    assert labeled.read_bytes() == (goldens / "groundgen_labeled.jsonl").read_bytes()
    capsys.readouterr()
    announce("CLI goldens: run results/table/scores, MLM results, bias TSV, labeled phrases")
