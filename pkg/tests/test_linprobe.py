"""Logistic-regression probe: optimizer correctness, CV, and the embedding cache."""

import math
import warnings

import numpy as np
import pytest

from vluprobe.errors import DimMismatch, NonFiniteFeature, SingleClass, TooFewSamples
from vluprobe.linprobe import (
    LogRegModel,
    _objective_grad,
    append_embedding_cache,
    embed_with_cache,
    fit,
    kfold_auc,
    load_embedding_cache,
    pair_features,
    predict_proba,
)
from vluprobe.providers import MockProvider
from vluprobe.rng import stream_for


def brute_objective(w, b, X, y, C):
    """The stated objective, written directly from its formula."""
    total = 0.5 * sum(v * v for v in w)
    for row, label in zip(X, y):
        t = 1.0 if label == 1 else -1.0
        margin = t * (sum(wi * xi for wi, xi in zip(w, row)) + b)
        total += C * math.log1p(math.exp(-margin))
    return total


# -- gradient correctness ----------------------------------------------------------


def test_gradient_matches_central_differences():
    rng = stream_for(11, b"gradcheck")
    for trial in range(20):
        n, d = 5, 3
        X = np.array([[2.0 * rng.next_float() - 1.0 for _ in range(d)] for _ in range(n)])
        t = np.array([1.0 if rng.next_float() > 0.5 else -1.0 for _ in range(n)])
        theta = np.array([2.0 * rng.next_float() - 1.0 for _ in range(d + 1)])
        C = 0.1 + 2.0 * rng.next_float()
        _, grad = _objective_grad(theta, X, t, C)
        h = 1e-5
        for j in range(d + 1):
            e = np.zeros(d + 1)
            e[j] = h
            plus, _ = _objective_grad(theta + e, X, t, C)
            minus, _ = _objective_grad(theta - e, X, t, C)
            numeric = (plus - minus) / (2 * h)
            denom = max(1.0, abs(numeric))
            assert abs(grad[j] - numeric) / denom <= 1e-4


def test_objective_value_matches_direct_formula():
    X = np.array([[1.0, -2.0], [0.5, 0.5], [-1.0, 1.5]])
    y = [1, 0, 1]
    t = np.where(np.array(y) == 1, 1.0, -1.0)
    theta = np.array([0.3, -0.7, 0.1])
    value, _ = _objective_grad(theta, X, t, C=1.7)
    assert value == pytest.approx(brute_objective([0.3, -0.7], 0.1, X.tolist(), y, 1.7), rel=1e-12)


# -- fit behavior -------------------------------------------------------------------


def test_separable_1d_example():
    model = fit([[-2.0], [-1.0], [1.0], [2.0]], [0, 0, 1, 1])
    assert model.weights[0] > 0
    for x, label in [(-2.0, 0), (-1.0, 0), (1.0, 1), (2.0, 1)]:
        p = predict_proba(model, [x])
        assert (p > 0.5) == (label == 1)
    assert model.converged is True
    assert model.iterations <= 1000


def test_all_zero_features_learn_the_prior():
    # With X = 0 the objective reduces to C * sum log(1+exp(-t*b)): minimized
    # at b = logit(prior). Three positives, one negative -> b = log(3).
    model = fit([[0.0], [0.0], [0.0], [0.0]], [1, 1, 1, 0])
    assert model.weights[0] == pytest.approx(0.0, abs=1e-6)
    assert model.bias == pytest.approx(math.log(3.0), abs=1e-3)


def test_negation_symmetry():
    X = [[1.0, 0.5], [2.0, -0.5], [-1.0, 1.0], [-2.0, 0.25], [0.5, 2.0], [-0.5, -2.0]]
    y = [1, 1, 0, 0, 1, 0]
    base = fit(X, y, C=0.7)
    flipped = fit([[-a, -b] for a, b in X], [1 - v for v in y], C=0.7)
    assert flipped.weights == pytest.approx(base.weights, abs=1e-6)
    assert flipped.bias == pytest.approx(-base.bias, abs=1e-6)


def test_objective_history_monotone_nonincreasing():
    rng = stream_for(3, b"blob")
    X = [[rng.next_float() + (2.0 if i % 2 else -2.0), rng.next_float()] for i in range(40)]
    y = [i % 2 for i in range(40)]
    model = fit(X, y, C=1.0)
    history = model.objective_history
    assert len(history) == model.iterations + 1
    assert all(later <= earlier + 1e-12 for earlier, later in zip(history, history[1:]))


def test_small_C_shrinks_weights():
    rng = stream_for(4, b"shrink")
    X = [[rng.next_float() + (1.0 if i % 2 else -1.0)] for i in range(30)]
    y = [i % 2 for i in range(30)]
    w_regular = fit(X, y, C=1.0).weights
    w_tiny = fit(X, y, C=1e-8).weights
    assert np.linalg.norm(w_tiny) < np.linalg.norm(w_regular)
    assert np.linalg.norm(w_tiny) == pytest.approx(0.0, abs=1e-3)


def test_fit_input_validation():
    with pytest.raises(SingleClass):
        fit([[1.0], [2.0]], [1, 1])
    with pytest.raises(NonFiniteFeature):
        fit([[1.0], [math.nan]], [0, 1])
    with pytest.raises(DimMismatch):
        fit([[1.0], [2.0]], [0, 1, 1])
    with pytest.raises(DimMismatch):
        fit([1.0, 2.0], [0, 1])


def test_max_iter_respected():
    rng = stream_for(9, b"cap")
    X = [[rng.next_float(), rng.next_float()] for _ in range(50)]
    y = [1 if i < 25 else 0 for i in range(50)]
    model = fit(X, y, max_iter=2)
    assert model.iterations <= 2
    assert isinstance(model, LogRegModel)


# -- prediction ---------------------------------------------------------------------


def test_predict_proba_basics():
    zero = LogRegModel(weights=np.zeros(3), bias=0.0, C=1.0, converged=True, iterations=0)
    assert predict_proba(zero, [5.0, -2.0, 0.1]) == 0.5
    model = LogRegModel(weights=np.array([1.0, 0.0]), bias=0.0, C=1.0, converged=True, iterations=0)
    assert predict_proba(model, [2.0, 0.0]) > predict_proba(model, [1.0, 0.0]) > 0.5
    neg = LogRegModel(weights=-model.weights, bias=-model.bias, C=1.0, converged=True, iterations=0)
    p, q = predict_proba(model, [1.5, 3.0]), predict_proba(neg, [1.5, 3.0])
    assert p + q == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DimMismatch):
        predict_proba(model, [1.0, 2.0, 3.0])


def test_pair_features_contract():
    assert pair_features([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]) == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    assert pair_features([1.0], [2.0]) != pair_features([2.0], [1.0])
    with pytest.raises(DimMismatch):
        pair_features([1.0, 2.0], [1.0])


# -- cross-validation ---------------------------------------------------------------


def blob_data(n_per_class=20, seed=7):
    rng = stream_for(seed, b"blobs")
    X, y = [], []
    for i in range(2 * n_per_class):
        label = i % 2
        center = 3.0 if label else -3.0
        X.append([center + rng.next_float() - 0.5, center + rng.next_float() - 0.5])
        y.append(label)
    return X, y


def test_blobs_reach_perfect_auc():
    X, y = blob_data()
    aucs, mean = kfold_auc(X, y, k=5, seed=0)
    assert len(aucs) == 5
    assert aucs == [1.0] * 5
    assert mean == 1.0


def test_kfold_same_seed_same_result():
    X, y = blob_data(seed=9)
    assert kfold_auc(X, y, k=4, seed=3) == kfold_auc(X, y, k=4, seed=3)


def test_kfold_leave_one_out_partitioning():
    # k = n gives singleton test folds, which are single-class by construction
    # and therefore all skipped: the LOO reduction is the partition itself.
    X, y = blob_data(n_per_class=3)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        aucs, mean = kfold_auc(X, y, k=len(X), seed=0)
    assert aucs == []
    assert math.isnan(mean)
    assert len(caught) == len(X)


def test_kfold_too_few_samples():
    with pytest.raises(TooFewSamples):
        kfold_auc([[1.0], [2.0]], [0, 1], k=5)


def test_kfold_skips_single_class_folds():
    # Nine zeros and a single one: most splits leave a one-class test fold.
    X = [[float(i)] for i in range(10)]
    y = [0] * 9 + [1]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        aucs, _ = kfold_auc(X, y, k=5, seed=1)
    assert len(aucs) + len(caught) == 5
    assert len(caught) >= 4  # the lone positive can sit in at most one test fold


# -- embedding cache ----------------------------------------------------------------


def test_cache_round_trip(tmp_path):
    path = tmp_path / "cache.jsonl"
    assert load_embedding_cache(path) == {}
    append_embedding_cache(path, {"a": [1.0, 2.0], "b": [3.0, 4.0]})
    append_embedding_cache(path, {"c": [5.0, 6.0]})
    assert load_embedding_cache(path) == {"a": [1.0, 2.0], "b": [3.0, 4.0], "c": [5.0, 6.0]}


def test_embed_with_cache_populates_then_reuses(tmp_path, mock):
    path = tmp_path / "cache.jsonl"
    texts = ["red", "blue", "red"]
    vectors = embed_with_cache(mock, texts, cache_path=path)
    assert vectors[0] == vectors[2] == mock.embed(["red"])[0]
    stored = load_embedding_cache(path)
    assert set(stored) == {"red", "blue"}  # deduplicated before embedding
    # Second pass needs no provider at all.
    again = embed_with_cache(None, ["blue", "red"], cache_path=path)
    assert again == [stored["blue"], stored["red"]]


def test_embed_with_cache_without_provider_or_entry(tmp_path):
    with pytest.raises(ValueError):
        embed_with_cache(None, ["missing"], cache_path=tmp_path / "empty.jsonl")


def test_embed_with_cache_no_cache_path(mock):
    assert embed_with_cache(mock, ["red"]) == mock.embed(["red"])


def test_embed_with_cache_batches(tmp_path):
    class CountingProvider(MockProvider):
        calls: list[int] = []

        def embed(self, texts):
            CountingProvider.calls.append(len(texts))
            return super().embed(texts)

    CountingProvider.calls = []
    provider = CountingProvider(dim=4, seed=0)
    texts = [f"word{i}" for i in range(300)]
    embed_with_cache(provider, texts, cache_path=tmp_path / "c.jsonl", batch=128)
    assert CountingProvider.calls == [128, 128, 44]
