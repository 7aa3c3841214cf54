"""L2-regularized binary logistic regression on frozen embeddings.

Objective (bias unregularized, labels mapped to {-1, +1}):

    f(w, b) = 0.5 * ||w||^2 + C * sum_i log(1 + exp(-t_i * (w . x_i + b)))

minimized with a limited-memory quasi-Newton loop (two-loop recursion over the
last 10 curvature pairs, Armijo backtracking line search). Iterations stop
when the gradient infinity-norm drops to tol or max_iter is hit; every
accepted step decreases the objective. Features are used as-is: no
standardization.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimMismatch, NonFiniteFeature, SingleClass, TooFewSamples
from .metrics import roc_auc
from .rng import shuffled

_MEMORY = 10
_ARMIJO_C1 = 1e-4
_BACKTRACK = 0.5
_MAX_LINE_STEPS = 50


@dataclass(frozen=True)
class LogRegModel:
    weights: np.ndarray
    bias: float
    C: float
    converged: bool
    iterations: int
    objective_history: tuple[float, ...] = ()


def _objective_grad(theta: np.ndarray, X: np.ndarray, t: np.ndarray, C: float):
    """Objective value and gradient at theta = [w; b]."""
    w, b = theta[:-1], theta[-1]
    margins = t * (X @ w + b)
    # log(1 + exp(-m)) computed stably.
    loss = np.logaddexp(0.0, -margins).sum()
    value = 0.5 * float(w @ w) + C * float(loss)
    # d/dm log(1+exp(-m)) = -sigmoid(-m)
    sig = _sigmoid(-margins)
    coeff = -C * sig * t
    grad_w = w + X.T @ coeff
    grad_b = float(coeff.sum())
    return value, np.append(grad_w, grad_b)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit(
    features,
    labels: Sequence[int],
    C: float = 1.0,
    max_iter: int = 1000,
    tol: float = 1e-4,
) -> LogRegModel:
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise DimMismatch("features must be a 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("features contain NaN or inf")
    y = np.asarray(labels)
    if len(y) != X.shape[0]:
        raise DimMismatch(f"{X.shape[0]} rows vs {len(y)} labels")
    classes = set(int(v) for v in y)
    if classes != {0, 1}:
        raise SingleClass(f"need both classes 0 and 1, got {sorted(classes)}")
    t = np.where(y == 1, 1.0, -1.0)

    theta = np.zeros(X.shape[1] + 1)
    value, grad = _objective_grad(theta, X, t, C)
    history = [value]
    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    rho_list: list[float] = []
    converged = float(np.max(np.abs(grad))) <= tol
    iterations = 0

    while not converged and iterations < max_iter:
        direction = -_two_loop(grad, s_list, y_list, rho_list)
        descent = float(grad @ direction)
        if descent >= 0.0:
            # History produced a bad direction; restart from steepest descent.
            s_list, y_list, rho_list = [], [], []
            direction = -grad
            descent = float(grad @ direction)
        step = 1.0
        new_theta, new_value, new_grad = None, None, None
        for _ in range(_MAX_LINE_STEPS):
            cand = theta + step * direction
            cand_value, cand_grad = _objective_grad(cand, X, t, C)
            if cand_value <= value + _ARMIJO_C1 * step * descent:
                new_theta, new_value, new_grad = cand, cand_value, cand_grad
                break
            step *= _BACKTRACK
        if new_theta is None:
            break  # line search failed; gradient is numerically flat
        s = new_theta - theta
        y_vec = new_grad - grad
        sy = float(s @ y_vec)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y_vec)):
            s_list.append(s)
            y_list.append(y_vec)
            rho_list.append(1.0 / sy)
            if len(s_list) > _MEMORY:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        theta, value, grad = new_theta, new_value, new_grad
        history.append(value)
        iterations += 1
        converged = float(np.max(np.abs(grad))) <= tol

    return LogRegModel(
        weights=theta[:-1].copy(),
        bias=float(theta[-1]),
        C=C,
        converged=converged,
        iterations=iterations,
        objective_history=tuple(history),
    )


def _two_loop(grad, s_list, y_list, rho_list) -> np.ndarray:
    """H * grad via the standard two-loop recursion with gamma scaling."""
    q = grad.copy()
    alphas = []
    for s, y_vec, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y_vec
    if s_list:
        s, y_vec = s_list[-1], y_list[-1]
        gamma = float(s @ y_vec) / float(y_vec @ y_vec)
        q *= gamma
    for (s, y_vec, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        beta = rho * float(y_vec @ q)
        q += (a - beta) * s
    return q


def predict_proba(model: LogRegModel, x) -> float:
    vec = np.asarray(x, dtype=float)
    if vec.shape != model.weights.shape:
        raise DimMismatch(f"{vec.shape} vs {model.weights.shape}")
    z = float(model.weights @ vec) + model.bias
    return float(_sigmoid(np.array([z]))[0])


def pair_features(e1: Sequence[float], e2: Sequence[float]) -> list[float]:
    """[e1; e2] concatenation; both halves must share one provider dim."""
    if len(e1) != len(e2):
        raise DimMismatch(f"{len(e1)} vs {len(e2)}")
    return list(e1) + list(e2)


def kfold_auc(
    features,
    labels: Sequence[int],
    k: int = 5,
    seed: int = 0,
    C: float = 1.0,
    max_iter: int = 400,
    tol: float = 1e-4,
) -> tuple[list[float], float]:
    """Seeded shuffle, contiguous folds, fit on k-1 folds, AUC on the held-out
    fold. Single-class folds are skipped with a warning."""
    X = np.asarray(features, dtype=float)
    n = X.shape[0]
    if n < k:
        raise TooFewSamples(f"{n} samples for {k} folds")
    y = np.asarray(labels)
    order = shuffled(n, seed)
    bounds = [(f * n) // k for f in range(k + 1)]
    aucs: list[float] = []
    for f in range(k):
        test_idx = order[bounds[f] : bounds[f + 1]]
        train_idx = order[: bounds[f]] + order[bounds[f + 1] :]
        y_train = y[train_idx]
        y_test = y[test_idx]
        if len(set(y_train.tolist())) < 2 or len(set(y_test.tolist())) < 2:
            warnings.warn(f"fold {f}: single-class split, skipped", stacklevel=2)
            continue
        model = fit(X[train_idx], y_train, C=C, max_iter=max_iter, tol=tol)
        scores = [predict_proba(model, X[i]) for i in test_idx]
        aucs.append(roc_auc(scores, [int(v) for v in y_test]))
    mean = sum(aucs) / len(aucs) if aucs else float("nan")
    return aucs, mean


# ---------------------------------------------------------------------------
# Embedding cache: JSONL {text_id, vector}, keyed by the raw text.
# ---------------------------------------------------------------------------


def load_embedding_cache(path) -> dict[str, list[float]]:
    cache: dict[str, list[float]] = {}
    path = Path(path)
    if not path.exists():
        return cache
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            cache[obj["text_id"]] = obj["vector"]
    return cache


def append_embedding_cache(path, entries: dict[str, list[float]]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for text_id, vector in entries.items():
            fh.write(json.dumps({"text_id": text_id, "vector": vector}, sort_keys=True) + "\n")


def embed_with_cache(provider, texts: Sequence[str], cache_path=None, batch: int = 128):
    """Vectors for texts, drawing on and extending the JSONL cache.

    provider may be None when every text is already cached; otherwise missing
    texts raise DimMismatch-free KeyError-like failure via ValueError.
    """
    cache = load_embedding_cache(cache_path) if cache_path else {}
    missing = [t for t in dict.fromkeys(texts) if t not in cache]
    if missing:
        if provider is None:
            raise ValueError(f"{len(missing)} texts absent from cache and no provider given")
        fresh: dict[str, list[float]] = {}
        for start in range(0, len(missing), batch):
            chunk = missing[start : start + batch]
            for text, vec in zip(chunk, provider.embed(chunk)):
                fresh[text] = vec
        if cache_path:
            append_embedding_cache(cache_path, fresh)
        cache.update(fresh)
    return [cache[t] for t in texts]
