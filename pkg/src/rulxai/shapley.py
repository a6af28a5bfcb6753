"""Model-agnostic Shapley attributions.

The value of a coalition ``S`` for a row ``x`` is the interventional
expectation: features in ``S`` are fixed to ``x`` and the rest are taken
from each background row in turn, and the model outputs are averaged.

Two estimators share that value function: exhaustive enumeration for small
feature counts and a kernel-weighted regression (KernelSHAP) that enforces
efficiency exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

Model = Callable[[np.ndarray], np.ndarray]

MAX_EXACT_FEATURES = 20
_EVAL_ROWS = 1 << 18


@dataclass(frozen=True)
class AttributionMatrix:
    phi: np.ndarray
    base_value: float
    background: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        if self.phi.ndim != 2 or self.phi.shape[1] != len(self.feature_names):
            raise ValueError("phi columns must match feature_names")

    def select(self, names: Sequence[str]) -> np.ndarray:
        return self.phi[:, [self.feature_names.index(n) for n in names]]


@dataclass(frozen=True)
class FeatureRanking:
    names: tuple[str, ...]
    scores: tuple[float, ...]


def _check_background(background) -> np.ndarray:
    background = np.asarray(background, dtype=float)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ValueError("background must be a non-empty (m, d) matrix")
    return background


def _masked_values(model: Model, row, masks: np.ndarray, background: np.ndarray) -> np.ndarray:
    """Coalition values for every boolean mask row in ``masks``."""
    m, d = background.shape
    out = np.empty(len(masks))
    chunk = max(1, _EVAL_ROWS // m)
    for start in range(0, len(masks), chunk):
        mk = masks[start:start + chunk]
        X = np.where(mk[:, None, :], row[None, None, :], background[None, :, :])
        preds = np.asarray(model(X.reshape(-1, d)), dtype=float)
        out[start:start + chunk] = preds.reshape(len(mk), m).mean(axis=1)
    return out


def coalition_value(model: Model, row, subset, background) -> float:
    background = _check_background(background)
    row = np.asarray(row, dtype=float)
    mask = np.zeros((1, background.shape[1]), dtype=bool)
    mask[0, list(subset)] = True
    return float(_masked_values(model, row, mask, background)[0])


def _all_masks(d: int) -> np.ndarray:
    codes = np.arange(1 << d, dtype=np.int64)
    return ((codes[:, None] >> np.arange(d)) & 1).astype(bool)


def shapley_exact(model: Model, row, background) -> tuple[np.ndarray, float]:
    """Exact Shapley values by enumerating all ``2**d`` coalitions."""
    background = _check_background(background)
    row = np.asarray(row, dtype=float)
    d = background.shape[1]
    if d > MAX_EXACT_FEATURES:
        raise ValueError(
            f"{d} features is too many for exact enumeration; use shapley_kernel"
        )
    masks = _all_masks(d)
    values = _masked_values(model, row, masks, background)
    sizes = masks.sum(axis=1)
    fact = [math.factorial(k) for k in range(d + 1)]
    weight = np.array([fact[s] * fact[d - s - 1] / fact[d] if s < d else 0.0
                       for s in range(d + 1)])
    phi = np.zeros(d)
    codes = np.arange(1 << d)
    for i in range(d):
        without = ~masks[:, i]
        S = codes[without]
        phi[i] = np.sum(weight[sizes[without]] * (values[S | (1 << i)] - values[S]))
    return phi, float(values[0])


def kernel_weight(d: int, size: int) -> float:
    """KernelSHAP weight of one coalition with ``size`` members."""
    return (d - 1) / (math.comb(d, size) * size * (d - size))


@dataclass(frozen=True)
class KernelDesign:
    """Coalition masks and weights; shared by every row explained with it."""

    masks: np.ndarray
    weights: np.ndarray
    projection: np.ndarray

    @property
    def n_features(self) -> int:
        return self.masks.shape[1]


def kernel_design(d: int, n_coalitions: int, seed: int = 0) -> KernelDesign:
    """Choose coalitions for KernelSHAP.

    Coalition sizes are enumerated completely, smallest/largest first, while
    the budget allows; the leftover budget is spent on paired random draws
    from the remaining sizes. When the budget covers all ``2**d - 2``
    non-trivial coalitions the regression reproduces exact Shapley values.
    """
    if d < 2:
        raise ValueError("kernel estimation needs at least 2 features")
    if n_coalitions < d + 2:
        raise ValueError(f"need at least d + 2 = {d + 2} coalitions")
    rng = np.random.default_rng(seed)
    budget = n_coalitions
    masks, weights = [], []

    size_mass = np.array([0.0] + [(d - 1) / (s * (d - s)) for s in range(1, d)])
    n_pairs = (d - 1) // 2
    sizes_left = list(range(1, d))
    for s in range(1, n_pairs + 1 + (d - 1) % 2):
        group = [s] if s == d - s else [s, d - s]
        need = sum(math.comb(d, k) for k in group)
        if need > budget:
            break
        for k in group:
            for combo in combinations(range(d), k):
                mk = np.zeros(d, dtype=bool)
                mk[list(combo)] = True
                masks.append(mk)
                weights.append(kernel_weight(d, k))
            sizes_left.remove(k)
        budget -= need

    if sizes_left and budget > 0:
        probs = size_mass[sizes_left] / size_mass[sizes_left].sum()
        drawn: dict[bytes, list] = {}
        n_draws = 0
        while n_draws < budget:
            k = sizes_left[rng.choice(len(sizes_left), p=probs)]
            mk = np.zeros(d, dtype=bool)
            mk[rng.choice(d, size=k, replace=False)] = True
            for m_ in (mk, ~mk):
                key = m_.tobytes()
                if key in drawn:
                    drawn[key][1] += 1
                else:
                    drawn[key] = [m_, 1]
                n_draws += 1
        remaining_mass = size_mass[sizes_left].sum()
        for m_, count in drawn.values():
            masks.append(m_)
            weights.append(remaining_mass * count / n_draws)

    masks = np.array(masks, dtype=bool)
    weights = np.array(weights)
    return KernelDesign(masks, weights, _projection(masks, weights))


def _projection(masks: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Linear map from centred coalition values to the first d-1 attributions.

    Efficiency is imposed by substituting the last attribution as the
    remainder, which turns the constrained weighted fit into an ordinary one.
    """
    Z = masks.astype(float)
    A = Z[:, :-1] - Z[:, -1:]
    AtW = A.T * weights
    gram = AtW @ A
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise np.linalg.LinAlgError(
            "coalition design is singular; increase the number of coalitions"
        )
    return np.linalg.solve(gram, AtW)


def _kernel_solve(design: KernelDesign, values, full, base):
    """Attributions for one or more rows given their coalition values."""
    values = np.atleast_2d(values)
    full = np.atleast_1d(full)
    total = full - base
    last = design.masks[:, -1].astype(float)
    target = values - base - last[None, :] * total[:, None]
    head = target @ design.projection.T
    tail = total - head.sum(axis=1)
    return np.column_stack([head, tail])


def shapley_kernel(model: Model, row, background, n_coalitions: int | None = None,
                   seed: int = 0, design: KernelDesign | None = None):
    """KernelSHAP estimate for one row; returns (phi, base_value)."""
    background = _check_background(background)
    row = np.asarray(row, dtype=float)
    d = background.shape[1]
    if design is None:
        if n_coalitions is None:
            n_coalitions = default_budget(d)
        design = kernel_design(d, n_coalitions, seed)
    base = float(np.mean(model(background)))
    full = float(np.asarray(model(row[None, :]))[0])
    values = _masked_values(model, row, design.masks, background)
    return _kernel_solve(design, values, full, base)[0], base


def default_budget(d: int) -> int:
    return min(2 * d + 2048, (1 << d) - 2) if d < 62 else 2 * d + 2048


def explain_rows(model: Model, rows, background, feature_names: Sequence[str],
                 n_coalitions: int | None = None, seed: int = 0,
                 method: str = "kernel") -> AttributionMatrix:
    """Attribute every row of ``rows`` against one shared background."""
    background = _check_background(background)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    d = background.shape[1]
    phi = np.empty((rows.shape[0], d))
    base = float(np.mean(model(background)))
    if method == "exact":
        for i, r in enumerate(rows):
            phi[i], _ = shapley_exact(model, r, background)
    elif method == "kernel":
        design = kernel_design(d, n_coalitions or default_budget(d), seed)
        full = np.asarray(model(rows), dtype=float)
        for i, r in enumerate(rows):
            values = _masked_values(model, r, design.masks, background)
            phi[i] = _kernel_solve(design, values, full[i], base)[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    return AttributionMatrix(phi, base, background, tuple(feature_names))


def local_accuracy_check(attr: AttributionMatrix, model: Model, rows) -> float:
    pred = np.asarray(model(np.atleast_2d(rows)), dtype=float)
    recon = attr.base_value + attr.phi.sum(axis=1)
    return float(np.max(np.abs(recon - pred)))


def rank_features(attr: AttributionMatrix) -> FeatureRanking:
    """Order features by mean absolute attribution, ties by column index."""
    if attr.phi.shape[0] < 1:
        raise ValueError("no rows to rank")
    score = np.mean(np.abs(attr.phi), axis=0)
    order = np.lexsort((np.arange(len(score)), -score))
    return FeatureRanking(
        tuple(attr.feature_names[i] for i in order),
        tuple(float(score[i]) for i in order),
    )


def select_top_k(ranking: FeatureRanking, k: int) -> list[str]:
    if not 1 <= k <= len(ranking.names):
        raise ValueError(f"k must be in [1, {len(ranking.names)}], got {k}")
    return list(ranking.names[:k])


def sample_background(X, size: int = 100, seed: int = 0) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[0] <= size:
        return X.copy()
    idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], size, replace=False))
    return X[idx]


def write_attributions(attr: AttributionMatrix, csv_path, row_ids=None) -> None:
    csv_path = Path(csv_path)
    n = attr.phi.shape[0]
    row_ids = np.arange(n) if row_ids is None else row_ids
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", *attr.feature_names, "base_value"])
        for rid, phi in zip(row_ids, attr.phi):
            w.writerow([int(rid), *(repr(float(v)) for v in phi), repr(attr.base_value)])
    csv_path.with_suffix(".json").write_text(json.dumps({
        "feature_names": list(attr.feature_names),
        "base_value": attr.base_value,
        "background": attr.background.tolist(),
    }))


def read_attributions(csv_path) -> tuple[AttributionMatrix, np.ndarray]:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    with csv_path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        body = np.array([[float(v) for v in row] for row in reader])
    attr = AttributionMatrix(body[:, 1:-1], meta["base_value"],
                             np.array(meta["background"]), tuple(meta["feature_names"]))
    return attr, body[:, 0].astype(np.int64)


def write_ranking(ranking: FeatureRanking, path) -> None:
    Path(path).write_text(json.dumps(
        [{"feature": n, "mean_abs_shap": s} for n, s in zip(ranking.names, ranking.scores)],
        indent=2,
    ))


def read_ranking(path) -> FeatureRanking:
    doc = json.loads(Path(path).read_text())
    return FeatureRanking(tuple(e["feature"] for e in doc),
                          tuple(e["mean_abs_shap"] for e in doc))
