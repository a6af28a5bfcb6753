"""Fuzzy c-means clustering with an explicit partition matrix."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class FcmConfig:
    n_clusters: int = 6
    m: float = 3.0
    tolerance: float = 1e-5
    max_iters: int = 300
    seed: int = 0


@dataclass
class FuzzyPartition:
    memberships: np.ndarray  # (c, n)
    centroids: np.ndarray  # (c, dim)
    objective_history: list[float] = field(default_factory=list)
    config: FcmConfig = FcmConfig()
    n_iter: int = 0

    @property
    def n_clusters(self) -> int:
        return self.memberships.shape[0]


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = centroids[:, None, :] - points[None, :, :]
    return np.einsum("cnk,cnk->cn", diff, diff)


def update_centroids(points: np.ndarray, u: np.ndarray, m: float) -> np.ndarray:
    um = u ** m
    return (um @ points) / um.sum(axis=1, keepdims=True)


def update_memberships(points: np.ndarray, centroids: np.ndarray, m: float) -> np.ndarray:
    """``u_ij = 1 / sum_k (d_ij / d_kj)^(2/(m-1))``.

    A point sitting exactly on a centroid belongs to it fully; if it sits on
    several coincident centroids the lowest index wins.
    """
    d2 = _sq_dists(points, centroids)
    zero = d2 == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        # (d_ij/d_kj)^(2/(m-1)) == (d2_ij/d2_kj)^(1/(m-1))
        inv = d2 ** (-1.0 / (m - 1.0))
        u = inv / inv.sum(axis=0, keepdims=True)
    hit = zero.any(axis=0)
    if hit.any():
        first = np.argmax(zero[:, hit], axis=0)
        u[:, hit] = 0.0
        u[first, np.flatnonzero(hit)] = 1.0
    return u


def fcm_objective(points, partition: FuzzyPartition | None = None, *,
                  memberships=None, centroids=None, m: float | None = None) -> float:
    """``sum_i sum_j u_ij^m ||x_j - v_i||^2``."""
    if partition is not None:
        memberships = partition.memberships
        centroids = partition.centroids
        m = partition.config.m
    points = np.asarray(points, dtype=float)
    return float(np.sum(memberships ** m * _sq_dists(points, centroids)))


def _initial_memberships(c: int, n: int, seed: int) -> np.ndarray:
    u = np.random.default_rng(seed).uniform(size=(c, n))
    return u / u.sum(axis=0, keepdims=True)


def fcm_fit(points, n_clusters: int = 6, m: float = 3.0, tolerance: float = 1e-5,
            max_iters: int = 300, seed: int = 0, *, _allow_single: bool = False) -> FuzzyPartition:
    """Alternate centroid and membership updates until memberships settle.

    The objective is recorded after every membership update; the
    alternating scheme never increases it.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ValueError("points must be an (n, dim) matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain NaN or infinite values")
    n = X.shape[0]
    if n_clusters < (1 if _allow_single else 2):
        raise ValueError("need at least 2 clusters")
    if n <= n_clusters:
        raise ValueError(f"need more points ({n}) than clusters ({n_clusters})")
    if m <= 1.0:
        raise ValueError("fuzziness m must exceed 1")
    config = FcmConfig(n_clusters, m, tolerance, max_iters, seed)

    u = _initial_memberships(n_clusters, n, seed)
    v = update_centroids(X, u, m)
    history = [fcm_objective(X, memberships=u, centroids=v, m=m)]
    it = 0
    for it in range(1, max_iters + 1):
        u_new = update_memberships(X, v, m)
        history.append(fcm_objective(X, memberships=u_new, centroids=v, m=m))
        v = update_centroids(X, u_new, m)
        history.append(fcm_objective(X, memberships=u_new, centroids=v, m=m))
        delta = np.max(np.abs(u_new - u))
        u = u_new
        if delta < tolerance:
            break
    return FuzzyPartition(u, v, history, config, it)


def hard_assign(partition: FuzzyPartition) -> np.ndarray:
    """Argmax cluster per point; ``np.argmax`` already prefers the lowest index."""
    return np.argmax(partition.memberships, axis=0).astype(np.int64)


def write_partition(partition: FuzzyPartition, csv_path, row_ids=None) -> None:
    csv_path = Path(csv_path)
    u = partition.memberships
    labels = hard_assign(partition)
    row_ids = np.arange(u.shape[1]) if row_ids is None else row_ids
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", *(f"u{i}" for i in range(u.shape[0])), "cluster"])
        for j, rid in enumerate(row_ids):
            w.writerow([int(rid), *(repr(float(x)) for x in u[:, j]), int(labels[j])])
    csv_path.with_name(csv_path.stem + "_centroids.json").write_text(json.dumps({
        "centroids": partition.centroids.tolist(),
        "n_clusters": partition.config.n_clusters,
        "m": partition.config.m,
        "iterations": partition.n_iter,
        "objective": partition.objective_history[-1],
    }, indent=2))


def read_partition(csv_path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (memberships (c, n), hard labels, row ids)."""
    with Path(csv_path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        body = np.array([[float(v) for v in row] for row in reader])
    return body[:, 1:-1].T, body[:, -1].astype(np.int64), body[:, 0].astype(np.int64)
