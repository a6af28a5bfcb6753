"""UMAP reduction to two dimensions.

Exact k-nearest neighbours, per-point smoothed distance calibration, fuzzy
union of the directed graph, spectral initialisation and an edge-sampled
SGD layout with negative sampling. The layout loop is single threaded and
driven by a seeded linear congruential generator, so a given seed always
produces the same bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numba
import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh

SMOOTH_K_TOLERANCE = 1e-5
MIN_DIST_SCALE = 1e-3
NEGATIVE_SAMPLE_RATE = 5


class EmbeddingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class NeighborGraph:
    indices: np.ndarray
    distances: np.ndarray
    rho: np.ndarray | None = None
    sigma: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.indices.shape[1]


@dataclass(frozen=True)
class UmapConfig:
    n_neighbors: int = 15
    min_dist: float = 0.1
    spread: float = 1.0
    n_epochs: int = 200
    n_components: int = 2
    seed: int = 0


def knn_graph(data, k: int = 15, metric: str = "euclidean",
              chunk_bytes: int = 1 << 26) -> NeighborGraph:
    """Exact k nearest neighbours of every row, excluding the row itself.

    Neighbours are ordered by distance, ties by index.
    """
    if metric != "euclidean":
        raise ValueError(f"unsupported metric {metric!r}")
    X = np.asarray(data, dtype=float)
    n, d = X.shape
    if k < 1 or k >= n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k))
    step = max(1, chunk_bytes // (8 * n * max(d, 1)))
    for start in range(0, n, step):
        block = X[start:start + step]
        diff = block[:, None, :] - X[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        rows = np.arange(len(block))
        dist[rows, start + rows] = np.inf
        kth = np.partition(dist, k - 1, axis=1)[:, k - 1:k]
        for r in rows:
            cand = np.flatnonzero(dist[r] <= kth[r])
            cand = cand[np.argsort(dist[r, cand], kind="stable")[:k]]
            indices[start + r] = cand
            distances[start + r] = dist[r, cand]
    return NeighborGraph(indices, distances)


def smooth_knn(graph: NeighborGraph, target: float | None = None,
               n_iter: int = 64) -> NeighborGraph:
    """Calibrate per-row ``rho`` and ``sigma``.

    ``rho`` is the distance to the nearest neighbour at non-zero distance;
    ``sigma`` is bisected so that ``sum_j exp(-max(0, d_j - rho) / sigma)``
    hits ``target`` (``log2(k)`` by default). The search runs in units of the
    row's mean distance, so scaling the data scales ``sigma`` exactly.
    """
    dist = graph.distances
    n, k = dist.shape
    if target is None:
        target = np.log2(k)
    rho = np.zeros(n)
    sigma = np.zeros(n)
    global_mean = float(np.mean(dist))
    for i in range(n):
        row = dist[i]
        nonzero = row[row > 0.0]
        if nonzero.size:
            rho[i] = nonzero[0]
        scale = float(np.mean(row)) or global_mean or 1.0
        shifted = np.maximum(row - rho[i], 0.0) / scale
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(n_iter):
            psum = float(np.sum(np.exp(-shifted / mid)))
            if abs(psum - target) < SMOOTH_K_TOLERANCE:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else (lo + hi) / 2.0
        sigma[i] = max(mid, MIN_DIST_SCALE) * scale
    return NeighborGraph(graph.indices, graph.distances, rho, sigma)


def membership_strengths(graph: NeighborGraph) -> sp.csr_matrix:
    """Directed weights ``exp(-max(0, d_ij - rho_i) / sigma_i)``."""
    if graph.sigma is None:
        graph = smooth_knn(graph)
    n, k = graph.indices.shape
    w = np.exp(-np.maximum(graph.distances - graph.rho[:, None], 0.0) / graph.sigma[:, None])
    rows = np.repeat(np.arange(n), k)
    cols = graph.indices.ravel()
    keep = rows != cols
    return sp.csr_matrix((w.ravel()[keep], (rows[keep], cols[keep])), shape=(n, n))


def fuzzy_union(graph: NeighborGraph | sp.spmatrix) -> sp.csr_matrix:
    """Symmetrise with the probabilistic t-conorm ``a + b - a*b``."""
    W = graph if sp.issparse(graph) else membership_strengths(graph)
    W = sp.csr_matrix(W)
    Wt = W.T.tocsr()
    prod = W.multiply(Wt)
    G = (W + Wt - prod).tocsr()
    G.setdiag(0.0)
    G.eliminate_zeros()
    G.sort_indices()
    return G


@lru_cache(maxsize=None)
def find_ab_params(min_dist: float = 0.1, spread: float = 1.0) -> tuple[float, float]:
    """Least-squares fit of ``1 / (1 + a x^(2b))`` to the offset exponential."""

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2 * b))

    xv = np.linspace(0, spread * 3, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))
    (a, b), _ = curve_fit(curve, xv, yv)
    return float(a), float(b)


def _lcg_init(seed: int) -> np.ndarray:
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64((seed * 6364136223846793005 + 1442695040888963407) % (1 << 64))
    return state


def spectral_layout(G: sp.csr_matrix, dim: int, seed: int) -> np.ndarray | None:
    """Bottom non-trivial eigenvectors of the normalised Laplacian.

    Returns ``None`` when the graph is disconnected or ARPACK fails, letting
    the caller fall back to a random start.
    """
    n = G.shape[0]
    if n <= dim + 1:
        return None
    n_comp, _ = connected_components(G, directed=False)
    if n_comp > 1:
        return None
    deg = np.asarray(G.sum(axis=0)).ravel()
    inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    L = sp.identity(n, format="csr") - inv_sqrt @ G @ inv_sqrt
    k = dim + 1
    try:
        if n < 2000:
            vals, vecs = np.linalg.eigh(L.toarray())
        else:
            v0 = np.ones(n)
            vals, vecs = eigsh(L, k, which="SM", ncv=max(2 * k + 1, int(np.sqrt(n))),
                               tol=1e-4, v0=v0, maxiter=n * 5)
    except Exception:
        return None
    order = np.argsort(vals)[1:k]
    emb = vecs[:, order]
    # fix eigenvector signs so the result does not depend on the solver
    flip = np.sign(emb[np.argmax(np.abs(emb), axis=0), np.arange(emb.shape[1])])
    return emb * flip


def _initial_layout(G: sp.csr_matrix, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = G.shape[0]
    init = spectral_layout(G, dim, seed)
    if init is None:
        init = rng.uniform(-10.0, 10.0, size=(n, dim))
    else:
        init = init * (10.0 / np.max(np.abs(init)))
        init = init + rng.normal(scale=1e-4, size=init.shape)
    lo = init.min(axis=0)
    span = init.max(axis=0) - lo
    span[span == 0] = 1.0
    return 10.0 * (init - lo) / span


@numba.njit(cache=True)
def _lcg_next(state):
    state[0] = state[0] * np.uint64(6364136223846793005) + np.uint64(1442695040888963407)
    return state[0] >> np.uint64(33)


@numba.njit(cache=True)
def _clip(v):
    if v > 4.0:
        return 4.0
    if v < -4.0:
        return -4.0
    return v


@numba.njit(cache=True)
def _optimize_layout(emb, head, tail, epochs_per_sample, n_epochs, a, b,
                     neg_rate, rng_state):
    n_vertices, dim = emb.shape
    n_edges = head.shape[0]
    epochs_per_neg = epochs_per_sample / neg_rate
    next_sample = epochs_per_sample.copy()
    next_neg = epochs_per_neg.copy()
    for epoch in range(n_epochs):
        alpha = 1.0 - epoch / n_epochs
        for e in range(n_edges):
            if next_sample[e] > epoch:
                continue
            j = head[e]
            k = tail[e]
            dsq = 0.0
            for c in range(dim):
                diff = emb[j, c] - emb[k, c]
                dsq += diff * diff
            if dsq > 0.0:
                coeff = -2.0 * a * b * dsq ** (b - 1.0) / (a * dsq ** b + 1.0)
            else:
                coeff = 0.0
            for c in range(dim):
                g = _clip(coeff * (emb[j, c] - emb[k, c]))
                emb[j, c] += g * alpha
                emb[k, c] -= g * alpha
            next_sample[e] += epochs_per_sample[e]

            n_neg = int((epoch - next_neg[e]) / epochs_per_neg[e])
            for _ in range(n_neg):
                k = np.int64(_lcg_next(rng_state) % np.uint64(n_vertices))
                if k == j:
                    continue
                dsq = 0.0
                for c in range(dim):
                    diff = emb[j, c] - emb[k, c]
                    dsq += diff * diff
                if dsq > 0.0:
                    coeff = 2.0 * b / ((0.001 + dsq) * (a * dsq ** b + 1.0))
                    for c in range(dim):
                        g = _clip(coeff * (emb[j, c] - emb[k, c]))
                        emb[j, c] += g * alpha
            next_neg[e] += n_neg * epochs_per_neg[e]
        for v in range(n_vertices):
            for c in range(dim):
                if not np.isfinite(emb[v, c]):
                    return epoch
    return -1


def embed(fuzzy: sp.csr_matrix, n_epochs: int = 200, min_dist: float = 0.1,
          seed: int = 0, n_components: int = 2, spread: float = 1.0) -> np.ndarray:
    """Optimise a low-dimensional layout of a fuzzy graph."""
    G = sp.csr_matrix(fuzzy, dtype=float)
    n = G.shape[0]
    a, b = find_ab_params(min_dist, spread)

    G = G.tocoo()
    if G.nnz:
        keep = G.data >= G.data.max() / float(n_epochs)
        head, tail, w = G.row[keep], G.col[keep], G.data[keep]
    else:
        head = tail = np.zeros(0, dtype=np.int64)
        w = np.zeros(0)
    pruned = sp.csr_matrix((w, (head, tail)), shape=(n, n))

    emb = _initial_layout(pruned, n_components, seed)
    isolated = np.asarray(pruned.getnnz(axis=1)).ravel() == 0
    if isolated.any():
        jitter = np.random.default_rng(seed + 1).normal(
            scale=1e-2, size=(isolated.sum(), n_components))
        emb[isolated] = jitter

    if len(w):
        epochs_per_sample = w.max() / w
        failed = _optimize_layout(
            emb, head.astype(np.int64), tail.astype(np.int64),
            epochs_per_sample, n_epochs, a, b, float(NEGATIVE_SAMPLE_RATE),
            _lcg_init(seed),
        )
        if failed >= 0:
            raise EmbeddingDivergedError(f"non-finite coordinates at epoch {failed}")
    return emb


def umap_embed(data, config: UmapConfig = UmapConfig()) -> np.ndarray:
    """Full reduction: neighbours, calibration, fuzzy union, layout."""
    X = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    k = min(config.n_neighbors, X.shape[0] - 1)
    graph = smooth_knn(knn_graph(X, k))
    fuzzy = fuzzy_union(graph)
    return embed(fuzzy, config.n_epochs, config.min_dist, config.seed,
                 config.n_components, config.spread)


def knn_overlap(high, low, k: int = 15) -> float:
    """Mean fraction of each point's k neighbours shared between two spaces."""
    a = knn_graph(high, k).indices
    b = knn_graph(low, k).indices
    shared = [len(set(x) & set(y)) for x, y in zip(a, b)]
    return float(np.mean(shared)) / k


def write_embedding(emb: np.ndarray, csv_path, row_ids=None) -> None:
    row_ids = np.arange(len(emb)) if row_ids is None else row_ids
    with Path(csv_path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", *(f"u{c + 1}" for c in range(emb.shape[1]))])
        for rid, xy in zip(row_ids, emb):
            w.writerow([int(rid), *(repr(float(v)) for v in xy)])


def read_embedding(csv_path) -> tuple[np.ndarray, np.ndarray]:
    with Path(csv_path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        body = np.array([[float(v) for v in row] for row in reader])
    return body[:, 1:], body[:, 0].astype(np.int64)


def write_fuzzy_graph(G: sp.spmatrix, path) -> None:
    """Sparse triples (i, j, weight), for debugging."""
    C = sp.coo_matrix(G)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "weight"])
        for i, j, v in zip(C.row, C.col, C.data):
            w.writerow([int(i), int(j), repr(float(v))])
