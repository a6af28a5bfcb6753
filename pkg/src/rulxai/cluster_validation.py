"""External cluster-validation scores computed from a contingency table.

Natural logarithms throughout (MI in nats). NMI and AMI normalise by the
arithmetic mean of the two label entropies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln

METRIC_KEYS = ("ARI", "RI", "AMI", "NMI", "MI", "Homogeneity", "Completeness",
               "V-measure", "FMS")
NORMALIZATION = "arithmetic"


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # (classes, clusters), int64

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def contingency(labels_true, labels_pred) -> ContingencyTable:
    t = np.asarray(labels_true)
    p = np.asarray(labels_pred)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError(f"label arrays differ in shape: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise ValueError("need at least one labelled point")
    _, ti = np.unique(t, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    counts = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(counts, (ti, pi), 1)
    return ContingencyTable(counts)


def _comb2(x):
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def pair_counts(table: ContingencyTable) -> tuple[int, int, int, int]:
    """(same/same, same-class/split, split-class/same-cluster, different/different)."""
    n = table.n
    total = n * (n - 1) // 2
    tp = int(_comb2(table.counts).sum())
    same_class = int(_comb2(table.row_sums).sum())
    same_cluster = int(_comb2(table.col_sums).sum())
    fn = same_class - tp
    fp = same_cluster - tp
    tn = total - tp - fn - fp
    return tp, fn, fp, tn


def rand_scores(table: ContingencyTable) -> tuple[float, float]:
    n = table.n
    if n < 2:
        raise ValueError("Rand scores need at least two points")
    tp, fn, fp, tn = pair_counts(table)
    total = tp + fn + fp + tn
    ri = (tp + tn) / total

    sum_rows = tp + fn
    sum_cols = tp + fp
    expected = sum_rows * sum_cols / total
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        # both partitions trivial in the same way (all singletons or one block)
        ari = 1.0
    else:
        ari = (tp - expected) / (max_index - expected)
    return float(ri), float(ari)


def _entropy(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    counts = counts[counts > 0]
    n = counts.sum()
    p = counts / n
    return float(-np.sum(p * np.log(p)))


def conditional_entropy(table: ContingencyTable, given: str = "pred") -> float:
    """H(true | pred) or, with ``given="true"``, H(pred | true)."""
    c = table.counts.astype(float)
    n = c.sum()
    margin = table.col_sums if given == "pred" else table.row_sums
    margin = margin.astype(float)
    i, j = np.nonzero(c)
    nij = c[i, j]
    denom = margin[j] if given == "pred" else margin[i]
    return float(-np.sum(nij / n * np.log(nij / denom)))


def mutual_info(table: ContingencyTable) -> float:
    """I(true; pred) = H(true) - H(true | pred), clamped at 0."""
    mi = _entropy(table.row_sums) - conditional_entropy(table, "pred")
    return float(max(mi, 0.0))


def expected_mutual_info(table: ContingencyTable) -> float:
    """Expected MI under the permutation (hypergeometric) model."""
    n = table.n
    a = table.row_sums.astype(np.int64)
    b = table.col_sums.astype(np.int64)
    emi = 0.0
    lg_n = gammaln(n + 1)
    lg_a, lg_b = gammaln(a + 1), gammaln(b + 1)
    lg_na, lg_nb = gammaln(n - a + 1), gammaln(n - b + 1)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1)
            term = nij / n * (np.log(n * nij) - np.log(ai * bj))
            log_p = (lg_a[i] + lg_b[j] + lg_na[i] + lg_nb[j] - lg_n
                     - gammaln(nij + 1) - gammaln(ai - nij + 1)
                     - gammaln(bj - nij + 1) - gammaln(n - ai - bj + nij + 1))
            emi += float(np.sum(term * np.exp(log_p)))
    return emi


def mutual_info_scores(table: ContingencyTable) -> tuple[float, float, float]:
    """(MI, NMI, AMI)."""
    mi = mutual_info(table)
    h_true = _entropy(table.row_sums)
    h_pred = _entropy(table.col_sums)
    r, s = table.counts.shape
    if r == s == 1 or (r == s == table.n):
        # identical trivial partitions
        return mi, 1.0, 1.0
    mean_h = (h_true + h_pred) / 2.0
    nmi = mi / mean_h if mean_h > 0 else 0.0
    if h_true == 0.0 or h_pred == 0.0:
        return mi, nmi, 0.0
    emi = expected_mutual_info(table)
    denom = mean_h - emi
    if denom == 0.0:
        ami = 1.0 if mi - emi == 0.0 else 0.0
    else:
        ami = (mi - emi) / denom
    return mi, float(nmi), float(ami)


def v_measure_scores(table: ContingencyTable, beta: float = 1.0) -> tuple[float, float, float]:
    """(homogeneity, completeness, V-measure)."""
    h_true = _entropy(table.row_sums)
    h_pred = _entropy(table.col_sums)
    homogeneity = 1.0 if h_true == 0 else 1.0 - conditional_entropy(table, "pred") / h_true
    completeness = 1.0 if h_pred == 0 else 1.0 - conditional_entropy(table, "true") / h_pred
    denom = beta * homogeneity + completeness
    v = 0.0 if denom == 0 else (1.0 + beta) * homogeneity * completeness / denom
    return float(homogeneity), float(completeness), float(v)


def fowlkes_mallows(table: ContingencyTable) -> float:
    if table.n < 2:
        raise ValueError("Fowlkes-Mallows needs at least two points")
    tp, fn, fp, _ = pair_counts(table)
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    return float(tp / np.sqrt(float(tp + fp) * float(tp + fn)))


def all_metrics(labels_true, labels_pred) -> dict[str, float]:
    """Every score, keyed as in the comparison table."""
    table = contingency(labels_true, labels_pred)
    ri, ari = rand_scores(table)
    mi, nmi, ami = mutual_info_scores(table)
    h, c, v = v_measure_scores(table)
    fms = fowlkes_mallows(table)
    return {"ARI": ari, "RI": ri, "AMI": ami, "NMI": nmi, "MI": mi,
            "Homogeneity": h, "Completeness": c, "V-measure": v, "FMS": fms}


def write_metrics(metrics: dict, path, meta: dict | None = None) -> None:
    """Flat JSON keyed by metric name; ``meta`` goes to a sidecar file."""
    path = Path(path)
    path.write_text(json.dumps({k: metrics[k] for k in METRIC_KEYS}, indent=2))
    info = {"log_base": "e", "nmi_normalization": NORMALIZATION}
    if meta:
        info.update(meta)
    path.with_name(path.stem + "_meta.json").write_text(json.dumps(info, indent=2))
