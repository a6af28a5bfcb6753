import math
from collections import Counter
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rulxai import cluster_validation as cv


# ---------------------------------------------------------------- oracles
# Written against the textbook definitions, sharing no code with the module.

def pair_oracle(t, p):
    tp = fn = fp = tn = 0
    for i, j in combinations(range(len(t)), 2):
        same_t, same_p = t[i] == t[j], p[i] == p[j]
        if same_t and same_p:
            tp += 1
        elif same_t:
            fn += 1
        elif same_p:
            fp += 1
        else:
            tn += 1
    return tp, fn, fp, tn


def rand_oracle(t, p):
    tp, fn, fp, tn = pair_oracle(t, p)
    ri = (tp + tn) / (tp + fn + fp + tn)
    # pair-confusion form of the Hubert-Arabie index
    den = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn)
    ari = 1.0 if den == 0 else 2.0 * (tp * tn - fn * fp) / den
    return ri, ari


def fms_oracle(t, p):
    tp, fn, fp, _ = pair_oracle(t, p)
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    return tp / math.sqrt((tp + fp) * (tp + fn))


def entropy_oracle(labels):
    n = len(labels)
    return -sum(c / n * math.log(c / n) for c in Counter(labels).values())


def mi_oracle(t, p):
    n = len(t)
    a, b, nij = Counter(t), Counter(p), Counter(zip(t, p))
    return sum(c / n * math.log(n * c / (a[i] * b[j])) for (i, j), c in nij.items())


def cond_entropy_oracle(t, p):
    """H(t | p)."""
    n = len(t)
    b, nij = Counter(p), Counter(zip(t, p))
    return -sum(c / n * math.log(c / b[j]) for (_, j), c in nij.items())


def emi_oracle(t, p):
    n = len(t)
    total = 0.0
    for ai in Counter(t).values():
        for bj in Counter(p).values():
            for k in range(max(1, ai + bj - n), min(ai, bj) + 1):
                prob = math.comb(bj, k) * math.comb(n - bj, ai - k) / math.comb(n, ai)
                total += k / n * math.log(n * k / (ai * bj)) * prob
    return total


def mi_family_oracle(t, p):
    mi = mi_oracle(t, p)
    ht, hp = entropy_oracle(t), entropy_oracle(p)
    kt, kp = len(set(t)), len(set(p))
    if (kt == kp == 1) or (kt == kp == len(t)):
        return mi, 1.0, 1.0
    mean_h = (ht + hp) / 2
    nmi = mi / mean_h if mean_h > 0 else 0.0
    if ht == 0 or hp == 0:
        return mi, nmi, 0.0
    emi = emi_oracle(t, p)
    return mi, nmi, (mi - emi) / (mean_h - emi)


def vmeasure_oracle(t, p):
    ht, hp = entropy_oracle(t), entropy_oracle(p)
    h = 1.0 if ht == 0 else 1 - cond_entropy_oracle(t, p) / ht
    c = 1.0 if hp == 0 else 1 - cond_entropy_oracle(p, t) / hp
    v = 0.0 if h + c == 0 else 2 * h * c / (h + c)
    return h, c, v


def all_oracle(t, p):
    t, p = list(t), list(p)
    ri, ari = rand_oracle(t, p)
    mi, nmi, ami = mi_family_oracle(t, p)
    h, c, v = vmeasure_oracle(t, p)
    return {"ARI": ari, "RI": ri, "AMI": ami, "NMI": nmi, "MI": mi,
            "Homogeneity": h, "Completeness": c, "V-measure": v, "FMS": fms_oracle(t, p)}


def random_instance(rng, n_max=50, classes=4, clusters=6):
    n = int(rng.integers(2, n_max + 1))
    return rng.integers(0, classes, n), rng.integers(0, clusters, n)


# ---------------------------------------------------------------- tests

def test_contingency_examples():
    np.testing.assert_array_equal(cv.contingency([0, 0, 1, 1], [0, 0, 1, 1]).counts,
                                  [[2, 0], [0, 2]])
    np.testing.assert_array_equal(cv.contingency([0, 1], [1, 0]).counts, [[0, 1], [1, 0]])


def test_contingency_marginals_are_histograms():
    rng = np.random.default_rng(0)
    t, p = rng.integers(0, 4, 30), rng.integers(0, 6, 30)
    table = cv.contingency(t, p)
    assert table.n == 30
    np.testing.assert_array_equal(table.row_sums, np.bincount(t)[np.unique(t)])
    np.testing.assert_array_equal(table.col_sums, np.bincount(p)[np.unique(p)])


def test_contingency_length_mismatch():
    with pytest.raises(ValueError):
        cv.contingency([0, 1], [0, 1, 1])


def test_rand_small_example_matches_pairs():
    t, p = [0, 0, 1, 2], [0, 0, 1, 1]
    # pairs: (0,1) agree-same; (2,3) split-class same-cluster; the rest agree-different
    assert pair_oracle(t, p) == (1, 0, 1, 4)
    ri, ari = cv.rand_scores(cv.contingency(t, p))
    assert ri == pytest.approx(5 / 6, abs=1e-15)
    assert ari == pytest.approx(rand_oracle(t, p)[1], abs=1e-12)


def test_rand_needs_two_points():
    with pytest.raises(ValueError):
        cv.rand_scores(cv.contingency([0], [0]))
    with pytest.raises(ValueError):
        cv.fowlkes_mallows(cv.contingency([0], [0]))


def test_fms_examples():
    assert cv.fowlkes_mallows(cv.contingency([0, 0, 1, 1], [0, 1, 0, 1])) == 0.0
    assert cv.fowlkes_mallows(cv.contingency([0, 0, 1, 1], [1, 1, 0, 0])) == 1.0


@pytest.mark.parametrize("seed", range(10))
def test_fms_and_rand_match_pair_enumeration(seed):
    t, p = random_instance(np.random.default_rng(1000 + seed), n_max=30)
    table = cv.contingency(t, p)
    assert cv.pair_counts(table) == pair_oracle(list(t), list(p))
    assert cv.fowlkes_mallows(table) == pytest.approx(fms_oracle(list(t), list(p)), abs=1e-12)


def test_mi_two_balanced_classes():
    mi, nmi, _ = cv.mutual_info_scores(cv.contingency([0, 0, 1, 1], [0, 0, 1, 1]))
    assert mi == pytest.approx(math.log(2), abs=1e-15)
    assert nmi == 1.0


def test_mi_independent_product_table():
    # counts proportional to an outer product of marginals
    t = [0] * 6 + [1] * 6
    p = [0, 0, 1, 1, 2, 2] * 2
    mi, nmi, _ = cv.mutual_info_scores(cv.contingency(t, p))
    assert mi == 0.0 and nmi == 0.0


def test_ami_against_hypergeometric_sum():
    rng = np.random.default_rng(20)
    t, p = rng.integers(0, 3, 20), rng.integers(0, 4, 20)
    _, _, ami = cv.mutual_info_scores(cv.contingency(t, p))
    assert ami == pytest.approx(mi_family_oracle(list(t), list(p))[2], abs=1e-9)
    assert cv.expected_mutual_info(cv.contingency(t, p)) == pytest.approx(
        emi_oracle(list(t), list(p)), abs=1e-12)


def test_v_measure_examples():
    h, _, _ = cv.v_measure_scores(cv.contingency([0, 0, 1, 1, 2], [0, 1, 2, 3, 4]))
    assert h == 1.0
    h, c, v = cv.v_measure_scores(cv.contingency([0, 1, 1, 2], [0, 0, 0, 0]))
    assert (h, c, v) == (0.0, 1.0, 0.0)
    assert cv.v_measure_scores(cv.contingency([3, 1, 1], [0, 2, 2]))[2] == 1.0


@pytest.mark.parametrize("labels", [[0, 0, 1, 1, 2], [4, 4, 4], [0, 1, 2, 3], [1, 0, 2, 2, 0, 1]])
def test_identity_scores_exactly_one(labels):
    m = cv.all_metrics(labels, labels)
    for key in ("ARI", "RI", "AMI", "NMI", "Homogeneity", "Completeness", "V-measure"):
        assert m[key] == 1.0, key
    if len(set(labels)) < len(labels):
        assert m["FMS"] == 1.0
    assert m["MI"] == pytest.approx(entropy_oracle(labels), abs=1e-15)


def test_single_class_against_split_prediction():
    m = cv.all_metrics([0, 0, 0, 0], [0, 0, 1, 1])
    assert m["NMI"] == 0.0 and m["AMI"] == 0.0 and m["MI"] == 0.0
    assert m["Homogeneity"] == 1.0 and m["Completeness"] == 0.0


@pytest.mark.parametrize("seed", range(100))
def test_all_metrics_match_oracles(seed):
    t, p = random_instance(np.random.default_rng(seed))
    got = cv.all_metrics(t, p)
    want = all_oracle(t, p)
    for key in cv.METRIC_KEYS:
        assert got[key] == pytest.approx(want[key], abs=1e-9), key


def test_against_scikit_learn():
    metrics = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(99)
    for _ in range(20):
        t, p = random_instance(rng)
        got = cv.all_metrics(t, p)
        assert got["ARI"] == pytest.approx(metrics.adjusted_rand_score(t, p), abs=1e-9)
        assert got["RI"] == pytest.approx(metrics.rand_score(t, p), abs=1e-9)
        assert got["MI"] == pytest.approx(metrics.mutual_info_score(t, p), abs=1e-9)
        assert got["NMI"] == pytest.approx(
            metrics.normalized_mutual_info_score(t, p, average_method="arithmetic"), abs=1e-9)
        assert got["AMI"] == pytest.approx(
            metrics.adjusted_mutual_info_score(t, p, average_method="arithmetic"), abs=1e-9)
        h, c, v = metrics.homogeneity_completeness_v_measure(t, p)
        assert (got["Homogeneity"], got["Completeness"], got["V-measure"]) == pytest.approx(
            (h, c, v), abs=1e-9)
        assert got["FMS"] == pytest.approx(metrics.fowlkes_mallows_score(t, p), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5)), min_size=2, max_size=40),
       st.permutations(range(6)), st.permutations(range(4)))
def test_relabeling_invariance(pairs, perm_p, perm_t):
    t = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    base = cv.all_metrics(t, p)
    moved = cv.all_metrics(np.array(perm_t)[t], np.array(perm_p)[p] + 10)
    for key in cv.METRIC_KEYS:
        assert moved[key] == pytest.approx(base[key], abs=1e-12), key


def test_write_metrics(tmp_path):
    import json
    m = cv.all_metrics([0, 0, 1, 1], [0, 1, 1, 1])
    cv.write_metrics(m, tmp_path / "metrics.json", {"case": 1})
    data = json.loads((tmp_path / "metrics.json").read_text())
    assert list(data) == list(cv.METRIC_KEYS)
    meta = json.loads((tmp_path / "metrics_meta.json").read_text())
    assert meta["log_base"] == "e" and meta["nmi_normalization"] == "arithmetic"
    assert meta["case"] == 1
