"""Acceptance criteria, one test per criterion.

Each test appends a ``[criterion N] PASS|FAIL|BLOCKED ...`` line that is
printed in the terminal summary. Criteria that need the NASA FD001 file are
reported as BLOCKED (and skipped) when it is not present; point
``RULXAI_FD001`` at ``train_FD001.txt`` to run them.
"""

import json
import statistics
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, fd001_path
from rulxai import cluster_validation as cv
from rulxai import fuzzy_cmeans as fcm
from rulxai import manifold as mf
from rulxai import pipeline as pl
from rulxai import shapley as sh
from test_cluster_validation import all_oracle, random_instance
from test_manifold import _spread, two_blobs
from test_rul_net import _positive_net, fd_gradient_check
from test_shapley import small_mlp


class Report:
    def __init__(self):
        self.notes = []

    def note(self, text):
        self.notes.append(text)


@contextmanager
def criterion(number, title):
    report = Report()
    head = f"[criterion {number}] "
    try:
        yield report
    except pytest.skip.Exception as exc:
        ACCEPTANCE_LINES.append(f"{head}BLOCKED {title}: {exc.msg}")
        raise
    except BaseException as exc:
        ACCEPTANCE_LINES.append(f"{head}FAIL    {title}: {type(exc).__name__}")
        raise
    detail = "; ".join(report.notes)
    ACCEPTANCE_LINES.append(f"{head}PASS    {title}" + (f" ({detail})" if detail else ""))


def require_fd001():
    path = fd001_path()
    if path is None:
        pytest.skip("train_FD001.txt not available (set RULXAI_FD001)")
    return path


# ---------------------------------------------------------------- 1

def test_criterion_1_fd001_regression(tmp_path):
    with criterion(1, "FD001 test RMSE <= 13.0 within 15 minutes") as r:
        path = require_fd001()
        p = pl.Pipeline(pl.PipelineConfig(data=str(path), out=str(tmp_path), seed=0))
        t0 = time.perf_counter()
        p.train()
        seconds = time.perf_counter() - t0
        man = json.loads((tmp_path / "manifest.json").read_text())
        rmse = man["regression"]["test_rmse"]
        r.note(f"test RMSE {rmse:.3f}, {seconds:.0f}s")
        assert man["dataset"]["rows"] == 20631
        assert rmse <= 13.0
        assert seconds <= 15 * 60


# ---------------------------------------------------------------- 2

def test_criterion_2_gradient_check():
    with criterion(2, "backprop vs central differences, rel. error <= 1e-4") as r:
        state = _positive_net(5, 0)
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 1, (16, 5))
        y = rng.uniform(0, 10, 16)
        rel = fd_gradient_check(state, X, y, n_params=200)
        r.note(f"200 parameters, max rel. error {rel.max():.1e}")
        assert rel.max() <= 1e-4


# ---------------------------------------------------------------- 3

def test_criterion_3_shapley_axioms(tmp_path):
    with criterion(3, "Shapley axioms, full-coverage kernel, local accuracy") as r:
        d = 10
        rng = np.random.default_rng(3)
        f, g = small_mlp(d, 1), small_mlp(d, 2)
        # features 0 and 1 enter symmetrically; features 6-9 are unused
        def h(X):
            return 2 * np.tanh(X[:, 0] + X[:, 1]) + X[:, 2] * X[:, 3] + np.sin(X[:, 4]) * X[:, 5]
        bg = rng.normal(size=(8, d))
        bg = np.vstack([bg, bg[:, [1, 0, *range(2, d)]]])
        row = rng.normal(size=d)
        row[1] = row[0]
        phi, base = sh.shapley_exact(h, row, bg)
        assert abs(base + phi.sum() - h(row[None])[0]) <= 1e-9
        assert abs(phi[0] - phi[1]) <= 1e-9
        assert np.max(np.abs(phi[6:])) <= 1e-9
        pf, _ = sh.shapley_exact(f, row, bg)
        pg, _ = sh.shapley_exact(g, row, bg)
        pfg, _ = sh.shapley_exact(lambda X: f(X) + g(X), row, bg)
        assert np.max(np.abs(pfg - pf - pg)) <= 1e-9

        kern, _ = sh.shapley_kernel(f, row, bg, n_coalitions=2 ** d - 2)
        exact, _ = sh.shapley_exact(f, row, bg)
        err = np.max(np.abs(kern - exact))
        r.note(f"kernel vs exact {err:.1e}")
        assert err <= 1e-6

        path = fd001_path()
        if path is None:
            pytest.skip("axioms and kernel checks passed; FD001 local-accuracy part "
                        "needs train_FD001.txt")
        p = pl.Pipeline(pl.PipelineConfig(data=str(path), out=str(tmp_path), seed=0))
        p.train()
        table, _, split = p.load_table()
        state = p.load_model()
        rows = table.features[split["test"][:200]]
        bgd = sh.sample_background(table.features[split["train"]], 100, 0)
        attr = sh.explain_rows(state, rows, bgd, table.feature_names)
        resid = sh.local_accuracy_check(attr, state, rows)
        scale = float(np.max(np.abs(state(rows))))
        r.note(f"FD001 local-accuracy residual {resid:.1e} vs scale {scale:.1f}")
        assert resid <= 1e-4 * scale


# ---------------------------------------------------------------- 4

def test_criterion_4_metric_oracles():
    with criterion(4, "nine metrics vs brute-force oracles within 1e-9") as r:
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            t, p = random_instance(rng, n_max=50, classes=4, clusters=6)
            got, want = cv.all_metrics(t, p), all_oracle(t, p)
            worst = max(worst, max(abs(got[k] - want[k]) for k in cv.METRIC_KEYS))
        r.note(f"100 instances, max abs diff {worst:.1e}")
        assert worst <= 1e-9
        for labels in ([0, 0, 1, 1, 2, 3], [1, 1, 1, 0, 0, 2, 2, 3]):
            m = cv.all_metrics(labels, labels)
            for key in ("ARI", "RI", "AMI", "NMI", "Homogeneity", "Completeness",
                        "V-measure", "FMS"):
                assert m[key] == 1.0, key


# ---------------------------------------------------------------- 5

def test_criterion_5_fcm_properties():
    with criterion(5, "FCM objective monotone, columns sum to 1, symmetric 0.5/0.5") as r:
        runs = 0
        for seed in range(40):
            rng = np.random.default_rng(seed)
            X = rng.normal(size=(int(rng.integers(20, 200)), 2)) * rng.uniform(0.1, 10)
            part = fcm.fcm_fit(X, int(rng.integers(2, 7)), float(rng.uniform(1.5, 4.0)), seed=seed)
            assert np.all(np.diff(part.objective_history) <= 0)
            assert np.max(np.abs(part.memberships.sum(axis=0) - 1)) <= 1e-9
            runs += 1
        X = np.array([[-5.0, 0.1], [-5.0, -0.1], [5.0, 0.1], [5.0, -0.1], [0.0, 0.0]])
        part = fcm.fcm_fit(X, 2, 3.0, tolerance=1e-13, max_iters=2000, seed=2)
        dev = np.max(np.abs(part.memberships[:, 4] - 0.5))
        r.note(f"{runs} runs; equidistant deviation {dev:.1e}")
        assert dev <= 1e-6


# ---------------------------------------------------------------- 6

def test_criterion_6_manifold():
    with criterion(6, "two-blob separation, kNN overlap, byte-identical embeddings") as r:
        X, labels = two_blobs(seed=0, n=200, d=10)
        emb = mf.umap_embed(X, mf.UmapConfig(seed=0))
        sep, within = _spread(emb, labels)
        ov = mf.knn_overlap(X, emb, 15)
        rand = mf.knn_overlap(X, np.random.default_rng(0).uniform(-10, 10, emb.shape), 15)
        again = mf.umap_embed(X, mf.UmapConfig(seed=0))
        r.note(f"separation/spread {sep / within:.1f}, overlap ratio {ov / rand:.1f}")
        assert sep >= 3 * within
        assert ov >= 3 * rand
        assert emb.tobytes() == again.tobytes()


# ---------------------------------------------------------------- 7

@pytest.mark.slow
def test_criterion_7_trend_over_seeds(tmp_path):
    with criterion(7, "5-seed trend: SHAP cases vs raw cases") as r:
        path = require_fd001()
        results, seconds = [], []
        for seed in range(5):
            t0 = time.perf_counter()
            cfg = pl.PipelineConfig(data=str(path), out=str(tmp_path / f"seed{seed}"), seed=seed)
            results.append(pl.run_all(cfg))
            seconds.append(time.perf_counter() - t0)
        med = {c: {k: statistics.median(res[c][k] for res in results) for k in cv.METRIC_KEYS}
               for c in (1, 2, 3, 4)}
        r.note(f"median AMI case1 {med[1]['AMI']:.3f} case3 {med[3]['AMI']:.3f}; "
               f"slowest run {max(seconds) / 60:.1f} min")
        assert med[3]["AMI"] >= med[1]["AMI"] - 0.02
        for key in ("AMI", "Homogeneity"):
            assert abs(med[4][key] - med[2][key]) <= 0.05
        assert max(seconds) <= 60 * 60


# ---------------------------------------------------------------- 8

def quick_config(data, out, **over):
    base = dict(data=str(data), out=str(out), seed=0, epochs=10, shap_background=50,
                shap_coalitions=300)
    base.update(over)
    return pl.PipelineConfig(**base)


def test_criterion_8_sensor_reduction(small_fleet, tmp_path):
    with criterion(8, "case 2 uses 5 retained features, reduction >= 70%") as r:
        data = fd001_path() or small_fleet
        p = pl.Pipeline(quick_config(data, tmp_path, cases=(2,), umap_epochs=50))
        p.embed_case(2)
        man = json.loads((tmp_path / "manifest.json").read_text())
        retained = man["dataset"]["retained_features"]
        case2 = json.loads((tmp_path / "cases" / "case2" / "case.json").read_text())
        reduction = 1 - len(case2["features"]) / len(retained)
        r.note(f"{'FD001' if data != small_fleet else 'synthetic fleet'}: "
               f"{len(case2['features'])} of {len(retained)}, reduction {reduction:.2f}")
        assert case2["dimensions"] == 5 == len(case2["features"])
        assert set(case2["features"]) <= set(retained)
        assert case2["features"] == man["attribution"]["top_k_features"]
        assert reduction >= 0.70


# ---------------------------------------------------------------- 9

def test_criterion_9_run_all_determinism(small_fleet, tmp_path):
    with criterion(9, "run-all twice gives byte-identical tables and embeddings") as r:
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            pl.run_all(quick_config(small_fleet, out))
        names = ["comparison.csv", "comparison.json",
                 *(f"cases/case{c}/{f}" for c in (1, 2, 3, 4)
                   for f in ("embedding.csv", "metrics.json", "partition.csv"))]
        for name in names:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
        r.note(f"{len(names)} files compared")

