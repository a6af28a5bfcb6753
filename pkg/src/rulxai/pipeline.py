"""End-to-end experiment: ingest, train, explain, then four data cases.

Every stage writes its artifacts under ``<out>/<stage>/`` together with a
``<stage>.stage.json`` marker holding a hash of the settings it depends on.
A stage whose hash and files are already on disk is not recomputed, so the
four cases share one model and one attribution matrix.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cluster_validation as cv
from . import cmapss_io as io
from . import fuzzy_cmeans as fcm
from . import manifold
from . import rul_net
from . import shapley

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


@dataclass(frozen=True)
class DataCase:
    id: int
    source: str  # "RawData" or "ShapValues"
    shap_informed: bool

    def dimensions(self, n_retained: int, top_k: int) -> int:
        return top_k if self.shap_informed else n_retained


CASES = {
    1: DataCase(1, "RawData", False),
    2: DataCase(2, "RawData", True),
    3: DataCase(3, "ShapValues", False),
    4: DataCase(4, "ShapValues", True),
}


@dataclass(frozen=True)
class PipelineConfig:
    data: str = ""
    out: str = "runs/default"
    seed: int = 0
    epochs: int = 100
    learning_rate: float = 1e-4
    batch_size: int = 32
    train_fraction: float = 0.8
    include_cycle: bool = False
    top_k: int = 5
    clusters: int = 6
    fuzziness: float = 3.0
    fcm_tolerance: float = 1e-5
    fcm_max_iters: int = 300
    neighbors: int = 15
    min_dist: float = 0.1
    umap_epochs: int = 200
    cases: tuple[int, ...] = (1, 2, 3, 4)
    truth: str = "ann"
    population: str = "test"
    shap_background: int = 100
    shap_coalitions: int = 0

    def __post_init__(self):
        if self.truth not in ("ann", "piecewise"):
            raise ValueError(f"truth must be 'ann' or 'piecewise', got {self.truth!r}")
        if self.population not in ("test", "all"):
            raise ValueError(f"population must be 'test' or 'all', got {self.population!r}")
        bad = [c for c in self.cases if c not in CASES]
        if bad:
            raise ValueError(f"unknown data cases {bad}")

    def snapshot(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["cases"] = list(self.cases)
        return doc


STAGE_FIELDS = {
    "ingest": ("data", "include_cycle", "train_fraction", "seed"),
    "train": ("epochs", "learning_rate", "batch_size", "seed"),
    "explain": ("population", "shap_background", "shap_coalitions", "seed", "top_k"),
    "embed": ("neighbors", "min_dist", "umap_epochs", "seed"),
    "cluster": ("clusters", "fuzziness", "fcm_tolerance", "fcm_max_iters", "seed"),
    "validate": ("truth",),
}


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return repr(float(v))


class Pipeline:
    """Runs and caches the experiment stages for one configuration."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self._keys: dict[str, str] = {}
        self._manifest = self._load_manifest()

    # ---- bookkeeping -------------------------------------------------
    def _load_manifest(self) -> dict:
        path = self.out / "manifest.json"
        doc = json.loads(path.read_text()) if path.exists() else {}
        doc.setdefault("stages", {})
        return doc

    def _save_manifest(self) -> None:
        self._manifest["seed"] = self.config.seed
        self._manifest["config"] = self.config.snapshot()
        (self.out / "manifest.json").write_text(json.dumps(self._manifest, indent=2))

    def stage_dir(self, stage: str, case: int | None = None) -> Path:
        d = self.out / stage if case is None else self.out / "cases" / f"case{case}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _stage_key(self, stage: str, case: int | None = None) -> str:
        name = stage if case is None else f"{stage}:case{case}"
        if name in self._keys:
            return self._keys[name]
        upstream = {
            "ingest": [],
            "train": ["ingest"],
            "explain": ["train"],
            "embed": ["explain"],
            "cluster": ["embed"],
            "validate": ["cluster"],
        }[stage]
        doc = {f: getattr(self.config, f) for f in STAGE_FIELDS[stage]}
        if stage == "ingest":
            doc["data_sha256"] = self._dataset_hash()
        for up in upstream:
            doc[up] = self._stage_key(up, case if up in ("embed", "cluster") else None)
        if case is not None:
            doc["case"] = case
        key = _hash(doc)
        self._keys[name] = key
        return key

    def _dataset_hash(self) -> str:
        if "_data_sha" in self.__dict__:
            return self._data_sha
        if not self.config.data:
            raise PipelineError("ingest", "no dataset path given")
        path = Path(self.config.data)
        if not path.exists():
            raise PipelineError("ingest", f"dataset not found: {path}")
        self._data_sha = file_sha256(path)
        return self._data_sha

    def _cached(self, stage: str, outputs: list[Path], case: int | None = None) -> bool:
        marker = outputs[0].parent / f"{stage}.stage.json"
        if not marker.exists() or not all(p.exists() for p in outputs):
            return False
        return json.loads(marker.read_text()).get("key") == self._stage_key(stage, case)

    def _run(self, stage: str, outputs: list[Path], builder, case: int | None = None) -> None:
        name = stage if case is None else f"{stage}:case{case}"
        self._stage_key(stage, case)  # fail early on a bad dataset path
        if self._cached(stage, outputs, case):
            log.info("%s: cached", name)
            return
        t0 = time.perf_counter()
        try:
            builder()
        except PipelineError:
            raise
        except Exception as exc:
            self._save_manifest()
            raise PipelineError(name, f"{type(exc).__name__}: {exc}") from exc
        missing = [str(p) for p in outputs if not p.exists()]
        if missing:
            raise PipelineError(name, f"expected outputs not written: {missing}")
        (outputs[0].parent / f"{stage}.stage.json").write_text(
            json.dumps({"key": self._stage_key(stage, case)}))
        self._manifest["stages"][name] = {
            "outputs": [str(p.relative_to(self.out)) for p in outputs],
            "seconds": round(time.perf_counter() - t0, 3),
            "key": self._stage_key(stage, case),
        }
        self._save_manifest()
        log.info("%s: done in %.1fs", name, self._manifest["stages"][name]["seconds"])

    def _require(self, path: Path, stage: str) -> Path:
        if not path.exists():
            raise PipelineError(stage, f"missing upstream artifact {path}")
        return path

    # ---- ingest ------------------------------------------------------
    def ingest(self) -> None:
        d = self.stage_dir("ingest")
        outputs = [d / "table.csv", d / "table.json", d / "split.json"]

        def build():
            cfg = self.config
            raw = io.load_cmapss(cfg.data, include_cycle=cfg.include_cycle)
            table = io.drop_constant_columns(raw)
            labels = io.label_rul(table)
            normed = io.normalize(table)
            train, test = io.split_train_test(normed, labels, cfg.train_fraction, cfg.seed)
            io.write_table(normed, outputs[0], labels)
            outputs[2].write_text(json.dumps({
                "train": train.indices.tolist(),
                "test": test.indices.tolist(),
            }))
            dropped = [n for n in raw.feature_names if n not in table.feature_names]
            self._manifest["dataset"] = {
                "path": str(cfg.data),
                "sha256": self._dataset_hash(),
                "rows": raw.n_rows,
                "retained_features": list(table.feature_names),
                "dropped_constant": dropped,
            }

        self._run("ingest", outputs, build)

    def load_table(self) -> tuple[io.CycleTable, np.ndarray, dict]:
        d = self.out / "ingest"
        table, labels = io.read_table(self._require(d / "table.csv", "ingest"))
        split = json.loads(self._require(d / "split.json", "ingest").read_text())
        split = {k: np.array(v, dtype=np.int64) for k, v in split.items()}
        return table, labels, split

    # ---- train -------------------------------------------------------
    def train_config(self) -> rul_net.TrainConfig:
        c = self.config
        return rul_net.TrainConfig(c.learning_rate, c.batch_size, c.epochs, c.seed)

    def train(self) -> None:
        self.ingest()
        d = self.stage_dir("train")
        outputs = [d / "model.json", d / "history.csv", d / "predictions.csv"]

        def build():
            table, labels, split = self.load_table()
            X = table.features
            tr, te = split["train"], split["test"]
            cfg = self.train_config()
            state = rul_net.init(rul_net.default_dims(table.n_features), cfg.seed)
            state, history = rul_net.train(state, X[tr], labels[tr], cfg, X[te], labels[te])
            rul_net.save_model(outputs[0], state, {
                "feature_names": list(table.feature_names),
                "feature_min": table.feature_min.tolist(),
                "feature_max": table.feature_max.tolist(),
                "train_config": rul_net.config_dict(cfg),
            })
            _write_csv(outputs[1], ["epoch", "train_rmse", "test_rmse"],
                       [[h["epoch"], _fmt(h["train_rmse"]), _fmt(h["test_rmse"])]
                        for h in history])
            pred = rul_net.predict_rul(state, X)
            in_test = np.zeros(table.n_rows, dtype=bool)
            in_test[te] = True
            _write_csv(outputs[2],
                       ["row", "unit", "cycle", "split", "rul_true", "rul_pred",
                        "bin_true", "bin_pred"],
                       [[i, int(table.unit_ids[i]), int(table.cycle_numbers[i]),
                         "test" if in_test[i] else "train", _fmt(labels[i]), _fmt(pred[i]),
                         io.assign_bin(labels[i]).label, io.assign_bin(pred[i]).label]
                        for i in range(table.n_rows)])
            self._manifest["regression"] = {
                "train_rmse": history[-1]["train_rmse"],
                "test_rmse": history[-1]["test_rmse"],
            }

        self._run("train", outputs, build)

    def load_model(self) -> rul_net.RegressorState:
        state, _ = rul_net.load_model(self._require(self.out / "train" / "model.json", "train"))
        return state

    def predictions(self) -> np.ndarray:
        path = self._require(self.out / "train" / "predictions.csv", "train")
        with path.open(newline="") as fh:
            return np.array([float(r["rul_pred"]) for r in csv.DictReader(fh)])

    # ---- explain -----------------------------------------------------
    def evaluated_rows(self, split: dict) -> np.ndarray:
        if self.config.population == "test":
            return split["test"]
        return np.sort(np.concatenate([split["train"], split["test"]]))

    def explain(self) -> None:
        self.train()
        d = self.stage_dir("explain")
        outputs = [d / "shap.csv", d / "shap.json", d / "ranking.json", d / "top_k.json"]

        def build():
            cfg = self.config
            table, _, split = self.load_table()
            state = self.load_model()
            rows = self.evaluated_rows(split)
            background = shapley.sample_background(
                table.features[split["train"]], cfg.shap_background, cfg.seed)
            attr = shapley.explain_rows(
                state, table.features[rows], background, table.feature_names,
                n_coalitions=cfg.shap_coalitions or None, seed=cfg.seed)
            residual = shapley.local_accuracy_check(attr, state, table.features[rows])
            shapley.write_attributions(attr, outputs[0], rows)
            ranking = shapley.rank_features(attr)
            shapley.write_ranking(ranking, outputs[2])
            top = shapley.select_top_k(ranking, cfg.top_k)
            outputs[3].write_text(json.dumps(top, indent=2))
            self._manifest["attribution"] = {
                "rows": int(len(rows)),
                "local_accuracy_residual": residual,
                "top_k_features": top,
            }

        self._run("explain", outputs, build)

    def load_attributions(self) -> tuple[shapley.AttributionMatrix, np.ndarray]:
        return shapley.read_attributions(self._require(self.out / "explain" / "shap.csv",
                                                       "explain"))

    def top_features(self) -> list[str]:
        path = self._require(self.out / "explain" / "top_k.json", "explain")
        return json.loads(path.read_text())

    # ---- cases -------------------------------------------------------
    def case_matrix(self, case: DataCase) -> tuple[np.ndarray, np.ndarray, list[str]]:
        """Input rows for a data case: (matrix, row ids, feature names)."""
        table, _, split = self.load_table()
        rows = self.evaluated_rows(split)
        names = list(table.feature_names)
        if case.shap_informed:
            names = self.top_features()
        if case.source == "RawData":
            X = table.select(names).features[rows]
        else:
            attr, attr_rows = self.load_attributions()
            if not np.array_equal(attr_rows, rows):
                raise PipelineError("explain", "attribution rows do not match evaluated rows")
            X = attr.select(names)
        return X, rows, names

    def ground_truth_bins(self) -> np.ndarray:
        """Maintenance-bin codes for the evaluated rows."""
        table, labels, split = self.load_table()
        rows = self.evaluated_rows(split)
        if self.config.truth == "piecewise":
            return io.assign_bins(labels[rows])
        return io.assign_bins(self.predictions()[rows])

    def embed_case(self, case_id: int) -> None:
        self.explain()
        case = CASES[case_id]
        d = self.stage_dir("embed", case_id)
        outputs = [d / "embedding.csv", d / "case.json"]

        def build():
            cfg = self.config
            X, rows, names = self.case_matrix(case)
            umap_cfg = manifold.UmapConfig(cfg.neighbors, cfg.min_dist, 1.0,
                                           cfg.umap_epochs, 2, cfg.seed)
            emb = manifold.umap_embed(X, umap_cfg)
            manifold.write_embedding(emb, outputs[0], rows)
            outputs[1].write_text(json.dumps({
                "id": case.id,
                "source": case.source,
                "shap_informed": case.shap_informed,
                "dimensions": len(names),
                "features": names,
            }, indent=2))

        self._run("embed", outputs, build, case_id)

    def cluster_case(self, case_id: int) -> None:
        self.embed_case(case_id)
        d = self.stage_dir("cluster", case_id)
        outputs = [d / "partition.csv", d / "partition_centroids.json", d / "plot.csv"]

        def build():
            cfg = self.config
            emb, rows = manifold.read_embedding(self._require(d / "embedding.csv", "embed"))
            part = fcm.fcm_fit(emb, cfg.clusters, cfg.fuzziness, cfg.fcm_tolerance,
                               cfg.fcm_max_iters, cfg.seed)
            fcm.write_partition(part, outputs[0], rows)
            bins = self.ground_truth_bins()
            labels = fcm.hard_assign(part)
            _write_csv(outputs[2], ["row", "u1", "u2", "bin", "cluster"],
                       [[int(r), _fmt(e[0]), _fmt(e[1]), io.BIN_NAMES[b], int(c)]
                        for r, e, b, c in zip(rows, emb, bins, labels)])

        self._run("cluster", outputs, build, case_id)

    def validate_case(self, case_id: int) -> dict:
        self.cluster_case(case_id)
        d = self.stage_dir("validate", case_id)
        outputs = [d / "metrics.json", d / "metrics_meta.json"]

        def build():
            _, labels, _ = fcm.read_partition(self._require(d / "partition.csv", "cluster"))
            truth = self.ground_truth_bins()
            metrics = cv.all_metrics(truth, labels)
            cv.write_metrics(metrics, outputs[0], {"truth": self.config.truth,
                                                   "points": int(len(labels))})

        self._run("validate", outputs, build, case_id)
        return json.loads(outputs[0].read_text())

    def run_case(self, case_id: int) -> dict:
        """Embed, cluster and score one data case."""
        metrics = self.validate_case(case_id)
        d = self.stage_dir("validate", case_id)
        emb, rows = manifold.read_embedding(d / "embedding.csv")
        case_doc = json.loads((d / "case.json").read_text())
        return {"case": case_doc, "metrics": metrics, "embedding": emb, "rows": rows}

    # ---- everything --------------------------------------------------
    def run_all(self) -> dict[int, dict]:
        results = {c: self.run_case(c)["metrics"] for c in self.config.cases}
        write_comparison(results, self.out)
        self._manifest["comparison"] = ["comparison.csv", "comparison.json"]
        self._save_manifest()
        return results


def write_comparison(results: dict[int, dict], out: Path) -> None:
    """Rows are metrics, columns are data cases."""
    cases = sorted(results)
    _write_csv(out / "comparison.csv", ["metric", *(f"case{c}" for c in cases)],
               [[k, *(f"{results[c][k]:.4f}" for c in cases)] for k in cv.METRIC_KEYS])
    (out / "comparison.json").write_text(json.dumps(
        {f"case{c}": {k: results[c][k] for k in cv.METRIC_KEYS} for c in cases}, indent=2))


def format_comparison(results: dict[int, dict]) -> str:
    cases = sorted(results)
    lines = ["metric".ljust(14) + "".join(f"case{c}".rjust(10) for c in cases)]
    for k in cv.METRIC_KEYS:
        lines.append(k.ljust(14) + "".join(f"{results[c][k]:10.4f}" for c in cases))
    return "\n".join(lines)


def run_case(case: int | DataCase, config: PipelineConfig) -> dict:
    cid = case.id if isinstance(case, DataCase) else case
    return Pipeline(config).run_case(cid)


def run_all(config: PipelineConfig) -> dict[int, dict]:
    return Pipeline(config).run_all()


def ground_truth_bins(config: PipelineConfig) -> np.ndarray:
    p = Pipeline(config)
    p.train()
    return p.ground_truth_bins()
