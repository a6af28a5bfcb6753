"""Ingestion and preprocessing of C-MAPSS run-to-failure text files.

A C-MAPSS file holds one engine cycle per line: unit id, cycle number,
three operational settings and 21 sensor readings, whitespace separated.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

RUL_CAP = 125.0

RAW_COLUMNS = (
    ["unit", "cycle"]
    + [f"setting_{i}" for i in range(1, 4)]
    + [f"sensor_{i}" for i in range(1, 22)]
)
N_FIELDS = len(RAW_COLUMNS)


class CmapssFormatError(ValueError):
    """Raised for malformed C-MAPSS input."""


class MaintenanceBin(enum.IntEnum):
    SCHEDULE = 0
    OKAY = 1
    GOOD = 2
    GREAT = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()


BIN_NAMES = tuple(b.label for b in MaintenanceBin)


@dataclass(frozen=True)
class CycleTable:
    """Engine-cycle rows with the feature columns kept apart from ids.

    ``feature_min``/``feature_max`` are always the raw-scale column bounds,
    so a normalized table can still be mapped back.
    """

    unit_ids: np.ndarray
    cycle_numbers: np.ndarray
    features: np.ndarray
    feature_names: tuple[str, ...]
    feature_min: np.ndarray
    feature_max: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        n, d = self.features.shape
        if n == 0 or d == 0:
            raise ValueError(f"empty table ({n} rows, {d} features)")
        if len(self.unit_ids) != n or len(self.cycle_numbers) != n:
            raise ValueError("unit/cycle columns do not match feature row count")
        if len(self.feature_names) != d:
            raise ValueError("feature_names length does not match feature columns")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "CycleTable":
        rows = np.asarray(rows)
        return replace(
            self,
            unit_ids=self.unit_ids[rows],
            cycle_numbers=self.cycle_numbers[rows],
            features=self.features[rows],
        )

    def select(self, names: Sequence[str]) -> "CycleTable":
        """Column subset, in the order given."""
        idx = [self.feature_names.index(name) for name in names]
        return replace(
            self,
            features=self.features[:, idx],
            feature_names=tuple(names),
            feature_min=self.feature_min[idx],
            feature_max=self.feature_max[idx],
        )


def _bounds(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return features.min(axis=0), features.max(axis=0)


def parse_cmapss_lines(lines, source: str = "<input>", include_cycle: bool = False) -> CycleTable:
    rows = []
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != N_FIELDS:
            raise CmapssFormatError(
                f"{source}:{lineno}: expected {N_FIELDS} fields, got {len(tokens)}"
            )
        try:
            rows.append([float(tok) for tok in tokens])
        except ValueError as exc:
            raise CmapssFormatError(f"{source}:{lineno}: non-numeric field ({exc})") from None
    if not rows:
        raise CmapssFormatError(f"{source}: no data rows")

    raw = np.asarray(rows, dtype=float)
    units, cycles = raw[:, 0], raw[:, 1]
    if np.any(units != np.round(units)) or np.any(cycles != np.round(cycles)):
        raise CmapssFormatError(f"{source}: unit and cycle columns must be integers")
    units = units.astype(np.int64)
    cycles = cycles.astype(np.int64)
    _check_trajectories(units, cycles, source)

    names = RAW_COLUMNS[2:]
    features = raw[:, 2:]
    if include_cycle:
        names = ["cycle"] + names
        features = raw[:, 1:]
    lo, hi = _bounds(features)
    return CycleTable(units, cycles, features, tuple(names), lo, hi)


def _check_trajectories(units: np.ndarray, cycles: np.ndarray, source: str) -> None:
    for unit in np.unique(units):
        c = cycles[units == unit]
        if c[0] != 1 or np.any(np.diff(c) != 1):
            raise CmapssFormatError(
                f"{source}: unit {unit} cycles are not a gap-free run starting at 1"
            )


def load_cmapss(path, include_cycle: bool = False) -> CycleTable:
    """Read a C-MAPSS text file.

    With ``include_cycle`` the cycle number is also kept as the first
    feature column. The unit id is never a feature.
    """
    path = Path(path)
    with path.open() as fh:
        return parse_cmapss_lines(fh, source=str(path), include_cycle=include_cycle)


def drop_constant_columns(table: CycleTable) -> CycleTable:
    lo, hi = _bounds(table.features)
    keep = [name for name, a, b in zip(table.feature_names, lo, hi) if b > a]
    if not keep:
        raise ValueError("every feature column is constant; nothing to model")
    return table.select(keep)


def label_rul(table: CycleTable, cap: float = RUL_CAP) -> np.ndarray:
    """Piecewise RUL target: flat at ``cap`` early in life, then linear to 0."""
    units, inverse = np.unique(table.unit_ids, return_inverse=True)
    per_unit_max = np.zeros(len(units), dtype=np.int64)
    np.maximum.at(per_unit_max, inverse, table.cycle_numbers)
    max_cycle = per_unit_max[inverse]
    return np.minimum(cap, max_cycle - table.cycle_numbers).astype(float)


def normalize(table: CycleTable) -> CycleTable:
    """Min-max scale every feature column into [-1, 1]."""
    if table.normalized:
        return table
    span = table.feature_max - table.feature_min
    if np.any(span <= 0):
        bad = [n for n, s in zip(table.feature_names, span) if s <= 0]
        raise ValueError(f"zero-range columns must be dropped first: {bad}")
    scaled = 2.0 * (table.features - table.feature_min) / span - 1.0
    return replace(table, features=np.clip(scaled, -1.0, 1.0), normalized=True)


def denormalize(value, x_min, x_max):
    if np.any(np.asarray(x_max) <= np.asarray(x_min)):
        raise ValueError("denormalize needs max > min")
    return (np.asarray(value) + 1.0) * (np.asarray(x_max) - np.asarray(x_min)) / 2.0 + x_min


def denormalize_table(table: CycleTable) -> CycleTable:
    if not table.normalized:
        return table
    raw = denormalize(table.features, table.feature_min, table.feature_max)
    return replace(table, features=raw, normalized=False)


def normalize_with(table: CycleTable, x_min: np.ndarray, x_max: np.ndarray) -> np.ndarray:
    """Scale raw features with externally supplied bounds (no clipping)."""
    return 2.0 * (table.features - x_min) / (x_max - x_min) - 1.0


class DataSplit(NamedTuple):
    indices: np.ndarray
    table: CycleTable
    labels: np.ndarray


def split_train_test(table: CycleTable, labels, fraction: float = 0.8, seed: int = 0):
    """Seeded row-level split; train gets ``floor(fraction * n)`` rows.

    Both index sets are returned sorted so rows stay grouped by engine.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    labels = np.asarray(labels, dtype=float)
    n = table.n_rows
    if len(labels) != n:
        raise ValueError("labels do not match table rows")
    n_train = int(np.floor(fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return (
        DataSplit(train_idx, table.take(train_idx), labels[train_idx]),
        DataSplit(test_idx, table.take(test_idx), labels[test_idx]),
    )


def assign_bin(rul: float) -> MaintenanceBin:
    rul = max(0.0, float(rul))
    if rul >= 125.0:
        return MaintenanceBin.GREAT
    if rul >= 75.0:
        return MaintenanceBin.GOOD
    if rul >= 50.0:
        return MaintenanceBin.OKAY
    return MaintenanceBin.SCHEDULE


def assign_bins(ruls) -> np.ndarray:
    """Vectorised :func:`assign_bin`, returning integer bin codes."""
    r = np.maximum(np.asarray(ruls, dtype=float), 0.0)
    return np.digitize(r, [50.0, 75.0, 125.0]).astype(np.int64)


def write_table(table: CycleTable, csv_path, labels=None) -> Path:
    """Write the table as CSV plus a JSON sidecar with names and bounds."""
    csv_path = Path(csv_path)
    header = ["unit", "cycle", *table.feature_names]
    if labels is not None:
        header.append("rul")
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(table.n_rows):
            row = [int(table.unit_ids[i]), int(table.cycle_numbers[i])]
            row += [repr(float(v)) for v in table.features[i]]
            if labels is not None:
                row.append(repr(float(labels[i])))
            w.writerow(row)
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps({
        "feature_names": list(table.feature_names),
        "feature_min": [float(v) for v in table.feature_min],
        "feature_max": [float(v) for v in table.feature_max],
        "normalized": table.normalized,
    }, indent=2))
    return sidecar


def read_table(csv_path) -> tuple[CycleTable, np.ndarray | None]:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    with csv_path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = np.array([[float(v) for v in row] for row in reader])
    has_rul = header[-1] == "rul"
    n_feat = len(meta["feature_names"])
    table = CycleTable(
        body[:, 0].astype(np.int64),
        body[:, 1].astype(np.int64),
        body[:, 2:2 + n_feat],
        tuple(meta["feature_names"]),
        np.array(meta["feature_min"]),
        np.array(meta["feature_max"]),
        normalized=meta["normalized"],
    )
    return table, (body[:, -1] if has_rul else None)
