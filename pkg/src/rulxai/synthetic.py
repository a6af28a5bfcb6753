"""Synthetic run-to-failure fleet in C-MAPSS text layout.

Used for demos and tests when the NASA files are not at hand. Each engine
follows a noisy exponential wear curve; twelve sensors respond to wear with
different gains and signs, the rest are constant or pure noise, which loosely
mirrors the single-condition FD001 subset.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

# (baseline, wear gain, noise sd); gain 0 and sd 0 means a constant channel
_SENSORS = [
    (518.67, 0.0, 0.0),
    (642.68, 1.2, 0.45),
    (1590.5, 18.0, 5.5),
    (1408.9, 30.0, 7.5),
    (14.62, 0.0, 0.0),
    (21.61, 0.0, 0.004),
    (553.37, -2.0, 0.8),
    (2388.1, 0.15, 0.06),
    (9065.2, 25.0, 20.0),
    (1.30, 0.0, 0.0),
    (47.54, 0.9, 0.25),
    (521.41, -1.8, 0.7),
    (2388.1, 0.15, 0.07),
    (8143.8, 15.0, 17.0),
    (8.44, 0.09, 0.035),
    (0.03, 0.0, 0.0),
    (393.2, 4.5, 1.5),
    (2388.0, 0.0, 0.0),
    (100.0, 0.0, 0.0),
    (38.82, -0.6, 0.18),
    (23.29, -0.35, 0.11),
]


def generate_fleet(n_units: int = 100, seed: int = 0, min_life: int = 128,
                   max_life: int = 362) -> np.ndarray:
    """Rows of (unit, cycle, 3 settings, 21 sensors)."""
    rng = np.random.default_rng(seed)
    rows = []
    for unit in range(1, n_units + 1):
        life = int(rng.integers(min_life, max_life + 1))
        onset = rng.uniform(0.25, 0.55) * life
        rate = rng.uniform(3.0, 5.0)
        cycles = np.arange(1, life + 1)
        t = np.clip((cycles - onset) / (life - onset), 0.0, None)
        wear = np.expm1(rate * t) / np.expm1(rate)
        settings = np.column_stack([
            rng.normal(0.0, 0.0022, life),
            rng.normal(0.0, 0.00029, life),
            np.full(life, 100.0),
        ])
        sensors = np.empty((life, len(_SENSORS)))
        for j, (base, gain, sd) in enumerate(_SENSORS):
            sensors[:, j] = base + gain * wear + (rng.normal(0.0, sd, life) if sd else 0.0)
        sensors[:, 16] = np.round(sensors[:, 16])
        sensors[:, 5] = np.round(sensors[:, 5], 2)
        rows.append(np.column_stack([np.full(life, unit), cycles, settings, sensors]))
    return np.vstack(rows)


def write_fleet(path, n_units: int = 100, seed: int = 0) -> Path:
    path = Path(path)
    data = generate_fleet(n_units, seed)
    with path.open("w") as fh:
        for row in data:
            head = f"{int(row[0])} {int(row[1])}"
            rest = " ".join(f"{v:.4f}" for v in row[2:])
            fh.write(f"{head} {rest}\n")
    return path
