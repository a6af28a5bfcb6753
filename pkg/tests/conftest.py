import os
from pathlib import Path

import pytest

from rulxai import synthetic

ROOT = Path(__file__).resolve().parents[1]

# collected by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def fd001_path() -> Path | None:
    """Location of train_FD001.txt, if the NASA file is available locally."""
    env = os.environ.get("RULXAI_FD001")
    candidates = [Path(env)] if env else []
    candidates += [ROOT / "data" / "train_FD001.txt",
                   ROOT / "data" / "CMAPSSData" / "train_FD001.txt"]
    for p in candidates:
        if p.is_file():
            return p
    return None


@pytest.fixture(scope="session")
def fd001():
    path = fd001_path()
    if path is None:
        pytest.skip("train_FD001.txt not available (set RULXAI_FD001)")
    return path


@pytest.fixture(scope="session")
def small_fleet(tmp_path_factory):
    """A 12-engine synthetic fleet, about 2.8k rows."""
    path = tmp_path_factory.mktemp("fleet") / "train_synth.txt"
    return synthetic.write_fleet(path, n_units=12, seed=3)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
