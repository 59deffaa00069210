import numpy as np
import pandas as pd
import pytest

from windstgnn.data import engineer_features, load_sdwpf
from windstgnn.schema import DATA_HEADER, tmstamp_of
from windstgnn.synth import synth_generate

# PASS/FAIL lines collected by the acceptance suite, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def write_csvs(path, n_turbines, n_days, fill=None, rows=None):
    """Fully populated SDWPF-style CSVs with nominal readings; ``fill(t, slot)`` overrides Patv."""
    if rows is None:
        rows = []
        for t in range(1, n_turbines + 1):
            for s in range(n_days * 144):
                patv = 100.0 + t if fill is None else fill(t, s)
                rows.append([t, s // 144 + 1, tmstamp_of(s), 6.0, 5.0, 20.0, 30.0, 40.0, 1.0, 1.0, 1.0, 5.0, patv])
    pd.DataFrame(rows, columns=list(DATA_HEADER)).to_csv(path / "data.csv", index=False)
    pd.DataFrame({"TurbID": range(1, n_turbines + 1), "x": np.arange(n_turbines) * 100.0,
                  "y": np.zeros(n_turbines)}).to_csv(path / "loc.csv", index=False)
    return path / "data.csv", path / "loc.csv"


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    synth_generate(8, 30, 7, out)
    return out


@pytest.fixture(scope="session")
def synth_ds(synth_dir):
    return engineer_features(load_sdwpf(synth_dir / "data.csv", synth_dir / "loc.csv"))

