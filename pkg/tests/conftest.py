from pathlib import Path

import numpy as np
import pytest

from swhforecast import synthetic

DATA = Path(__file__).parent / "data"

HEADER = (
    "#YY  MM DD hh mm WDIR WSPD GST  WVHT   DPD   APD MWD   PRES  ATMP  WTMP  DEWP  VIS  TIDE\n"
    "#yr  mo dy hr mn degT m/s  m/s     m   sec   sec degT   hPa  degC  degC  degC  nmi    ft\n"
)


@pytest.fixture
def stdmet_sample():
    return (DATA / "41008h_sample.txt").read_text()


@pytest.fixture(scope="session")
def synth_table():
    return synthetic.generate(hours=1200, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion that ran in this session."""
    import sys

    module = sys.modules.get("test_acceptance")
    lines = module.summary_lines() if module is not None else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
