import os
from pathlib import Path

import numpy as np
import pytest

from bootbayes import (MvNormalFamily, Statistic, correlation_statistic,
                       eigenratio_statistic, run_bootstrap)
from bootbayes.studies import (CORRELATION_SEED, EIGENRATIO_SEED, load_scores,
                               study_correlation, study_eigenratio)


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # replay acceptance verdicts after capture ends, one line per criterion
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for criterion in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[criterion])


def identity_statistic() -> Statistic:
    return Statistic("identity", lambda b: float(np.atleast_1d(b)[0]))


def find_prostate_zfile():
    """Path to a real z-value file if one is available, else None.

    Checked in order: the BOOTBAYES_PROSTATE_ZFILE environment variable, then
    a couple of conventional repository locations.
    """
    env = os.environ.get("BOOTBAYES_PROSTATE_ZFILE")
    if env and Path(env).is_file():
        return Path(env)
    root = Path(__file__).resolve().parent.parent
    for cand in (root / "data" / "prostate_zvalues.txt",
                 root / "data" / "prostate_z.txt"):
        if cand.is_file():
            return cand
    return None


@pytest.fixture(scope="session")
def scores():
    return load_scores()


@pytest.fixture(scope="session")
def correlation_report():
    # the full-size run behind most of the correlation-study assertions
    return study_correlation(B=10_000, seed=CORRELATION_SEED)


@pytest.fixture(scope="session")
def eigenratio_report():
    return study_eigenratio(B=10_000, seed=EIGENRATIO_SEED)


@pytest.fixture(scope="session")
def correlation_run(scores):
    family = MvNormalFamily(d=2, n=scores.n)
    mle = family.mle_from_data(scores.matrix)
    return run_bootstrap(family, mle, B=10_000, master_seed=CORRELATION_SEED,
                         statistics=[correlation_statistic()])


@pytest.fixture(scope="session")
def eigenratio_run(scores):
    family = MvNormalFamily(d=2, n=scores.n)
    mle = family.mle_from_data(scores.matrix)
    return run_bootstrap(family, mle, B=10_000, master_seed=EIGENRATIO_SEED,
                         statistics=[eigenratio_statistic()])
