import time

import numpy as np
import pytest

from loopbif.config import bundled_config
from loopbif.mesh import build_grid, sample_weights

MAIN_WEIGHTS = {"a": {"kind": "constant", "value": 1.0},
                "b": {"kind": "cosine_shift", "amplitude": 1.0, "offset": -0.5}}
PREHYPO_WEIGHTS = {"a": {"kind": "cosine_shift", "amplitude": 1.0, "offset": -0.25},
                   "b": {"kind": "cosine_shift", "amplitude": 1.0, "offset": -0.5}}


def main_setup(n=513):
    g = build_grid(n)
    return g, sample_weights(MAIN_WEIGHTS, g)


@pytest.fixture(scope="session")
def main_cfg():
    return bundled_config("main_case")


@pytest.fixture(scope="session")
def prehypo_cfg():
    return bundled_config("prehypo")


@pytest.fixture(scope="session")
def main_run(main_cfg):
    """(cfg, LoopReport, P-frame branch, FamilyResult, seconds) for the bundled main case."""
    from loopbif.family import loop_report
    t0 = time.perf_counter()
    rep, pb, fam = loop_report(main_cfg)
    return main_cfg, rep, pb, fam, time.perf_counter() - t0


@pytest.fixture(scope="session")
def main_family(main_run):
    return main_run[3]


@pytest.fixture(scope="session")
def main_loop(main_run):
    return main_run[1:4]


@pytest.fixture(scope="session")
def sigma_run(prehypo_cfg):
    """(cfg, SigmaSplit, seconds) for the bundled prehypo case at eps = 1e-2, 1e-3."""
    from loopbif.family import sigma_split
    t0 = time.perf_counter()
    s = sigma_split(prehypo_cfg, [1e-2, 1e-3])
    return prehypo_cfg, s, time.perf_counter() - t0


@pytest.fixture(scope="session")
def prehypo_split(sigma_run):
    return sigma_run[1]


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
