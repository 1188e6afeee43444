import json
import os
from pathlib import Path

import numpy as np
import pytest

from wpcurv.pipeline import Pipeline, RunConfig

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracles.json").read_text())


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    # WPCURV_TEST_CACHE keeps group balls and kernels between sessions
    env = os.environ.get("WPCURV_TEST_CACHE")
    if env:
        Path(env).mkdir(parents=True, exist_ok=True)
        return Path(env)
    return tmp_path_factory.mktemp("wpcurv-cache")


@pytest.fixture(scope="session")
def pipe(cache_dir):
    return Pipeline(RunConfig(cache_dir=str(cache_dir), reproducible=True))


@pytest.fixture(scope="session")
def report(pipe):
    return pipe.report()


@pytest.fixture(scope="session")
def fine_pipe(cache_dir, pipe):
    return Pipeline(RunConfig(cache_dir=str(cache_dir), grid_h=0.5 * pipe.grid.h, reproducible=True))


@pytest.fixture(scope="session")
def wide_pipe(cache_dir):
    return Pipeline(RunConfig(cache_dir=str(cache_dir), radius=10.0, reproducible=True))


@pytest.fixture(scope="session")
def ball(pipe):
    return pipe.work_ball


@pytest.fixture(scope="session")
def domain(pipe):
    return pipe.domain


@pytest.fixture(scope="session")
def grid(pipe):
    return pipe.grid


@pytest.fixture(scope="session")
def kernel(pipe):
    return pipe.kernel


@pytest.fixture(scope="session")
def basis(pipe):
    return pipe.basis


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}
N_CRITERIA = 12


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        ok, detail = ACCEPTANCE.get(n, (False, "not run"))
        terminalreporter.write_line(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'}  {detail}")
