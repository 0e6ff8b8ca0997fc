"""Shared fixtures: the calibrated spin-boson desk run is built once per session."""

import time
from dataclasses import dataclass

import numpy as np
import pytest

from specrg.config import default_config
from specrg.fockgrid import build_fock, build_grid
from specrg.model import calibrate_g, spin_boson
from specrg.rgloop import Pipeline, RGConfig, eigenvector, run
from specrg.verify import direct_ground

ACCEPTANCE_LINES = []


@dataclass
class DeskRun:
    spec: object
    g: float
    pipe: Pipeline
    trace: object
    eig: object
    e_min: float
    oracle_vec: np.ndarray
    seconds: float


@pytest.fixture(scope="session")
def desk_run():
    """Criterion-1 setup: rho = 0.25, 8 shells, 2 angular nodes, n_max = 2, 6 levels."""
    t0 = time.perf_counter()
    cfg = default_config()
    grid = build_grid(0.25, 8, 2)
    basis = build_fock(grid, 2)
    g = calibrate_g(spin_boson(g=0.02, s0=0.1), grid, basis, cfg.targets(),
                    g_start=0.02, n_steps=6)
    spec = spin_boson(g=g, s0=0.1)
    pipe = Pipeline(spec, 0.1, 0.25, 8, 2, 2, RGConfig(rho=0.25, n_steps=6))
    trace = run(pipe)
    eig = eigenvector(pipe, trace)
    e_min, vec = direct_ground(spec, 0.1, pipe.basis0)
    return DeskRun(spec, g, pipe, trace, eig, e_min, vec, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def small_basis():
    return build_fock(build_grid(0.25, 3, 2), 2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
