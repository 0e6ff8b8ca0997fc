import numpy as np
import pytest

from specrg.fockgrid import build_fock, build_grid
from specrg.model import atomic_projection, spin_boson
from specrg.rgloop import RGConfig
from specrg.verify import (ContourSpec, analyticity_suite, cauchy_loop, counterexample_demo,
                           direct_ground, ground_state, overlap)


@pytest.fixture(scope="module")
def basis():
    return build_fock(build_grid(0.25, 4, 2), 2)


def test_oracle_free_and_coupled(basis):
    e_at = atomic_projection(spin_boson(s0=0.1), 0.1).e_at.real
    e0, v0 = direct_ground(spin_boson(g=0.0, s0=0.1), 0.1, basis)
    assert e0 == pytest.approx(e_at, abs=1e-14)
    e1, v1 = direct_ground(spin_boson(g=0.01, s0=0.1), 0.1, basis)
    assert e1 < e_at
    assert overlap(v0, v1) > 0.99
    with pytest.raises(ValueError):
        direct_ground(spin_boson(s0=0.1), 0.1 + 0.1j, basis)


def test_loop_examples():
    c = ContourSpec(0.1, 0.02)
    assert cauchy_loop(c.nodes ** 2, c).normalized <= 1e-12
    assert abs(cauchy_loop(np.conj(c.nodes), c).integral) == pytest.approx(2 * np.pi * 0.02 ** 2,
                                                                           rel=1e-12)
    with pytest.raises(ValueError):
        cauchy_loop(np.ones(3), c)
    with pytest.raises(ValueError):
        ContourSpec(0.1, 0.0)


def test_free_analyticity():
    spec = spin_boson(g=0.0, s0=0.1)
    c = ContourSpec(0.1, 0.02, 16)
    rep = analyticity_suite(spec, c, 0.25, 4, 2, 2, cfg=RGConfig(rho=0.25, n_steps=2))
    assert rep.z_loop <= 1e-10
    e = [atomic_projection(spec, s).e_at for s in c.nodes]
    np.testing.assert_allclose(rep.z_values, e, atol=1e-14)
    assert rep.conj_error <= 1e-12


def test_coupled_analyticity_small_grid():
    spec = spin_boson(g=0.0025, s0=0.1)
    rep = analyticity_suite(spec, ContourSpec(0.1, 0.02, 8), 0.25, 5, 2, 2,
                            cfg=RGConfig(rho=0.25, n_steps=3), threads=2)
    assert rep.passed(), (rep.max_loop, rep.conj_error, rep.cr_residual)


def test_counterexample():
    assert ground_state(-0.5)[0] < -1e-3
    assert ground_state(0.5)[0] == 0.0
    rep = counterexample_demo([-0.5, 0.5])
    assert rep.overlap_across_zero < 0.5
    assert rep.rows[1].ground_in_zero_block and not rep.rows[0].ground_in_zero_block
    assert rep.second_derivative_left < -1.0 and rep.second_derivative_right == 0.0
