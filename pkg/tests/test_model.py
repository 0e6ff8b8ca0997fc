import numpy as np
import pytest

from specrg.fockgrid import build_fock, build_grid, creation_field, omega_norm
from specrg.kernels import PolydiscParams, polydisc_check
from specrg.model import (ModelSpec, SIGMA_X, _reference, assemble_H, atomic_projection,
                          calibrate_g, dipole_toy, hypothesis_report, initial_effective,
                          spin_boson, truncation_defect, u_samples)


@pytest.fixture(scope="module")
def basis():
    return build_fock(build_grid(0.25, 4, 2), 2)


def test_atomic_projection_closed_form():
    at = atomic_projection(spin_boson(s0=0.0), 0.0)
    assert at.e_at == 0
    np.testing.assert_allclose(at.p_at, np.diag([1, 0]), atol=1e-15)
    at = atomic_projection(spin_boson(s0=0.1), 0.1)
    assert at.e_at.real == pytest.approx((1 - np.sqrt(1.04)) / 2, abs=1e-15)


def test_complex_s_projection_is_idempotent():
    at = atomic_projection(spin_boson(s0=0.0), 0.1j)
    assert np.linalg.norm(at.p_at - at.p_at.conj().T) > 1e-6
    assert np.linalg.norm(at.p_at @ at.p_at - at.p_at) <= 1e-12


def test_gap_at_zero_coupling_point(basis):
    spec = spin_boson(s0=0.0)
    assert _reference(spec)[2] == pytest.approx(1.0)


def test_spectrum_is_tensor_sum_at_g0(basis):
    spec = spin_boson(g=0.0, s0=0.1)
    H = assemble_H(spec, 0.1, basis)
    at_ev = np.linalg.eigvalsh(spec.h_at(0.1))
    expected = np.sort(np.add.outer(at_ev, basis.hf_eigenvalues).ravel())
    np.testing.assert_allclose(np.linalg.eigvalsh(H), expected, atol=1e-13)


def test_self_adjointness_and_conjugation(basis):
    spec = spin_boson(g=0.05, s0=0.1)
    H = assemble_H(spec, 0.1, basis)
    assert np.linalg.norm(H - H.conj().T) <= 1e-12 * np.linalg.norm(H)
    s = 0.1 + 0.03j
    Hs, Hc = assemble_H(spec, s, basis), assemble_H(spec, np.conj(s), basis)
    assert np.linalg.norm(Hc - Hs.conj().T) <= 1e-12 * np.linalg.norm(Hs)


def test_h0_at_zero_coupling(basis):
    spec = spin_boson(g=0.0, s0=0.1)
    z = -0.2
    h0 = initial_effective(spec, 0.1, z, basis)
    e = atomic_projection(spec, 0.1).e_at
    np.testing.assert_allclose(h0, np.diag(e - z + basis.red_hf), atol=1e-14)


def test_h0_hermitian_and_close_to_free(basis):
    spec = spin_boson(g=0.01, s0=0.1)
    e = _reference(spec)[0]
    z = e - 0.05
    h0 = initial_effective(spec, 0.1, z, basis)
    assert np.linalg.norm(h0 - h0.conj().T) <= 1e-13
    free = np.diag(e - z + basis.red_hf)
    G = spec.coupling_values(0.1, basis.grid)
    bound = 2 * spec.g * omega_norm(basis.grid, G)
    assert np.linalg.norm(h0 - free, 2) <= bound


def test_hypothesis_one_flags_infrared_divergence(basis):
    bad = ModelSpec((np.diag([0.0, 1.0]), SIGMA_X), SIGMA_X, g=0.01, s0=0.1,
                    profile_exponent=-1.0)
    rep = hypothesis_report(bad, basis.grid, [(0.1, _reference(bad)[0])])
    assert not rep.hyp1_pass
    assert any("Hypothesis 1" in m for m in rep.messages)


def test_hypotheses_hold_for_spin_boson(basis):
    spec = spin_boson(g=0.01, s0=0.1)
    rep = hypothesis_report(spec, basis.grid, u_samples(spec, 0.02, 0.25, n=2), basis)
    assert rep.passed
    assert rep.gap > 1


def test_calibration(basis):
    spec = spin_boson(g=0.02, s0=0.1)
    targets = (0.03125, 0.03125, 0.03125, 0.125, 0.5)
    g1 = calibrate_g(spec, basis.grid, basis, targets, g_start=1.0)
    assert g1 > 0
    p = PolydiscParams(*targets[:3], 0.25, 0.125, 0.5)
    e = _reference(spec)[0]
    h0 = initial_effective(spec.with_g(g1), 0.1, e, basis)
    assert polydisc_check(h0, 0.0, p, basis).inside
    small = tuple(t / 10 for t in targets[:3]) + targets[3:]
    assert calibrate_g(spec, basis.grid, basis, small, g_start=1.0) < g1
    assert calibrate_g(spec.with_g(0.0), basis.grid, basis, targets) == 0.0


def test_truncation_defect_is_fourth_order():
    b = build_fock(build_grid(0.25, 3, 2), 2)
    spec = spin_boson(g=0.02, s0=0.1)
    z = _reference(spec)[0]
    d1 = truncation_defect(spec, 0.1, z, b)
    d2 = truncation_defect(spec.with_g(0.01), 0.1, z, b)
    assert d1 / d2 == pytest.approx(16, rel=0.1)


def test_dipole_toy_is_three_level():
    spec = dipole_toy(g=0.01, s0=0.1)
    assert spec.atom_dim == 3
    assert spec.hermitian_defect() == 0.0
    field = creation_field(build_fock(build_grid(0.25, 2, 1), 1),
                           spec.coupling_values(0.1, build_grid(0.25, 2, 1)))
    assert field.shape == (9, 9)
