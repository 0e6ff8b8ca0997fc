import numpy as np
import pytest
from pairgen import random_pair

from specrg.feshbach import (check_pair, chi_pair, feshbach_map, identity_residuals,
                             isospectrality_check, make_cutoffs)
from specrg.fockgrid import build_fock, build_grid
from specrg.kernels import extract_diag
from specrg.model import _reference, initial_effective, spin_boson


def test_cutoff_values():
    c, cb = chi_pair(np.array([0.0, 0.25]), 0.25)
    assert (c[0], cb[0]) == (1.0, 0.0)
    assert cb[1] == 1.0 and abs(c[1]) < 1e-15
    t = np.linspace(0, 2, 2001)
    c, cb = chi_pair(t, 0.3)
    assert np.max(np.abs(c ** 2 + cb ** 2 - 1)) <= 1e-15


def test_pair_without_coupling_passes():
    hf = np.linspace(0, 1, 8)
    T = np.diag(hf + 0.2).astype(complex)
    rep = check_pair(T, T, make_cutoffs(hf))
    assert rep.passed and rep.neumann_left == 0 and rep.neumann_right == 0


def test_singular_t_block_fails():
    hf = np.linspace(0, 1, 8)
    T = np.diag(hf - 1.0).astype(complex)
    rep = check_pair(T, T, make_cutoffs(hf))
    assert not rep.passed
    assert any("(b')" in f for f in rep.failures())


def test_t_must_commute_with_cutoffs():
    hf = np.linspace(0, 1, 4)
    T = np.ones((4, 4), dtype=complex)
    with pytest.raises(ValueError, match="commute"):
        check_pair(T, T, make_cutoffs(hf))


def test_spin_boson_level0_pair_has_small_neumann_norm():
    spec = spin_boson(g=0.01, s0=0.1)
    b = build_fock(build_grid(0.25, 4, 2), 2)
    z = _reference(spec)[0] - 0.01
    h0 = initial_effective(spec, 0.1, z, b)
    dk = extract_diag(h0, b)
    rep = check_pair(h0, dk.as_operator(b), make_cutoffs(b.red_hf, 0.25))
    assert rep.passed
    assert max(rep.neumann_left, rep.neumann_right) < 10 * spec.g


def test_no_coupling_gives_trivial_map():
    hf = np.linspace(0, 1, 10)
    T = np.diag(hf + 0.3).astype(complex)
    cut = make_cutoffs(hf)
    res = feshbach_map(T, T, cut)
    np.testing.assert_allclose(res.f, T, atol=1e-15)
    np.testing.assert_allclose(res.q, np.diag(cut.chi), atol=1e-15)
    np.testing.assert_allclose(res.q_sharp, np.diag(cut.chi), atol=1e-15)
    assert np.max(identity_residuals(T, T, cut, res)) < 1e-14


def test_sharp_cutoff_is_schur_complement():
    a, b_, c, d = 0.3, 0.2, 0.15, 2.0
    H = np.array([[a, b_], [c, d]], dtype=complex)
    T = np.diag([a, d]).astype(complex)
    from specrg.feshbach import CutoffPair
    cut = CutoffPair(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    res = feshbach_map(H, T, cut)
    assert res.f[0, 0] == pytest.approx(a - b_ * c / d, abs=1e-15)


def test_random_pair_identities():
    rng = np.random.default_rng(1)
    H, T, cut = random_pair(rng, 20)
    res = feshbach_map(H, T, cut, check=True)
    scale = np.linalg.norm(H, 2) + np.linalg.norm(T, 2)
    assert np.max(identity_residuals(H, T, cut, res)) <= 1e-10 * scale


def test_residuals_scale_linearly():
    rng = np.random.default_rng(2)
    H, T, cut = random_pair(rng, 12)
    r1 = identity_residuals(H, T, cut, feshbach_map(H, T, cut))
    r2 = identity_residuals(2 * H, 2 * T, cut, feshbach_map(2 * H, 2 * T, cut))
    assert np.max(r2) <= 4 * np.max(r1) + 1e-14


def test_isospectrality_on_constructed_kernel():
    rng = np.random.default_rng(3)
    H, T, cut = random_pair(rng, 16, strength=0.2)
    ev, V = np.linalg.eigh(H)
    mu = ev[0]
    Hs, Ts = H - mu * np.eye(16), T - mu * np.eye(16)
    res = feshbach_map(Hs, Ts, cut, check=True)
    rep = isospectrality_check(Hs, Ts, cut, res)
    assert rep.h_singular and rep.f_singular and rep.consistent
    v = V[:, 0]
    assert np.linalg.norm(res.q @ (cut.chi * v) - v) <= 1e-8 * np.linalg.norm(v)


def test_isospectrality_invertible():
    rng = np.random.default_rng(4)
    H, T, cut = random_pair(rng, 16)
    rep = isospectrality_check(H, T, cut, feshbach_map(H, T, cut))
    assert not rep.h_singular and not rep.f_singular and rep.consistent
    assert rep.sigma_min_f > 1e-3


def test_ill_conditioned_block_refused():
    hf = np.array([0.0, 1.0, 1.0])
    T = np.diag(hf).astype(complex)
    H = T.copy()
    H[1, 1] = H[2, 2] = 1.0
    H[1, 2] = H[2, 1] = 1.0 - 1e-14
    with pytest.raises(ValueError, match="cond"):
        feshbach_map(H, T, make_cutoffs(hf))
