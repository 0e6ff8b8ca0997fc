"""Invariants as property tests."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from pairgen import random_pair

from specrg.feshbach import chi_pair, feshbach_map, identity_residuals
from specrg.fockgrid import (annihilation_op, build_fock, build_grid, creation_field, creation_op,
                             dilation_op, hf_op, omega_norm)
from specrg.kernels import KernelSequence, extract_diag, op_from_kernels
from specrg.model import assemble_H, spin_boson
from specrg.verify import ContourSpec, cauchy_loop

FAST = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])

grids = st.builds(lambda rho, shells, A: build_grid(rho, shells, A),
                  st.floats(0.1, 0.7), st.integers(1, 3), st.integers(1, 2))


@FAST
@given(grids, st.integers(1, 3), st.data())
def test_ccr_below_cutoff(grid, n_max, data):
    b = build_fock(grid, n_max)
    m = data.draw(st.integers(0, b.n_modes - 1))
    a, ad = annihilation_op(b, m), creation_op(b, m)
    low = b.boson_number < n_max
    comm = (a @ ad - ad @ a)[np.ix_(low, low)]
    assert np.max(np.abs(comm - np.eye(low.sum()))) <= 1e-13


@FAST
@given(st.floats(0.1, 0.7), st.integers(2, 4), st.integers(1, 2))
def test_dilation_is_a_partial_isometry_scaling_hf(rho, shells, A):
    b = build_fock(build_grid(rho, shells, A), 2)
    D = dilation_op(b)
    P = D.gamma @ D.gamma_star
    np.testing.assert_allclose(P @ P, P, atol=1e-15)
    np.testing.assert_allclose(D.gamma @ hf_op(b) @ D.gamma_star, rho * P @ hf_op(b), atol=1e-14)


@FAST
@given(st.integers(0, 2 ** 32 - 1), st.integers(4, 64), st.booleans())
def test_feshbach_identities(seed, dim, hermitian):
    rng = np.random.default_rng(seed)
    H, T, cut = random_pair(rng, dim, hermitian=hermitian)
    res = feshbach_map(H, T, cut)
    scale = np.linalg.norm(H, 2) + np.linalg.norm(T, 2) + np.linalg.norm(res.f, 2)
    assert np.max(identity_residuals(H, T, cut, res)) <= 1e-10 * scale


@FAST
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 0.1))
def test_hamiltonian_symmetries(re, im, g):
    b = build_fock(build_grid(0.25, 2, 1), 2)
    spec = spin_boson(g=g, s0=0.1)
    H = assemble_H(spec, re, b)
    assert np.linalg.norm(H - H.conj().T) <= 1e-12 * max(1, np.linalg.norm(H))
    s = complex(re, im)
    Hs, Hc = assemble_H(spec, s, b), assemble_H(spec, np.conj(s), b)
    assert np.linalg.norm(Hc - Hs.conj().T) <= 1e-12 * max(1, np.linalg.norm(Hs))


@FAST
@given(st.floats(-2, 2), st.floats(0.5, 1.5))
def test_diagonal_round_trip(c, slope):
    b = build_fock(build_grid(0.25, 3, 2), 2)
    w = KernelSequence.for_basis(b, lambda r: c + slope * r)
    H = op_from_kernels(w, b)
    dk = extract_diag(H, b)
    np.testing.assert_allclose(dk.w00, c + slope * dk.r_grid, atol=1e-13)
    assert dk.gamma_proxy_full <= 1e-13


@FAST
@given(st.lists(st.floats(-2, 2), min_size=8, max_size=8), st.integers(1, 3))
def test_field_bound(values, n_max):
    b = build_fock(build_grid(0.25, 4, 2), n_max)
    G = np.asarray(values)
    cr = creation_field(b, G)
    lhs = np.linalg.norm(cr * (1 / np.sqrt(b.hf_eigenvalues + 1))[None, :], 2)
    assert lhs <= omega_norm(b.grid, G) + 1e-12


@FAST
@given(st.floats(0, 3), st.floats(0.05, 1.0))
def test_partition_of_unity(t, rho):
    c, cb = chi_pair(t, rho)
    assert abs(c ** 2 + cb ** 2 - 1) <= 1e-15
    assert 0 <= c <= 1 and 0 <= cb <= 1


@FAST
@given(st.lists(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
                min_size=1, max_size=6),
       st.complex_numbers(max_magnitude=1, allow_nan=False, allow_infinity=False),
       st.floats(0.01, 0.5))
def test_polynomial_loops_vanish(coeffs, center, radius):
    c = ContourSpec(center, radius, 16)
    vals = np.polyval(coeffs, c.nodes)
    assert cauchy_loop(vals, c).normalized <= 1e-12
