import numpy as np
import pytest

from specrg.fockgrid import (BALL_VOLUME, annihilation_op, build_fock, build_grid, creation_field,
                             creation_op, dilation_op, hf_op, omega_norm, reduced_projection,
                             shift_indices, smeared_field)


def test_radii_are_powers_of_rho():
    g = build_grid(0.25, 3, 1)
    np.testing.assert_allclose(g.radii, [1.0, 0.25, 0.0625], rtol=0, atol=0)
    assert g.radii[1] / g.radii[2] == pytest.approx(4.0, abs=1e-15)


@pytest.mark.parametrize("rho,shells,A", [(0.25, 3, 1), (0.5, 7, 3), (0.1, 2, 4)])
def test_weights_fill_unit_ball(rho, shells, A):
    g = build_grid(rho, shells, A, mode_budget=100)
    assert abs(g.weights.sum() - BALL_VOLUME) <= 1e-12


def test_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        build_grid(1.0, 3)
    with pytest.raises(ValueError):
        build_grid(0.25, 10, 10, mode_budget=50)


def test_fock_dimensions():
    assert build_fock(build_grid(0.25, 6, 1), 2).dim == 28
    b = build_fock(build_grid(0.25, 1, 1), 3)
    assert b.dim == 4
    assert b.hf_eigenvalues[0] == 0.0
    with pytest.raises(ValueError):
        build_fock(build_grid(0.25, 6, 1), 2, dim_cap=10)


def test_ladder_conventions(small_basis):
    b = small_basis
    ad = creation_op(b, 1)
    a = annihilation_op(b, 1)
    one = b.index[(1,)]
    assert ad[one, 0] == 1.0
    assert np.linalg.norm(a[:, 0]) == 0.0


def test_ccr_below_cutoff(small_basis):
    b = small_basis
    low = b.boson_number < b.n_max
    for m in range(b.n_modes):
        a, ad = annihilation_op(b, m), creation_op(b, m)
        comm = a @ ad - ad @ a
        np.testing.assert_allclose(comm[np.ix_(low, low)], np.eye(low.sum()), atol=1e-14)


def test_hf_and_projection(small_basis):
    b = small_basis
    H = hf_op(b)
    assert H[0, 0] == 0.0
    two = b.index[(b.grid.mode_index(1, 0), b.grid.mode_index(1, 1))]
    assert b.hf_eigenvalues[two] == pytest.approx(0.5)
    P = reduced_projection(b)
    assert np.array_equal(P @ P, P)


def test_zero_field_and_self_adjointness(small_basis):
    b = small_basis
    assert not np.any(creation_field(b, np.zeros(b.n_modes)))
    phi = smeared_field(b, np.linspace(0.1, 1.0, b.n_modes))
    assert np.linalg.norm(phi - phi.conj().T) == 0.0


def test_single_mode_field_bound(small_basis):
    b = small_basis
    G = np.zeros(b.n_modes)
    G[2] = 0.7
    cr = creation_field(b, G)
    lhs = np.linalg.norm(cr @ np.diag(1 / np.sqrt(b.hf_eigenvalues + 1)), 2)
    w, k = b.grid.weights[2], b.grid.k_abs[2]
    expected = np.sqrt(w * 0.49 * (1 / k + 1))
    assert omega_norm(b.grid, G) == pytest.approx(expected, rel=1e-14)
    assert lhs <= expected + 1e-12


def test_dilation_shell_shift_and_scaling(small_basis):
    b = small_basis
    D = dilation_op(b)
    A = b.grid.angular_nodes
    src = b.index[(2 * A,)]
    dst = b.index[(A,)]
    assert D.gamma[dst, src] == 1.0
    rng = D.gamma @ D.gamma_star
    lhs = D.gamma @ hf_op(b) @ D.gamma_star
    np.testing.assert_allclose(lhs, b.grid.rho * rng @ hf_op(b) @ rng, atol=1e-15)


def test_leakage_reports_deepest_shell(small_basis):
    b = small_basis
    D = dilation_op(b)
    v = np.zeros(b.dim)
    deep = b.index[(b.grid.mode_index(b.grid.shells - 1, 0),)]
    v[deep] = 0.6
    assert D.leakage(v) == pytest.approx(0.6)


def test_shift_indices_needs_extra_shell():
    big = build_fock(build_grid(0.25, 4, 2), 2)
    small = build_fock(build_grid(0.25, 3, 2), 2)
    idx = shift_indices(small, big)
    assert len(idx) == len(small.red_index)
    np.testing.assert_allclose(big.red_hf[idx], 0.25 * small.red_hf, atol=1e-15)
    with pytest.raises(ValueError, match="insufficient shells"):
        shift_indices(big, small)
