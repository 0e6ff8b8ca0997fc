"""Geometric mode grids, truncated bosonic Fock spaces and ladder operators.

The radial nodes sit at r_j = rho**j so that the dilation k -> rho*k maps
shell j onto shell j+1 exactly. All operators are dense complex matrices in
the occupation-number basis; the atom factor, when present, comes first in
the Kronecker product (atom (x) Fock).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from math import comb, pi

import numpy as np
import scipy.sparse as sp

BALL_VOLUME = 4.0 * pi / 3.0
HF_TOL = 1e-12

DEFAULT_MODE_BUDGET = 64
DEFAULT_DIM_CAP = 6000


@dataclass(frozen=True)
class Mode:
    shell: int
    angular: int
    k_abs: float
    weight: float


@dataclass(frozen=True)
class ModeGrid:
    """Discretisation of the unit momentum ball into geometric shells."""

    rho: float
    shells: int
    angular_nodes: int
    radii: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def n_modes(self) -> int:
        return self.shells * self.angular_nodes

    @property
    def k_abs(self) -> np.ndarray:
        return np.repeat(self.radii, self.angular_nodes)

    @property
    def modes(self) -> list[Mode]:
        A = self.angular_nodes
        return [Mode(m // A, m % A, float(self.radii[m // A]), float(self.weights[m]))
                for m in range(self.n_modes)]

    def shell_of(self, mode: int) -> int:
        return mode // self.angular_nodes

    def mode_index(self, shell: int, angular: int) -> int:
        return shell * self.angular_nodes + angular


def _shell_volumes(rho: float, shells: int) -> np.ndarray:
    vols = np.empty(shells)
    for j in range(shells):
        outer = min(1.0, rho ** (j - 0.5))
        inner = 0.0 if j == shells - 1 else rho ** (j + 0.5)
        vols[j] = BALL_VOLUME * (outer ** 3 - inner ** 3)
    return vols


def build_grid(rho: float, shells: int, angular_nodes: int = 1,
               mode_budget: int = DEFAULT_MODE_BUDGET) -> ModeGrid:
    """Geometric grid with radii rho**j, j = 0..shells-1.

    Shell j owns the radial cell [rho**(j+1/2), rho**(j-1/2)] clipped to the
    unit ball; the deepest shell absorbs the whole remaining inner ball, so the
    weights add up to the ball volume.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if shells < 1:
        raise ValueError("need at least one shell")
    if angular_nodes < 1:
        raise ValueError("need at least one angular node")
    if shells * angular_nodes > mode_budget:
        raise ValueError(f"{shells * angular_nodes} modes exceed the mode budget {mode_budget}")
    radii = rho ** np.arange(shells, dtype=float)
    weights = np.repeat(_shell_volumes(rho, shells) / angular_nodes, angular_nodes)
    return ModeGrid(rho, shells, angular_nodes, radii, weights)


class FockBasis:
    """Occupation-number basis with total boson number <= n_max.

    States are ordered by total boson number, then lexicographically by the
    sorted tuple of occupied mode labels, so the vacuum is state 0.
    """

    def __init__(self, grid: ModeGrid, n_max: int, dim_cap: int = DEFAULT_DIM_CAP):
        if n_max < 1:
            raise ValueError("n_max must be >= 1")
        M = grid.n_modes
        dim = sum(comb(M + n - 1, n) for n in range(n_max + 1))
        if dim > dim_cap:
            raise ValueError(f"Fock dimension {dim} exceeds cap {dim_cap}")
        self.grid = grid
        self.n_max = n_max
        self.states: list[tuple[int, ...]] = []
        for n in range(n_max + 1):
            self.states.extend(itertools.combinations_with_replacement(range(M), n))
        self.index = {st: i for i, st in enumerate(self.states)}
        k = grid.k_abs
        self.hf_eigenvalues = np.array([sum(k[m] for m in st) for st in self.states])
        self.occupations = np.zeros((len(self.states), M), dtype=int)
        for i, st in enumerate(self.states):
            for m in st:
                self.occupations[i, m] += 1
        self.boson_number = self.occupations.sum(axis=1)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def n_modes(self) -> int:
        return self.grid.n_modes

    def shells_of(self, i: int) -> tuple[int, ...]:
        return tuple(self.grid.shell_of(m) for m in self.states[i])

    @cached_property
    def red_index(self) -> np.ndarray:
        """Basis indices spanning H_red = Ran P_[0,1](H_f)."""
        return np.flatnonzero(self.hf_eigenvalues <= 1.0 + HF_TOL)

    @cached_property
    def red_hf(self) -> np.ndarray:
        return self.hf_eigenvalues[self.red_index]

    @cached_property
    def faithful_red(self) -> np.ndarray:
        """Mask over H_red positions with fewer than n_max bosons, where the
        truncated ladder operators still obey the CCR."""
        return self.boson_number[self.red_index] < self.n_max

    @cached_property
    def _ladder(self) -> list[sp.csr_matrix]:
        ops = []
        for m in range(self.n_modes):
            rows, cols, vals = [], [], []
            for i, st in enumerate(self.states):
                if len(st) >= self.n_max:
                    continue
                j = self.index[tuple(sorted(st + (m,)))]
                rows.append(j)
                cols.append(i)
                vals.append(np.sqrt(self.occupations[i, m] + 1.0))
            ops.append(sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim)))
        return ops

    def creation_sparse(self, mode: int) -> sp.csr_matrix:
        return self._ladder[mode]

    def annihilation_sparse(self, mode: int) -> sp.csr_matrix:
        return self._ladder[mode].T.tocsr()


def build_fock(grid: ModeGrid, n_max: int, dim_cap: int = DEFAULT_DIM_CAP) -> FockBasis:
    return FockBasis(grid, n_max, dim_cap)


def creation_op(basis: FockBasis, mode: int) -> np.ndarray:
    """a*_mode with transitions out of the n_max sector dropped."""
    if not 0 <= mode < basis.n_modes:
        raise IndexError(f"mode {mode} out of range")
    return basis.creation_sparse(mode).toarray().astype(complex)


def annihilation_op(basis: FockBasis, mode: int) -> np.ndarray:
    return creation_op(basis, mode).conj().T


def _as_mode_matrices(basis: FockBasis, values) -> np.ndarray:
    vals = np.asarray(values, dtype=complex)
    if vals.shape[0] != basis.n_modes:
        raise ValueError(f"expected {basis.n_modes} mode values, got {vals.shape[0]}")
    if vals.ndim == 1:
        vals = vals[:, None, None]
    return vals


def creation_field(basis: FockBasis, values) -> np.ndarray:
    """a*(G) = sum_m sqrt(w_m) G(k_m) (x) a*_m.

    ``values`` holds one scalar or one atom matrix per mode; the result acts on
    Fock space (scalars) or atom (x) Fock (matrices).
    """
    vals = _as_mode_matrices(basis, values)
    d = vals.shape[1]
    sw = np.sqrt(basis.grid.weights)
    out = sp.csr_matrix((d * basis.dim, d * basis.dim), dtype=complex)
    for m in range(basis.n_modes):
        if not np.any(vals[m]):
            continue
        out = out + sp.kron(sw[m] * vals[m], basis.creation_sparse(m), format="csr")
    return out.toarray()


def smeared_field(basis: FockBasis, values) -> np.ndarray:
    """a*(G) + a(G), the field operator of the coupling function G."""
    cr = creation_field(basis, values)
    return cr + cr.conj().T


def hf_op(basis: FockBasis) -> np.ndarray:
    return np.diag(basis.hf_eigenvalues).astype(complex)


def reduced_projection(basis: FockBasis) -> np.ndarray:
    return np.diag((basis.hf_eigenvalues <= 1.0 + HF_TOL).astype(float)).astype(complex)


def omega_norm(grid: ModeGrid, values) -> float:
    """Discrete ||G||_omega = (sum_m w_m ||G(k_m)||^2 (1/|k_m| + 1))^(1/2)."""
    norms2 = _mode_norms2(values)
    k = grid.k_abs
    return float(np.sqrt(np.sum(grid.weights * norms2 * (1.0 / k + 1.0))))


def mu_norm(grid: ModeGrid, values, mu: float) -> float:
    """Discrete ||G||_mu = (sum_m w_m ||G(k_m)||^2 / |k_m|^(2+2mu))^(1/2)."""
    norms2 = _mode_norms2(values)
    k = grid.k_abs
    return float(np.sqrt(np.sum(grid.weights * norms2 / k ** (2 + 2 * mu))))


def _mode_norms2(values) -> np.ndarray:
    vals = np.asarray(values, dtype=complex)
    if vals.ndim == 1:
        return np.abs(vals) ** 2
    return np.array([np.linalg.norm(v, 2) ** 2 for v in vals])


@dataclass(frozen=True)
class Dilation:
    gamma: np.ndarray
    leak_mask: np.ndarray

    @property
    def gamma_star(self) -> np.ndarray:
        return self.gamma.conj().T

    def leakage(self, v: np.ndarray) -> float:
        """Norm of the part of v that Gamma* drops (deepest-shell bosons)."""
        return float(np.linalg.norm(v[self.leak_mask]))


def dilation_op(basis: FockBasis) -> Dilation:
    """Gamma_rho on a single basis: every boson moves from shell j to j-1.

    States with a shell-0 boson are annihilated; states with a boson in the
    deepest shell are not in the range (Gamma* loses them), and are flagged
    in ``leak_mask``.
    """
    g = basis.grid
    A, J = g.angular_nodes, g.shells
    gam = np.zeros((basis.dim, basis.dim))
    leak = np.zeros(basis.dim, dtype=bool)
    for i, st in enumerate(basis.states):
        shells = [m // A for m in st]
        if any(j == J - 1 for j in shells):
            leak[i] = True
        if any(j == 0 for j in shells):
            continue
        target = tuple(sorted(m - A for m in st))
        gam[basis.index[target], i] = 1.0
    return Dilation(gam, leak)


def shift_indices(src: FockBasis, dst: FockBasis, offset: int = 1) -> np.ndarray:
    """Map every reduced state of ``src`` to the reduced state of ``dst`` with
    each boson moved ``offset`` shells deeper (the action of Gamma*).

    Both bases must share rho and angular_nodes. Raises if a shifted state is
    missing, which means ``dst`` has too few shells.
    """
    if src.grid.angular_nodes != dst.grid.angular_nodes or src.grid.rho != dst.grid.rho:
        raise ValueError("bases must share rho and angular_nodes")
    A = src.grid.angular_nodes
    pos = {int(b): p for p, b in enumerate(dst.red_index)}
    out = np.empty(len(src.red_index), dtype=int)
    for p, i in enumerate(src.red_index):
        target = tuple(m + offset * A for m in src.states[i])
        j = dst.index.get(target)
        if j is None or int(j) not in pos:
            raise ValueError("insufficient shells: shifted state not in target space")
        out[p] = pos[int(j)]
    return out
