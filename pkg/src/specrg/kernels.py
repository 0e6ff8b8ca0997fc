"""Kernel sequences w = (w_mn), the operator H(w), diagonal-kernel extraction
and polydisc diagnostics.

Kernels are sampled on an r grid covering the H_f spectrum of H_red and on
mode tuples of the underlying ModeGrid. Operators live on H_red, i.e. they
are indexed by ``basis.red_index``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.sparse as sp

from .feshbach import check_pair, make_cutoffs
from .fockgrid import FockBasis

ORDER_CAP = 2


@dataclass
class KernelSequence:
    """``wmn[(m, n)]`` has shape (len(r_grid),) + (M,) * (m + n)."""

    r_grid: np.ndarray
    w00: np.ndarray
    weights: np.ndarray
    k_abs: np.ndarray
    wmn: dict = field(default_factory=dict)
    xi: float = 0.5
    mu: float = 0.5
    w00_deriv: np.ndarray | None = None

    def __post_init__(self):
        self.r_grid = np.asarray(self.r_grid, dtype=float)
        self.w00 = np.asarray(self.w00, dtype=complex)
        if np.any(np.diff(self.r_grid) <= 0):
            raise ValueError("r_grid must be strictly increasing")
        for (m, n) in self.wmn:
            if m + n > ORDER_CAP:
                raise ValueError(f"kernel order {m}+{n} exceeds cap {ORDER_CAP}")
        if self.w00_deriv is None:
            self.w00_deriv = finite_derivative(self.r_grid, self.w00)

    @classmethod
    def for_basis(cls, basis: FockBasis, w00_fn=None, xi: float = 0.5, mu: float = 0.5,
                  r_grid=None) -> "KernelSequence":
        if r_grid is None:
            r_grid = default_r_grid(basis)
        r = np.asarray(r_grid, dtype=float)
        w00 = np.zeros_like(r, dtype=complex) if w00_fn is None else np.asarray(w00_fn(r), dtype=complex)
        return cls(r, w00, basis.grid.weights.copy(), basis.grid.k_abs.copy(), {}, xi, mu)

    @property
    def n_modes(self) -> int:
        return len(self.weights)

    def without_diag(self) -> "KernelSequence":
        return KernelSequence(self.r_grid, np.zeros_like(self.w00), self.weights, self.k_abs,
                              dict(self.wmn), self.xi, self.mu, np.zeros_like(self.w00))


def default_r_grid(basis: FockBasis) -> np.ndarray:
    """0, 1 and every distinct reduced H_f eigenvalue."""
    pts = np.concatenate([[0.0, 1.0], basis.red_hf])
    return np.unique(np.round(pts, 14))


def finite_derivative(r: np.ndarray, w: np.ndarray) -> np.ndarray:
    if len(r) < 2:
        return np.zeros_like(w)
    return np.gradient(w, r, axis=0, edge_order=1)


def _interp_weights(r_grid: np.ndarray, x: np.ndarray):
    lo, hi = r_grid[0], r_grid[-1]
    tol = 1e-12
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        raise ValueError("r_grid does not cover every H_f eigenvalue")
    x = np.clip(x, lo, hi)
    j = np.clip(np.searchsorted(r_grid, x, side="right") - 1, 0, len(r_grid) - 2)
    t = (x - r_grid[j]) / (r_grid[j + 1] - r_grid[j])
    return j, t


def interp_r(r_grid: np.ndarray, samples: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation along axis 0 of ``samples``."""
    j, t = _interp_weights(r_grid, np.asarray(x, dtype=float))
    t = t.reshape((-1,) + (1,) * (samples.ndim - 1))
    return samples[j] * (1 - t) + samples[j + 1] * t


def w00_of_hf(w: KernelSequence, hf: np.ndarray) -> np.ndarray:
    return interp_r(w.r_grid, w.w00, hf)


def _ladder_products(basis: FockBasis, modes: tuple, create: bool):
    op = sp.identity(basis.dim, format="csr", dtype=float)
    for m in modes:
        a = basis.creation_sparse(m) if create else basis.annihilation_sparse(m)
        op = a @ op
    return op


def op_from_kernels(w: KernelSequence, basis: FockBasis) -> np.ndarray:
    """Quadrature version of H(w) = sum_mn H_mn(w) on H_red.

    The kernels are evaluated at H_f between the creation and annihilation
    blocks (normal order), by linear interpolation in r.
    """
    for (m, n) in w.wmn:
        if m + n > ORDER_CAP:
            raise ValueError(f"kernel order {m}+{n} exceeds cap {ORDER_CAP}")
    hf = basis.hf_eigenvalues
    red = basis.red_index
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    out[red, red] = w00_of_hf(w, hf[red])
    sw = np.sqrt(w.weights)
    M = basis.n_modes
    for (m, n), arr in w.wmn.items():
        if m + n == 0:
            continue
        if not np.any(arr):
            continue
        # kernel values at every basis H_f eigenvalue: shape (dim,) + (M,)*(m+n);
        # between red states the kernel only meets H_f <= 1, so states beyond
        # the grid get zero coefficients
        inside = hf <= w.r_grid[-1] + 1e-12
        vals = np.zeros((len(hf),) + arr.shape[1:], dtype=complex)
        vals[inside] = interp_r(w.r_grid, arr, hf[inside])
        acc = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
        for K in itertools.product(range(M), repeat=m + n):
            coef = vals[(slice(None),) + K]
            if not np.any(coef):
                continue
            kc, ka = K[:m], K[m:]
            quad = np.prod(sw[list(K)])
            left = _ladder_products(basis, kc, True)
            right = _ladder_products(basis, ka, False)
            acc = acc + quad * (left @ sp.diags(coef) @ right)
        out = out + acc.toarray()
    return out[np.ix_(red, red)]


def _c1_norm(values: np.ndarray, r_grid: np.ndarray) -> np.ndarray:
    """sup|w| + sup|w'| over r for every trailing index."""
    d = finite_derivative(r_grid, values)
    return np.max(np.abs(values), axis=0) + np.max(np.abs(d), axis=0)


def norm_mu(w: KernelSequence, m: int, n: int) -> float:
    if m + n == 0:
        return float(np.max(np.abs(w.w00)) + np.max(np.abs(w.w00_deriv)))
    arr = w.wmn.get((m, n))
    if arr is None:
        return 0.0
    c1 = _c1_norm(arr, w.r_grid)
    dens = w.weights / w.k_abs ** (2 + 2 * w.mu)
    meas = np.ones(())
    for _ in range(m + n):
        meas = np.multiply.outer(meas, dens)
    return float(np.sqrt(np.sum(c1 ** 2 * meas)))


def norm_mu_xi(w: KernelSequence, include_diag: bool = True) -> float:
    total = norm_mu(w, 0, 0) if include_diag else 0.0
    for (m, n) in w.wmn:
        if m + n:
            total += w.xi ** (-(m + n)) * norm_mu(w, m, n)
    return float(total)


def symmetrize(arr: np.ndarray, m: int, n: int) -> np.ndarray:
    """Average over permutations of the creation block and the annihilation block."""
    out = np.zeros_like(arr)
    cre = list(itertools.permutations(range(1, m + 1)))
    ann = list(itertools.permutations(range(m + 1, m + n + 1)))
    for pc in cre:
        for pa in ann:
            out = out + np.transpose(arr, (0,) + pc + pa)
    return out / (factorial(m) * factorial(n))


# -- extraction -------------------------------------------------------------

@dataclass
class DiagonalKernel:
    r_grid: np.ndarray
    w00: np.ndarray
    w00_deriv: np.ndarray
    gamma_proxy: float
    gamma_proxy_full: float = 0.0

    def at(self, hf: np.ndarray) -> np.ndarray:
        return interp_r(self.r_grid, self.w00, hf)

    def as_operator(self, basis: FockBasis) -> np.ndarray:
        return np.diag(self.at(basis.red_hf)).astype(complex)


def extract_diag(H: np.ndarray, basis: FockBasis, sector: str = "faithful") -> DiagonalKernel:
    """Recover w_00 on {0} u {rho^j} from a matrix on H_red.

    The one-boson diagonal of shell j carries w_00(r_j) plus the diagonal of
    the one-boson-to-one-boson kernel; same-shell entries between different
    angular labels carry only the latter. Their difference isolates w_00
    when that kernel is continuous across a shell.

    ``gamma_proxy`` is taken on the faithful sector (fewer than n_max bosons)
    unless ``sector="full"``; ``gamma_proxy_full`` always covers all of H_red.
    States at the cutoff cannot emit, so their diagonal misses the vacuum
    self-energy; that number-dependent shift is a truncation artifact which
    the dilation amplifies by 1/rho per level.
    """
    if sector not in ("faithful", "full"):
        raise ValueError(f"unknown sector {sector!r}")
    g = basis.grid
    A = g.angular_nodes
    if A < 2:
        raise ValueError("extract_diag needs at least two angular nodes per shell")
    red = basis.red_index
    pos = {int(b): p for p, b in enumerate(red)}
    if H.shape != (len(red), len(red)):
        raise ValueError("H must act on H_red of the given basis")
    r = [0.0]
    w = [H[0, 0]]
    for j in range(g.shells):
        if g.radii[j] > 1.0 + 1e-12:
            continue
        idx = [pos[basis.index[(g.mode_index(j, a),)]] for a in range(A)]
        blk = H[np.ix_(idx, idx)]
        diag = np.mean(np.diag(blk))
        off = (np.sum(blk) - np.trace(blk)) / (A * (A - 1))
        r.append(float(g.radii[j]))
        w.append(diag - off)
    order = np.argsort(r)
    r_grid = np.asarray(r)[order]
    w00 = np.asarray(w, dtype=complex)[order]
    deriv = finite_derivative(r_grid, w00)
    dk = DiagonalKernel(r_grid, w00, deriv, 0.0)
    rest = H - dk.as_operator(basis)
    dk.gamma_proxy_full = float(np.linalg.norm(rest, 2))
    keep = basis.faithful_red if sector == "faithful" else None
    if keep is None or keep.sum() < 2:
        dk.gamma_proxy = dk.gamma_proxy_full
    else:
        dk.gamma_proxy = float(np.linalg.norm(rest[np.ix_(keep, keep)], 2))
    return dk


# -- polydisc ---------------------------------------------------------------

@dataclass(frozen=True)
class PolydiscParams:
    alpha: float
    beta: float
    gamma: float
    rho: float
    xi: float
    mu: float
    c_chi: float = 1.0

    @property
    def c_beta(self) -> float:
        return 1.5 * self.c_chi

    @property
    def c_gamma(self) -> float:
        return 128.0 * self.c_chi ** 2

    @staticmethod
    def locked_xi(rho: float, c_chi: float = 1.0) -> float:
        return float(np.sqrt(rho) / (4.0 * c_chi))

    @classmethod
    def locked(cls, alpha, beta, gamma, rho, mu, c_chi: float = 1.0) -> "PolydiscParams":
        return cls(alpha, beta, gamma, rho, cls.locked_xi(rho, c_chi), mu, c_chi)


@dataclass
class PolydiscReport:
    alpha_value: float
    beta_value: float
    gamma_proxy: float
    alpha_ok: bool
    beta_ok: bool
    gamma_ok: bool
    pair_ok: bool
    pair_detail: dict

    @property
    def inside(self) -> bool:
        return self.alpha_ok and self.beta_ok and self.gamma_ok and self.pair_ok


def polydisc_check(H: np.ndarray, expected_e: complex, p: PolydiscParams,
                   basis: FockBasis) -> PolydiscReport:
    """Membership diagnostics of H - expected_e in B(alpha, beta, gamma).

    The off-diagonal check uses the necessary condition proxy <= xi * gamma.
    """
    dk = extract_diag(H, basis)
    a_val = float(abs(dk.w00[0] - expected_e))
    b_val = float(np.max(np.abs(dk.w00_deriv - 1.0)))
    T = dk.as_operator(basis)
    cut = make_cutoffs(basis.red_hf, p.rho)
    detail = {}
    try:
        pr = check_pair(H, T, cut)
        detail = {"sigma_min_t": pr.sigma_min_t, "neumann_left": pr.neumann_left,
                  "neumann_right": pr.neumann_right, "cross_norm": pr.cross_norm}
        pair_ok = pr.passed
    except ValueError as exc:
        detail = {"error": str(exc)}
        pair_ok = False
    return PolydiscReport(a_val, b_val, dk.gamma_proxy, a_val <= p.alpha, b_val <= p.beta,
                          dk.gamma_proxy <= p.xi * p.gamma, pair_ok, detail)


# -- parameter ledger -------------------------------------------------------

@dataclass
class LedgerSequences:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    contraction: float
    z_constant: float
    epsilon: float
    admissible: dict

    @property
    def ok(self) -> bool:
        return all(self.admissible.values())


def parameter_ledger(p: PolydiscParams, alpha0: float, beta0: float, gamma0: float,
                     n_steps: int, strict: bool = True) -> LedgerSequences:
    """Predicted (alpha_n, beta_n, gamma_n) with the fixed constants
    C_beta = 3 C_chi / 2 and C_gamma = 128 C_chi^2.

    gamma_n = (C_gamma rho^mu)^n gamma_0, alpha_n = (C_beta/rho) gamma_{n-1}^2 and
    beta_n = beta_{n-1} + C_beta/rho * gamma_{n-1}^2. With ``strict`` a
    non-contractive factor C_gamma rho^mu >= 1 is refused.
    """
    rho, cchi = p.rho, p.c_chi
    cb, cg = p.c_beta, p.c_gamma
    factor = cg * rho ** p.mu
    if strict and factor >= 1:
        raise ValueError(f"iteration not contractive: C_gamma rho^mu = {factor:.4g} >= 1")
    gam = gamma0 * factor ** np.arange(n_steps + 1)
    alpha = np.empty(n_steps + 1)
    beta = np.empty(n_steps + 1)
    alpha[0], beta[0] = alpha0, beta0
    for n in range(1, n_steps + 1):
        alpha[n] = cb / rho * gam[n - 1] ** 2
        beta[n] = beta[n - 1] + cb / rho * gam[n - 1] ** 2
    eps = 0.5 - rho / 2 - (alpha[1] if n_steps >= 1 else 0.0)
    with np.errstate(over="ignore"):
        zc = float(np.exp(np.sum(alpha[1:]) / (2 * rho * eps ** 2))) if eps > 0 else np.inf
    tail = cb / rho * gamma0 ** 2 / (1 - factor ** 2) if factor < 1 else np.inf
    adm = {
        "beta0 <= rho/(8 C_chi)": bool(beta0 <= rho / (8 * cchi)),
        "gamma0 <= rho/(8 C_chi)": bool(gamma0 <= rho / (8 * cchi)),
        "beta0 + C_beta gamma0^2 / (rho (1 - (C_gamma rho^mu)^2)) <= rho/(8 C_chi)":
            bool(beta0 + tail <= rho / (8 * cchi)),
        "alpha0 < rho/2": bool(alpha0 < rho / 2),
        "rho < 4/5": bool(rho < 0.8),
        "C_gamma rho^mu < 1": bool(factor < 1),
    }
    return LedgerSequences(alpha, beta, gam, float(factor), zc, float(eps), adm)


def write_kernel_csv(path, w: KernelSequence) -> None:
    """Dump every sampled kernel value as rows (m, n, r, K..., re, im)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["m", "n", "r", "modes", "re", "im"])
        for i, r in enumerate(w.r_grid):
            wr.writerow([0, 0, repr(float(r)), "", repr(w.w00[i].real), repr(w.w00[i].imag)])
        for (m, n), arr in sorted(w.wmn.items()):
            for i, r in enumerate(w.r_grid):
                for K in itertools.product(range(w.n_modes), repeat=m + n):
                    v = arr[(i,) + K]
                    wr.writerow([m, n, repr(float(r)), " ".join(map(str, K)),
                                 repr(v.real), repr(v.imag)])
