"""Smooth Feshbach-Schur map for cutoffs that are diagonal in the working basis.

Both chi and chibar are functions of H_f, so in the occupation basis they are
diagonal and Ran(chibar) is a coordinate subspace. That makes the restricted
inverse of H_chibar a plain submatrix inverse padded with zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COND_LIMIT = 1e12
COMMUTATOR_TOL = 1e-10
SINGULAR_REL_TOL = 1e-8


def smoothstep(x):
    """C^1 monotone step 3x^2 - 2x^3, clipped to [0, 1]."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def chi_pair(t, rho: float = 1.0):
    """(chi(t), chibar(t)) with chi = 1 below 3rho/4 and chi = 0 above rho."""
    phase = 0.5 * np.pi * smoothstep((np.asarray(t, dtype=float) - 0.75 * rho) / (0.25 * rho))
    return np.cos(phase), np.sin(phase)


def chi_derivative_bound() -> float:
    """sup |chi_1'| for the cos(pi/2 * smoothstep) shape: (pi/2) * 1.5 * 4."""
    return 3.0 * np.pi


@dataclass(frozen=True)
class CutoffPair:
    """Diagonal cutoffs; ``chi`` and ``chibar`` hold the diagonal entries."""

    chi: np.ndarray
    chibar: np.ndarray
    rho: float = 1.0
    shape: str = "cos-smoothstep"

    @property
    def support_mask(self) -> np.ndarray:
        return self.chibar != 0.0

    @property
    def dim(self) -> int:
        return len(self.chi)

    def chi_op(self) -> np.ndarray:
        return np.diag(self.chi).astype(complex)

    def chibar_op(self) -> np.ndarray:
        return np.diag(self.chibar).astype(complex)


def make_cutoffs(basis_or_hf, rho: float = 1.0) -> CutoffPair:
    """Cutoff pair at threshold rho, evaluated on a basis' H_f eigenvalues
    (a FockBasis or a plain array of eigenvalues)."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    hf = getattr(basis_or_hf, "hf_eigenvalues", basis_or_hf)
    c, cb = chi_pair(hf, rho)
    return CutoffPair(c, cb, rho)


@dataclass
class PairReport:
    commutator_chi: float
    commutator_chibar: float
    sigma_min_t: float
    neumann_left: float
    neumann_right: float
    cross_norm: float
    passed: bool

    def failures(self) -> list[str]:
        out = []
        if not self.sigma_min_t > 0:
            out.append("(b') T not invertible on Ran chibar")
        if not self.neumann_left < 1:
            out.append(f"(c') ||T^-1 chibar W chibar|| = {self.neumann_left:.3g} >= 1")
        if not self.neumann_right < 1:
            out.append(f"(c') ||chibar W T^-1 chibar|| = {self.neumann_right:.3g} >= 1")
        return out


@dataclass
class FeshbachResult:
    f: np.ndarray
    q: np.ndarray
    q_sharp: np.ndarray
    hbar_inverse: np.ndarray
    condition_report: dict = field(default_factory=dict)


def _t_inverse_on_support(T: np.ndarray, mask: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(mask)
    out = np.zeros_like(T, dtype=complex)
    if idx.size:
        out[np.ix_(idx, idx)] = np.linalg.inv(T[np.ix_(idx, idx)])
    return out


def check_pair(H: np.ndarray, T: np.ndarray, cut: CutoffPair) -> PairReport:
    """Sufficient conditions (a'), (b'), (c') for (H, T) to be a Feshbach pair."""
    H = np.asarray(H, dtype=complex)
    T = np.asarray(T, dtype=complex)
    if H.shape != T.shape or H.shape != (cut.dim, cut.dim):
        raise ValueError("H, T and the cutoffs must share one dimension")
    c, cb = cut.chi, cut.chibar
    t_norm = np.linalg.norm(T, 2)
    comm = np.linalg.norm(T * c[None, :] - c[:, None] * T, 2)
    comm_bar = np.linalg.norm(T * cb[None, :] - cb[:, None] * T, 2)
    if comm > COMMUTATOR_TOL * max(t_norm, 1.0) or comm_bar > COMMUTATOR_TOL * max(t_norm, 1.0):
        raise ValueError(f"T does not commute with the cutoffs (||[T,chi]|| = {comm:.3g}); "
                         "T must be a function of H_f")
    mask = cut.support_mask
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return PairReport(comm, comm_bar, np.inf, 0.0, 0.0, 0.0, True)
    t_blk = T[np.ix_(idx, idx)]
    smin = float(np.linalg.svd(t_blk, compute_uv=False)[-1])
    if smin <= 1e-14 * max(t_norm, 1.0):
        return PairReport(comm, comm_bar, smin, np.inf, np.inf, np.inf, False)
    W = H - T
    tinv = _t_inverse_on_support(T, mask)
    wbb = cb[:, None] * W * cb[None, :]
    wbc = cb[:, None] * W * c[None, :]
    left = float(np.linalg.norm(tinv @ wbb, 2))
    right = float(np.linalg.norm(wbb @ tinv, 2))
    cross = float(np.linalg.norm(tinv @ wbc, 2))
    return PairReport(comm, comm_bar, smin, left, right, cross, left < 1 and right < 1)


def feshbach_map(H: np.ndarray, T: np.ndarray, cut: CutoffPair,
                 check: bool = False) -> FeshbachResult:
    """F = T + chi W chi - chi W chibar Hbar^-1 chibar W chi, with Q and Q#."""
    H = np.asarray(H, dtype=complex)
    T = np.asarray(T, dtype=complex)
    report = {}
    if check:
        pr = check_pair(H, T, cut)
        report = vars(pr).copy()
        if not pr.passed:
            raise ValueError("Feshbach pair condition violated: " + "; ".join(pr.failures()))
    c, cb = cut.chi, cut.chibar
    W = H - T
    idx = np.flatnonzero(cut.support_mask)
    ic = np.flatnonzero(c != 0.0)
    hbar_inv = np.zeros_like(H)
    f = T.copy()
    f[np.ix_(ic, ic)] += c[ic, None] * W[np.ix_(ic, ic)] * c[None, ic]
    q = np.diag(c).astype(complex)
    q_sharp = q.copy()
    if idx.size:
        blk = T[np.ix_(idx, idx)] + (cb[idx, None] * W[np.ix_(idx, idx)] * cb[None, idx])
        inv = np.linalg.inv(blk)
        # 1-norm condition number, exact given the inverse
        cond = float(np.linalg.norm(blk, 1) * np.linalg.norm(inv, 1))
        report["hbar_condition"] = cond
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise ValueError(f"pair condition violated numerically (cond = {cond:.3g})")
        hbar_inv[np.ix_(idx, idx)] = inv
        if ic.size:
            bwc = cb[idx, None] * W[np.ix_(idx, ic)] * c[None, ic]   # chibar W chi
            cwb = c[ic, None] * W[np.ix_(ic, idx)] * cb[None, idx]   # chi W chibar
            right = inv @ bwc
            f[np.ix_(ic, ic)] -= cwb @ right
            q[np.ix_(idx, ic)] -= cb[idx, None] * right
            q_sharp[np.ix_(ic, idx)] -= (cwb @ inv) * cb[None, idx]
    out = FeshbachResult(f, q, q_sharp, hbar_inv, report)
    if not all(np.all(np.isfinite(a)) for a in (f, q, q_sharp)):
        raise ValueError("Feshbach map produced non-finite entries")
    return out


def identity_residuals(H, T, cut: CutoffPair, res: FeshbachResult) -> np.ndarray:
    """Spectral norms of the six algebraic identities, in the order
    (a) left, (a) right, (b) left, (b) right, (c) left, (c) right."""
    H = np.asarray(H, dtype=complex)
    T = np.asarray(T, dtype=complex)
    c, cb = cut.chi, cut.chibar
    one = np.eye(cut.dim)
    chi = np.diag(c)
    bhb = cb[:, None] * res.hbar_inverse * cb[None, :]
    btb = cb[:, None] * _t_inverse_on_support(T, cut.support_mask) * cb[None, :]
    F, Q, Qs = res.f, res.q, res.q_sharp
    mats = [
        bhb @ H - (one - Q @ chi),
        H @ bhb - (one - chi @ Qs),
        btb @ F - (one - chi @ Q),
        F @ btb - (one - Qs @ chi),
        H @ Q - chi @ F,
        Qs @ H - F @ chi,
    ]
    return np.array([np.linalg.norm(m, 2) for m in mats])


@dataclass
class IsospectralityReport:
    sigma_min_h: float
    sigma_min_f: float
    h_singular: bool
    f_singular: bool
    consistent: bool
    kernel_h_to_f: float = 0.0
    kernel_f_to_h: float = 0.0


def isospectrality_check(H, T, cut: CutoffPair, res: FeshbachResult,
                         subspace: np.ndarray | None = None,
                         rel_tol: float = SINGULAR_REL_TOL) -> IsospectralityReport:
    """Compare singularity of H with that of F restricted to a subspace Y.

    Y defaults to the coordinates where chi != 0 (Ran chi), which satisfies
    the invariance conditions on Y for diagonal T. When both are singular the
    kernel maps are tested: chi maps ker H into ker F, and Q maps back.
    """
    H = np.asarray(H, dtype=complex)
    if subspace is None:
        subspace = np.flatnonzero(cut.chi != 0.0)
    y = np.asarray(subspace)
    f_y = res.f[np.ix_(y, y)]
    _, sh, vh = np.linalg.svd(H)
    _, sf, vf = np.linalg.svd(f_y)
    h_sing = sh[-1] <= rel_tol * max(sh[0], 1.0)
    f_sing = sf[-1] <= rel_tol * max(sf[0], 1.0)
    rep = IsospectralityReport(float(sh[-1]), float(sf[-1]), bool(h_sing), bool(f_sing),
                               bool(h_sing == f_sing))
    if h_sing and f_sing:
        v = vh[-1].conj()
        chi_v = cut.chi * v
        rep.kernel_h_to_f = float(np.linalg.norm(res.q @ chi_v - v) / np.linalg.norm(v))
        u = np.zeros(cut.dim, dtype=complex)
        u[y] = vf[-1].conj()
        rep.kernel_f_to_h = float(np.linalg.norm(cut.chi * (res.q @ u) - u) / np.linalg.norm(u))
        rep.consistent = rep.kernel_h_to_f <= 1e-6 and rep.kernel_f_to_h <= 1e-6
    return rep
