"""Matter-boson model families, hypothesis checks and the level-0 reduction.

H_g(s) = H_at(s) (x) 1 + 1 (x) H_f + g W(s) with W(s) = a(G_sbar) + a*(G_s).
The atom family is a matrix polynomial in s with Hermitian coefficients, and
G_s(k) = s**p * g0(|k|) * D, so W(s)* = W(sbar) holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .feshbach import CutoffPair, FeshbachResult, chi_pair, check_pair, feshbach_map
from .fockgrid import FockBasis, ModeGrid, build_fock, build_grid, omega_norm, mu_norm

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass(frozen=True)
class ModelSpec:
    """Analytic matter-boson family.

    ``profile_exponent`` e gives the radial profile g0(|k|) = |k|**e on
    |k| <= uv_cutoff; ``profile`` overrides it with an arbitrary callable.
    """

    h_at_coeffs: tuple
    coupling_matrix: np.ndarray
    g: float = 0.0
    mu: float = 0.5
    s0: float = 0.0
    profile_exponent: float = 0.5
    coupling_s_power: int = 1
    uv_cutoff: float = 1.0
    name: str = "custom"
    profile: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        coeffs = tuple(np.asarray(a, dtype=complex) for a in self.h_at_coeffs)
        d = coeffs[0].shape[0]
        for a in coeffs:
            if a.shape != (d, d):
                raise ValueError("atom coefficients must be square and of equal size")
        object.__setattr__(self, "h_at_coeffs", coeffs)
        D = np.asarray(self.coupling_matrix, dtype=complex)
        if D.shape != (d, d):
            raise ValueError("coupling matrix must match the atom dimension")
        object.__setattr__(self, "coupling_matrix", D)
        if self.g < 0:
            raise ValueError("coupling constant g must be >= 0")
        if self.mu <= 0:
            raise ValueError("infrared exponent mu must be > 0")
        if not 0 < self.uv_cutoff <= 1:
            raise ValueError("uv_cutoff must lie in (0, 1]")

    @property
    def atom_dim(self) -> int:
        return self.h_at_coeffs[0].shape[0]

    def with_g(self, g: float) -> "ModelSpec":
        return replace(self, g=g)

    def h_at(self, s: complex) -> np.ndarray:
        out = np.zeros_like(self.h_at_coeffs[0])
        for p, a in enumerate(self.h_at_coeffs):
            out = out + a * s ** p
        return out

    def radial_profile(self, k_abs: np.ndarray) -> np.ndarray:
        k_abs = np.asarray(k_abs, dtype=float)
        if self.profile is not None:
            vals = np.asarray(self.profile(k_abs), dtype=complex)
        else:
            vals = k_abs ** self.profile_exponent + 0j
        return np.where(k_abs <= self.uv_cutoff + 1e-15, vals, 0.0)

    def coupling_values(self, s: complex, grid: ModeGrid) -> np.ndarray:
        """G_s(k_m) for every mode, shape (M, d, d)."""
        prof = self.radial_profile(grid.k_abs)
        return (s ** self.coupling_s_power) * prof[:, None, None] * self.coupling_matrix[None]

    def hermitian_defect(self) -> float:
        return max(float(np.linalg.norm(a - a.conj().T)) for a in self.h_at_coeffs)


def spin_boson(g: float = 0.01, s0: float = 0.1, mu: float = 0.5,
               uv_cutoff: float = 1.0) -> ModelSpec:
    """diag(0,1) + s sigma_x atom with G_s = s sqrt|k| sigma_x."""
    return ModelSpec((np.diag([0.0, 1.0]), SIGMA_X), SIGMA_X, g=g, mu=mu, s0=s0,
                     profile_exponent=0.5, uv_cutoff=uv_cutoff, name="spin_boson")


def dipole_toy(g: float = 0.01, s0: float = 0.0, mu: float = 0.5,
               D=None, levels=(0.0, 1.0, 1.5), uv_cutoff: float = 1.0) -> ModelSpec:
    """Three-level atom diag(levels) + s X with a user dipole matrix D."""
    n = len(levels)
    if D is None:
        D = np.zeros((n, n))
        D[0, 1] = D[1, 0] = 1.0
        D[1, 2] = D[2, 1] = 0.5
    X = np.zeros((n, n))
    X[0, 1] = X[1, 0] = 1.0
    return ModelSpec((np.diag(levels), X), np.asarray(D), g=g, mu=mu, s0=s0,
                     profile_exponent=0.5, uv_cutoff=uv_cutoff, name="dipole_toy")


MODEL_CATALOG = {"spin_boson": spin_boson, "dipole_toy": dipole_toy}


# -- atomic data ------------------------------------------------------------

@dataclass
class AtomicData:
    e_at: complex
    p_at: np.ndarray
    gap: float
    left_vector: np.ndarray
    right_vector: np.ndarray

    @property
    def pbar_at(self) -> np.ndarray:
        return np.eye(len(self.right_vector)) - self.p_at


def _reference(spec: ModelSpec):
    h0 = spec.h_at(spec.s0)
    if np.linalg.norm(h0 - h0.conj().T) > 1e-12 * max(1.0, np.linalg.norm(h0)):
        raise ValueError("H_at(s0) is not self-adjoint")
    ev, vecs = np.linalg.eigh(h0)
    gap = float(ev[1] - ev[0]) if len(ev) > 1 else np.inf
    if gap <= 1e-10:
        raise ValueError("E_at(s0) is degenerate")
    return float(ev[0]), vecs[:, 0].astype(complex), gap


def atomic_projection(spec: ModelSpec, s: complex) -> AtomicData:
    """Rank-one spectral projection of the eigenvalue continued from inf spec H_at(s0).

    The right vector is P_at(s) r0 and the left vector is normalized against
    it, with r0 the real ground vector at s0. Both depend analytically on s.
    """
    e0, r0, gap = _reference(spec)
    h = spec.h_at(s)
    ev, vl, vr = sla.eig(h, left=True, right=True)
    dist = np.abs(ev - e0)
    i = int(np.argmin(dist))
    others = np.delete(ev, i)
    if others.size and np.min(np.abs(others - ev[i])) < 1e-8 * gap:
        raise ValueError("eigenvalue collision near the tracked atomic level")
    if others.size and np.min(np.abs(others - e0)) <= gap / 2:
        raise ValueError("s outside the neighbourhood where E_at is isolated")
    rh, lh = vr[:, i], vl[:, i]
    p = np.outer(rh, lh.conj()) / (lh.conj() @ rh)
    r = p @ r0
    denom = r0.conj() @ r
    l_h = (r0.conj() @ p) / denom
    return AtomicData(complex(ev[i]), p, gap, l_h.conj(), r)


# -- assembly ---------------------------------------------------------------

def interaction(spec: ModelSpec, s: complex, basis: FockBasis) -> np.ndarray:
    """W(s) = a(G_sbar) + a*(G_s) on atom (x) Fock."""
    from .fockgrid import creation_field
    cr = creation_field(basis, spec.coupling_values(s, basis.grid))
    an = creation_field(basis, spec.coupling_values(np.conj(s), basis.grid)).conj().T
    return an + cr


def free_hamiltonian(spec: ModelSpec, s: complex, basis: FockBasis) -> np.ndarray:
    d = spec.atom_dim
    return (np.kron(spec.h_at(s), np.eye(basis.dim))
            + np.kron(np.eye(d), np.diag(basis.hf_eigenvalues))).astype(complex)


def assemble_H(spec: ModelSpec, s: complex, basis: FockBasis,
               dim_cap: int = 8000) -> np.ndarray:
    n = spec.atom_dim * basis.dim
    if n > dim_cap:
        raise ValueError(f"dimension {n} exceeds cap {dim_cap}")
    H = free_hamiltonian(spec, s, basis)
    if spec.g:
        H = H + spec.g * interaction(spec, s, basis)
    return H


# -- level-0 Feshbach reduction --------------------------------------------

@dataclass
class InitialReduction:
    """H^(0)[s,z] together with what the eigenvector lift needs."""

    h0: np.ndarray
    basis: FockBasis
    atomic: AtomicData
    frame: np.ndarray
    feshbach: FeshbachResult
    cutoff: CutoffPair
    pair_report: object = None

    def lift(self, phi0: np.ndarray) -> np.ndarray:
        """psi = Q_boldchi (phi_at (x) phi0), phi0 given on H_red."""
        nf = self.basis.dim
        d = self.atomic.right_vector.size
        v = np.zeros(d * nf, dtype=complex)
        v[self.basis.red_index] = phi0
        w = self.feshbach.q @ v
        return np.kron(self.frame, np.eye(nf)) @ w


def _adapted_frame(at: AtomicData) -> np.ndarray:
    """Columns (r, basis of ker l^H): in this frame P_at = e0 e0^T."""
    null = sla.null_space(at.left_vector.conj()[None, :])
    return np.column_stack([at.right_vector, null])


def _similarity(H: np.ndarray, S: np.ndarray, nf: int) -> np.ndarray:
    d = S.shape[0]
    Sinv = np.linalg.inv(S)
    H4 = H.reshape(d, nf, d, nf)
    out = np.einsum("ac,cief,eb->aibf", Sinv, H4, S, optimize=True)
    return out.reshape(d * nf, d * nf)


def initial_reduction(spec: ModelSpec, s: complex, z: complex, basis: FockBasis,
                      check: bool = False) -> InitialReduction:
    """Feshbach map of (H_g(s) - z, H_0(s) - z) for boldchi = P_at (x) chi_1.

    The computation runs in the frame (r | ker l^H) where boldchi and
    boldchibar are diagonal; the map is similarity covariant and the
    compression onto Ran P_at becomes the (0, 0) atom block.
    """
    at = atomic_projection(spec, s)
    S = _adapted_frame(at)
    nf = basis.dim
    d = spec.atom_dim
    c1, cb1 = chi_pair(basis.hf_eigenvalues, 1.0)
    chi = np.concatenate([c1, np.zeros((d - 1) * nf)])
    chibar = np.concatenate([cb1, np.ones((d - 1) * nf)])
    cut = CutoffPair(chi, chibar, 1.0)
    eye = np.eye(d * nf)
    Hs = _similarity(assemble_H(spec, s, basis), S, nf) - z * eye
    Ts = _similarity(free_hamiltonian(spec, s, basis), S, nf) - z * eye
    report = None
    if check:
        report = check_pair(Hs, Ts, cut)
        if not report.passed:
            raise ValueError("level-0 Feshbach pair condition violated: "
                             + "; ".join(report.failures()))
    res = feshbach_map(Hs, Ts, cut)
    red = basis.red_index
    h0 = res.f[:nf, :nf][np.ix_(red, red)]
    return InitialReduction(h0, basis, at, S, res, cut, report)


def initial_effective(spec: ModelSpec, s: complex, z: complex, basis: FockBasis,
                      check: bool = False) -> np.ndarray:
    """H^(0)[s,z] on H_red."""
    return initial_reduction(spec, s, z, basis, check=check).h0


# -- hypotheses -------------------------------------------------------------

@dataclass
class HypothesisReport:
    g_mu_norm2: float
    g_omega_norm2: float
    hyp1_refined_ratio: float
    hyp1_pass: bool
    gap: float
    hyp2_pass: bool
    e_distance_max: float
    resolvent_sup: float
    hyp3_pass: bool
    resolvent_sups: tuple
    messages: list

    @property
    def passed(self) -> bool:
        return self.hyp1_pass and self.hyp2_pass and self.hyp3_pass

    def as_dict(self) -> dict:
        return {
            "hypothesis_1": {"g_mu_norm2": self.g_mu_norm2, "g_omega_norm2": self.g_omega_norm2,
                             "refinement_ratio": self.hyp1_refined_ratio, "pass": self.hyp1_pass},
            "hypothesis_2": {"gap": self.gap, "pass": self.hyp2_pass},
            "hypothesis_3": {"max_abs_e_at_minus_z": self.e_distance_max,
                             "resolvent_sup": self.resolvent_sup, "pass": self.hyp3_pass},
            "resolvent_sups": list(self.resolvent_sups),
            "messages": list(self.messages),
        }


Q_GRID = np.concatenate([[0.0], np.geomspace(1e-3, 1e4, 60)])


def hypothesis_report(spec: ModelSpec, grid: ModeGrid, samples, basis: FockBasis | None = None,
                      refine_growth: float = 1.1) -> HypothesisReport:
    """Numerical checks of the three standing hypotheses on sample points (s, z).

    Hypothesis 1 is judged by refinement: the discrete ||G||_mu^2 on a grid
    with twice the shells must not grow by more than ``refine_growth``; an
    infrared-divergent profile keeps growing. Hypothesis 3's sup over q >= 0
    is taken on a log grid and the q -> infinity limit (which tends to
    ||Pbar_at||).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one (s, z) sample")
    msgs = []
    mu2 = om2 = 0.0
    ratio = 1.0
    fine = build_grid(grid.rho, 2 * grid.shells, grid.angular_nodes, mode_budget=10 ** 6)
    for s, _ in samples:
        G = spec.coupling_values(s, grid)
        mu2 = max(mu2, mu_norm(grid, G, spec.mu) ** 2)
        om2 = max(om2, omega_norm(grid, G) ** 2)
        coarse = mu_norm(grid, G, spec.mu) ** 2
        refined = mu_norm(fine, spec.coupling_values(s, fine), spec.mu) ** 2
        if coarse > 0:
            ratio = max(ratio, refined / coarse)
    hyp1 = bool(np.isfinite(mu2) and ratio <= refine_growth)
    if not hyp1:
        msgs.append(f"Hypothesis 1: ||G||_mu^2 grows by {ratio:.3g}x under shell refinement")

    try:
        _, _, gap = _reference(spec)
        hyp2 = spec.hermitian_defect() <= 1e-12
        if not hyp2:
            msgs.append("Hypothesis 2: atom coefficients are not Hermitian")
    except ValueError as exc:
        gap, hyp2 = 0.0, False
        msgs.append(f"Hypothesis 2: {exc}")

    edist = 0.0
    rsup = 0.0
    sups = [0.0, 0.0, 0.0]
    hyp3 = hyp2
    if hyp2:
        for s, z in samples:
            at = atomic_projection(spec, s)
            edist = max(edist, abs(at.e_at - z))
            h = spec.h_at(s)
            pbar = at.pbar_at
            for q in Q_GRID:
                m = np.linalg.solve(h - z * np.eye(len(h)) + q * np.eye(len(h)), pbar)
                rsup = max(rsup, (q + 1) * np.linalg.norm(m, 2))
            rsup = max(rsup, np.linalg.norm(pbar, 2))
            if basis is not None:
                sups = [max(a, b) for a, b in zip(sups, _resolvent_sups(spec, s, z, basis))]
        if edist >= 0.5:
            hyp3 = False
            msgs.append(f"Hypothesis 3: |E_at(s) - z| reaches {edist:.3g} >= 1/2")
        if not np.isfinite(rsup):
            hyp3 = False
            msgs.append("Hypothesis 3: resolvent sup is infinite")
    return HypothesisReport(mu2, om2, ratio, hyp1, gap, hyp2, edist, rsup, hyp3, tuple(sups), msgs)


def _resolvent_sups(spec: ModelSpec, s, z, basis: FockBasis):
    """||(H_f+1)(H_0-z)^-1 boldchibar||, ||W (H_0-z)^-1 boldchibar||,
    ||(H_0-z)^-1 boldchibar W|| on the truncated space."""
    at = atomic_projection(spec, s)
    nf = basis.dim
    d = spec.atom_dim
    _, cb1 = chi_pair(basis.hf_eigenvalues, 1.0)
    chibar = np.kron(at.pbar_at, np.eye(nf)) + np.kron(at.p_at, np.diag(cb1))
    H0z = free_hamiltonian(spec, s, basis) - z * np.eye(d * nf)
    # (H_0 - z)^-1 restricted to Ran chibar: H_0 commutes with chibar
    R = np.linalg.solve(H0z, chibar)
    hf1 = np.kron(np.eye(d), np.diag(basis.hf_eigenvalues + 1.0))
    W = interaction(spec, s, basis)
    return (float(np.linalg.norm(hf1 @ R, 2)), float(np.linalg.norm(W @ R, 2)),
            float(np.linalg.norm(np.linalg.solve(H0z, chibar @ W), 2)))


def u_samples(spec: ModelSpec, r_s: float, r_z: float, n: int = 4):
    """Boundary and centre samples of the product disc U around (s0, E_at(s0))."""
    e0, _, _ = _reference(spec)
    ang = 2 * np.pi * np.arange(n) / n
    pts = [(spec.s0, e0)]
    for a in ang:
        for b in ang:
            pts.append((spec.s0 + r_s * np.exp(1j * a), e0 + r_z * np.exp(1j * b)))
    return pts


def truncation_defect(spec: ModelSpec, s: complex, z: complex, basis: FockBasis) -> float:
    """||H^(0)[z] - H^(0)_+[z]|| on the faithful sector, where H^(0)_+ is built
    with one more boson allowed.

    States below the cutoff miss emission paths through the cutoff sector at
    fourth order in g; this measures that defect directly.
    """
    big = build_fock(basis.grid, basis.n_max + 1, dim_cap=max(2 * basis.dim, 20000))
    h = initial_effective(spec, s, z, basis)
    hb = initial_effective(spec, s, z, big)
    keep = np.flatnonzero(basis.faithful_red)
    pos_big = {int(b): p for p, b in enumerate(big.red_index)}
    idx_big = [pos_big[big.index[basis.states[basis.red_index[p]]]] for p in keep]
    d = h[np.ix_(keep, keep)] - hb[np.ix_(idx_big, idx_big)]
    return float(np.linalg.norm(d, 2))


def calibrate_g(spec: ModelSpec, grid: ModeGrid, basis: FockBasis, targets,
                samples=None, g_start: float | None = None, g_floor: float = 1e-8,
                rho: float | None = None, n_steps: int | None = None) -> float:
    """Largest g of the halving lattice g_start * 2**-k whose H^(0) lies in the
    target polydisc at every sample (s, z).

    With ``n_steps`` the truncation defect must also stay below the flow's
    own signal after ``n_steps`` levels: the defect grows by 1/rho per level
    while the off-diagonal proxy shrinks by rho, so we require
    defect * rho**-n <= rho**(n + 2) * proxy, one level of headroom.
    """
    from .kernels import PolydiscParams, polydisc_check
    alpha0, beta0, gamma0, xi, mu = targets
    rho = grid.rho if rho is None else rho
    p = PolydiscParams(alpha0, beta0, gamma0, rho, xi, mu)
    if samples is None:
        e0, _, _ = _reference(spec)
        samples = [(spec.s0, e0)]
    g = spec.g if g_start is None else g_start
    if g <= 0:
        return 0.0
    while g >= g_floor:
        trial = spec.with_g(g)
        ok = True
        for s, z in samples:
            try:
                h0 = initial_effective(trial, s, z, basis)
                at = atomic_projection(trial, s)
                rep = polydisc_check(h0, at.e_at - z, p, basis)
            except ValueError:
                ok = False
                break
            if not rep.inside:
                ok = False
                break
        if ok and n_steps is not None:
            s, z = samples[0]
            defect = truncation_defect(trial, s, z, basis)
            ok = defect * rho ** (-n_steps) <= rho ** (n_steps + 2) * rep.gamma_proxy
        if ok:
            return g
        g /= 2
    raise ValueError("no admissible g found")
