"""Independent oracles and analyticity certification.

The dense oracle diagonalizes the same truncated H_g(s) that the RG reduces,
so agreement is solver-level. Analyticity in s is certified numerically by
trapezoidal Cauchy loops, Cauchy-Riemann differences and conjugation symmetry.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .fockgrid import FockBasis
from .model import ModelSpec, assemble_H
from .rgloop import Pipeline, RGConfig, eigenvector, run


def direct_ground(spec: ModelSpec, s: float, basis: FockBasis, g: float | None = None):
    """(E_min, ground vector) of the truncated H_g(s) by dense Hermitian diagonalization."""
    if abs(np.imag(s)) > 0:
        raise ValueError("direct_ground needs real s")
    if g is not None:
        spec = spec.with_g(g)
    H = assemble_H(spec, float(np.real(s)), basis)
    if np.linalg.norm(H - H.conj().T) > 1e-12 * max(1.0, np.linalg.norm(H)):
        raise ValueError("H_g(s) is not self-adjoint")
    ev, vec = np.linalg.eigh(H)
    return float(ev[0]), vec[:, 0]


def overlap(u: np.ndarray, v: np.ndarray) -> float:
    return float(abs(np.vdot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v)))


# -- contours ---------------------------------------------------------------

@dataclass(frozen=True)
class ContourSpec:
    center: complex
    radius: float
    points: int = 16

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.points < 3:
            raise ValueError("need at least three contour points")

    @property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.points) / self.points

    @property
    def nodes(self) -> np.ndarray:
        return self.center + self.radius * np.exp(1j * self.angles)


@dataclass
class LoopResult:
    integral: complex
    normalized: float


def cauchy_loop(values, contour: ContourSpec) -> LoopResult:
    """Trapezoidal integral of f ds around the circle, and its magnitude over
    (contour length * max |f|)."""
    f = np.asarray(values, dtype=complex)
    if f.shape[0] != contour.points:
        raise ValueError("one value per contour point is required")
    ds = 1j * contour.radius * np.exp(1j * contour.angles) * (2 * np.pi / contour.points)
    integ = np.tensordot(ds, f, axes=(0, 0))
    scale = 2 * np.pi * contour.radius * np.max(np.abs(f), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(scale > 0, np.abs(integ) / scale, 0.0)
    if np.ndim(norm) == 0:
        return LoopResult(complex(integ), float(norm))
    return LoopResult(integ, norm)


# -- analyticity ------------------------------------------------------------

@dataclass
class PointResult:
    s: complex
    z_infinity: complex
    phi0: np.ndarray
    psi: np.ndarray
    converged: bool


@dataclass
class AnalyticityReport:
    contour: ContourSpec
    z_values: np.ndarray
    z_loop: float
    phi_indices: list
    phi_loops: list
    psi_indices: list
    psi_loops: list
    cr_residual: float
    cr_scale: float
    conj_error: float
    failures: list = field(default_factory=list)

    @property
    def max_loop(self) -> float:
        return float(max([self.z_loop] + list(self.phi_loops) + list(self.psi_loops)))

    def passed(self, loop_tol: float = 1e-6, conj_tol: float = 1e-10,
               cr_rel: float = 1e-5) -> bool:
        return (not self.failures and self.max_loop <= loop_tol
                and self.conj_error <= conj_tol
                and self.cr_residual <= cr_rel * max(self.cr_scale, 1e-300))


def _solve_point(spec, s, rho, shells, A, n_max, cfg: RGConfig, depth: int) -> PointResult:
    pipe = Pipeline(spec, s, rho, shells, A, n_max,
                    RGConfig(rho=cfg.rho, n_steps=cfg.n_steps, u_threshold=cfg.u_threshold,
                             zero_tol=cfg.zero_tol, newton_max=cfg.newton_max,
                             c_chi=cfg.c_chi, soft_u=cfg.soft_u))
    tr = run(pipe)
    ev = eigenvector(pipe, tr, depth)
    ok = all(r.converged for r in tr.levels)
    return PointResult(complex(s), tr.z_infinity, ev.phi0, ev.psi, ok)


def analyticity_suite(spec: ModelSpec, contour: ContourSpec, rho: float, shells: int,
                      angular_nodes: int, n_max: int, cfg: RGConfig | None = None,
                      depth: int | None = None, n_coords: int = 5, cr_step: float = 2.5e-4,
                      threads: int = 1) -> AnalyticityReport:
    """Cauchy loops of z_inf(s), of n_coords coordinates of phi^(0)(s) and of
    psi(s) around the contour, Cauchy-Riemann residual at the center and the
    conjugation check on the first contour point."""
    cfg = cfg or RGConfig(rho=rho)
    depth = cfg.n_steps if depth is None else depth

    def solve(s):
        return _solve_point(spec, s, rho, shells, angular_nodes, n_max, cfg, depth)

    extra = [contour.center, contour.center + cr_step, contour.center - cr_step,
             contour.center + 1j * cr_step, contour.center - 1j * cr_step,
             np.conj(contour.nodes[1])]
    todo = list(contour.nodes) + extra
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(solve, todo))
    else:
        results = [solve(s) for s in todo]
    pts = results[:contour.points]
    center, xp, xm, yp, ym, conj_pt = results[contour.points:]
    failures = [f"RG did not converge at s = {p.s:.6g}" for p in results if not p.converged]

    z_vals = np.array([p.z_infinity for p in pts])
    z_loop = cauchy_loop(z_vals, contour).normalized
    # coordinates with the largest weight at the center (the vacuum one included)
    phi_idx = [int(i) for i in np.argsort(-np.abs(center.phi0), kind="stable")[:n_coords]]
    psi_idx = [int(i) for i in np.argsort(-np.abs(center.psi), kind="stable")[:n_coords]]
    phi_loops = [cauchy_loop(np.array([p.phi0[i] for p in pts]), contour).normalized for i in phi_idx]
    psi_loops = [cauchy_loop(np.array([p.psi[i] for p in pts]), contour).normalized for i in psi_idx]
    fx = (xp.z_infinity - xm.z_infinity) / (2 * cr_step)
    fy = (yp.z_infinity - ym.z_infinity) / (2 * cr_step)
    cr = float(abs(fy - 1j * fx))
    conj_err = float(abs(conj_pt.z_infinity - np.conj(pts[1].z_infinity)))
    return AnalyticityReport(contour, z_vals, z_loop, phi_idx, phi_loops, psi_idx, psi_loops,
                             cr, float(abs(fx)), conj_err, failures)


# -- the non-analytic counterexample ----------------------------------------

@dataclass
class CounterexampleRow:
    s: float
    energy: float
    half_width: float
    well_energy: float
    ground_in_zero_block: bool


@dataclass
class CounterexampleReport:
    rows: list
    overlap_across_zero: float
    second_derivative_left: float
    second_derivative_right: float
    discretization_floor: float

    @property
    def derivative_mismatch(self) -> float:
        return abs(self.second_derivative_left - self.second_derivative_right)


def _box_half_width(s: float, base: float = 40.0) -> float:
    """Dirichlet box that holds the bound state: its decay length is about 1/|s|."""
    return base if s >= 0 else max(base, 30.0 / abs(s))


def _well_ground(s: float, h: float, half_width: float):
    x = np.arange(-half_width + h, half_width - h / 2, h)
    V = (np.abs(x) <= 1.0).astype(float)
    diag = 2.0 / h ** 2 + s * V
    off = -np.ones(len(x) - 1) / h ** 2
    ev, vec = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    return float(ev[0]), vec[:, 0], x


def ground_state(s: float, h: float = 0.05, base: float = 40.0):
    """inf spec of (-d^2/dx^2 + s V) (+) 0 and its ground vector.

    The vector is returned as (well part on the box, zero-block amplitude).
    """
    hw = _box_half_width(s, base)
    e_well, v, x = _well_ground(s, h, hw)
    if e_well < 0:
        return e_well, (x, v, 0.0), hw, e_well
    return 0.0, (x, np.zeros_like(v), 1.0), hw, e_well


def _vector_overlap(a, b) -> float:
    if len(a[0]) > len(b[0]):
        a, b = b, a
    xa, va, ca = a
    xb, vb, cb = b
    # both boxes are centred and share h, so align by index offset
    na, nb = len(xa), len(xb)
    off = (nb - na) // 2
    inner = np.vdot(va, vb[off:off + na]) + np.conj(ca) * cb
    norm_a = np.sqrt(np.vdot(va, va).real + abs(ca) ** 2)
    norm_b = np.sqrt(np.vdot(vb, vb).real + abs(cb) ** 2)
    return float(abs(inner) / (norm_a * norm_b))


def counterexample_demo(s_values, h: float = 0.05, base: float = 40.0,
                        probe: float = 0.01, fd_step: float = 0.02) -> CounterexampleReport:
    """E(s) = inf spec((-d^2/dx^2 + s 1_[-1,1]) (+) 0) on a finite-difference line.

    E(s) < 0 for s < 0 and E(s) = 0 for s >= 0. E is C^1 at 0 (the bound
    state energy is about -s^2) but its second derivative jumps from about
    -2 to 0, so the one-sided second differences witness the non-analyticity.
    """
    rows = []
    for s in s_values:
        e, _, hw, ew = ground_state(float(s), h, base)
        rows.append(CounterexampleRow(float(s), e, hw, ew, e == 0.0))
    _, va, _, _ = ground_state(-probe, h, base)
    _, vb, _, _ = ground_state(probe, h, base)
    ov = _vector_overlap(va, vb)
    e = {t: ground_state(t, h, base)[0] for t in (-2 * fd_step, -fd_step, 0.0, fd_step, 2 * fd_step)}
    left = (e[0.0] - 2 * e[-fd_step] + e[-2 * fd_step]) / fd_step ** 2
    right = (e[2 * fd_step] - 2 * e[fd_step] + e[0.0]) / fd_step ** 2
    # floor: the lowest Dirichlet level of the free box, a pure discretization effect
    floor = (np.pi / (2 * base)) ** 2
    return CounterexampleReport(rows, ov, float(left), float(right), float(floor))
