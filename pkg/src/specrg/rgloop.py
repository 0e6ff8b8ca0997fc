"""Renormalization transformation on matrices, nested zero finding, eigenvector
assembly and the spectral certificates.

Level n works on H_red of a grid with ``shells - n`` shells. The dilation
Gamma* sends the reduced states of level n bijectively onto the states of
level n-1 with H_f <= rho (each boson one shell deeper), so every step is
exactly isospectral and the truncation leakage is zero by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .feshbach import CutoffPair, FeshbachResult, check_pair, feshbach_map, make_cutoffs
from .fockgrid import FockBasis, build_fock, build_grid, shift_indices
from .kernels import DiagonalKernel, PolydiscParams, extract_diag
from .model import InitialReduction, ModelSpec, assemble_H, atomic_projection, initial_reduction


@dataclass
class RGConfig:
    rho: float = 0.25
    n_steps: int = 6
    u_threshold: float | None = None
    zero_tol: float = 1e-12
    newton_max: int = 40
    polydisc: PolydiscParams | None = None
    c_chi: float = 1.0
    leakage_bound: float = 1e-12
    soft_u: bool = True

    def __post_init__(self):
        if not 0 < self.rho < 0.8:
            raise ValueError("rho must lie in (0, 4/5)")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.u_threshold is None:
            self.u_threshold = self.rho / 2

    @property
    def xi(self) -> float:
        if self.polydisc is not None:
            return self.polydisc.xi
        return PolydiscParams.locked_xi(self.rho, self.c_chi)

    @property
    def c_beta(self) -> float:
        return 1.5 * self.c_chi

    def alpha_empirical(self, gamma_proxy_prev: float) -> float:
        """(C_beta/rho) (proxy/xi)^2: the alpha recursion with gamma replaced by
        the smallest value compatible with proxy <= xi * gamma."""
        return self.c_beta / self.rho * (gamma_proxy_prev / self.xi) ** 2


@dataclass
class StepResult:
    h_new: np.ndarray | None
    diag: DiagonalKernel
    feshbach: FeshbachResult
    cutoff: CutoffPair
    leakage: float


def feshbach_at_scale(H: np.ndarray, basis: FockBasis, rho: float):
    diag = extract_diag(H, basis)
    T = diag.as_operator(basis)
    cut = make_cutoffs(basis.red_hf, rho)
    return diag, T, cut, feshbach_map(H, T, cut)


def renorm_step(H: np.ndarray, rho: float, basis: FockBasis, next_basis: FockBasis | None,
                shift: np.ndarray | None = None, leakage_bound: float = 1e-12) -> StepResult:
    """R_rho(H) = rho^-1 Gamma F_chi_rho(H, w00(H_f)) Gamma* on H_red of ``next_basis``.

    With ``next_basis`` None only the Feshbach part is computed (needed for
    the last Q in the eigenvector product).
    """
    diag, T, cut, res = feshbach_at_scale(H, basis, rho)
    if next_basis is None:
        return StepResult(None, diag, res, cut, 0.0)
    if shift is None:
        shift = shift_indices(next_basis, basis)
    inside = np.flatnonzero(basis.red_hf <= rho + 1e-12)
    lost = np.setdiff1d(inside, shift)
    leak = 0.0
    if lost.size:
        leak = float(np.linalg.norm(res.f[np.ix_(lost, inside)]) + np.linalg.norm(res.f[np.ix_(inside, lost)]))
    if leak > leakage_bound:
        raise ValueError(f"insufficient shells: dilation leakage {leak:.3g}")
    h_new = res.f[np.ix_(shift, shift)] / rho
    return StepResult(h_new, diag, res, cut, leak)


def e_of_z(H: np.ndarray) -> complex:
    """Vacuum expectation; the vacuum is reduced state 0."""
    return complex(H[0, 0])


# -- pipeline ---------------------------------------------------------------

@dataclass
class ChainResult:
    z: complex
    h: list
    steps: list
    reduction: InitialReduction
    u_violations: list

    @property
    def energies(self) -> np.ndarray:
        return np.array([e_of_z(h) for h in self.h])


class Pipeline:
    """A model at fixed s with its tower of level bases."""

    def __init__(self, spec: ModelSpec, s: complex, rho: float, shells: int,
                 angular_nodes: int, n_max: int, cfg: RGConfig | None = None):
        self.spec = spec
        self.s = s
        self.cfg = cfg or RGConfig(rho=rho)
        if abs(self.cfg.rho - rho) > 0:
            raise ValueError("rg.rho must equal grid.rho")
        if self.cfg.n_steps + 2 > shells:
            raise ValueError("insufficient shells: need shells >= n_steps + 2")
        self.rho = rho
        self.bases = [build_fock(build_grid(rho, shells - n, angular_nodes), n_max)
                      for n in range(self.cfg.n_steps + 1)]
        self.shifts = [None] + [shift_indices(self.bases[n], self.bases[n - 1])
                                for n in range(1, self.cfg.n_steps + 1)]
        self.atomic = atomic_projection(spec, s)
        self._cache = {}

    @property
    def basis0(self) -> FockBasis:
        return self.bases[0]

    @property
    def e_at(self) -> complex:
        return self.atomic.e_at

    def chain(self, z: complex, n: int, final_feshbach: bool = False) -> ChainResult:
        """H^(0)[z], ..., H^(n)[z]; optionally also the Feshbach data of level n."""
        if n > self.cfg.n_steps:
            raise ValueError(f"level {n} exceeds the configured n_steps")
        red0 = initial_reduction(self.spec, self.s, z, self.basis0)
        hs = [red0.h0]
        steps = []
        viol = []
        for k in range(1, n + 1):
            e_prev = e_of_z(hs[-1])
            if abs(e_prev) > self.cfg.u_threshold:
                viol.append(k)
                if not self.cfg.soft_u:
                    raise ValueError(f"z outside U_{k}: |E^({k - 1})| = {abs(e_prev):.3g}")
            try:
                st = renorm_step(hs[-1], self.rho, self.bases[k - 1], self.bases[k],
                                 self.shifts[k], self.cfg.leakage_bound)
            except ValueError as exc:
                raise ValueError(f"level {k}: {exc}") from exc
            steps.append(st)
            hs.append(st.h_new)
        if final_feshbach:
            steps.append(renorm_step(hs[-1], self.rho, self.bases[n], None))
        return ChainResult(z, hs, steps, red0, viol)

    def level_function(self, n: int, z: complex) -> complex:
        key = (n, complex(z))
        if key not in self._cache:
            self._cache[key] = e_of_z(self.chain(z, n).h[-1])
        return self._cache[key]

    def derivative(self, n: int, z: complex, h: float | None = None) -> complex:
        h = 1e-7 * self.rho if h is None else h
        return (self.level_function(n, z + h) - self.level_function(n, z - h)) / (2 * h)


def level_function(pipe: Pipeline, n: int, z: complex) -> complex:
    return pipe.level_function(n, z)


@dataclass
class ZeroResult:
    z: complex
    value: complex
    iterations: int
    converged: bool
    reason: str


def newton_zero(f, df, z0: complex, center: complex, radius: float, tol: float,
                max_iter: int = 40, real_axis: bool = False) -> ZeroResult:
    """Newton with steps clipped to the disc B(center, radius).

    Stops on |f| <= tol or when the step stalls at roundoff level (the
    attainable accuracy of f is limited by its own evaluation noise).
    """
    z = complex(z0)
    fz = f(z)
    for it in range(1, max_iter + 1):
        if abs(fz) <= tol:
            return ZeroResult(z, fz, it - 1, True, "tolerance")
        d = df(z)
        if d == 0 or not np.isfinite(d):
            break
        step = -fz / d
        zn = z + step
        if real_axis:
            zn = complex(zn.real, 0.0)
        off = zn - center
        if abs(off) > radius:
            zn = center + off / abs(off) * radius
        fn = f(zn)
        if abs(zn - z) <= 4 * np.finfo(float).eps * max(1.0, abs(z)):
            better = fn if abs(fn) < abs(fz) else fz
            return ZeroResult(zn if abs(fn) < abs(fz) else z, better, it, True, "stagnation")
        z, fz = zn, fn
    return ZeroResult(z, fz, max_iter, abs(fz) <= tol, "unconverged" if abs(fz) > tol else "tolerance")


def bisect_real(f, a: float, b: float, tol: float, max_iter: int = 200) -> ZeroResult:
    """Bisection for a real function decreasing on [a, b]."""
    fa, fb = f(a).real, f(b).real
    if fa * fb > 0:
        raise ValueError("no sign change on the bracket")
    for it in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m).real
        if abs(fm) <= tol or b - a <= 4 * np.finfo(float).eps * max(1.0, abs(m)):
            return ZeroResult(complex(m), complex(fm), it, True, "bisection")
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return ZeroResult(complex(m), complex(fm), max_iter, False, "unconverged")


def find_zero(pipe: Pipeline, n: int, z_start: complex | None = None) -> ZeroResult:
    cfg = pipe.cfg
    z0 = pipe.e_at if z_start is None else z_start
    real = abs(np.imag(pipe.s)) == 0.0
    res = newton_zero(lambda z: pipe.level_function(n, z), lambda z: pipe.derivative(n, z),
                      z0, pipe.e_at, pipe.rho, cfg.zero_tol, cfg.newton_max, real_axis=real)
    if not res.converged and real:
        a = pipe.e_at.real - pipe.rho * 0.999
        b = pipe.e_at.real + pipe.rho * 0.999
        res = bisect_real(lambda x: pipe.level_function(n, x), a, b, cfg.zero_tol)
    return res


# -- the full run -----------------------------------------------------------

@dataclass
class LevelRecord:
    level: int
    z: complex
    e_value: complex
    iterations: int
    converged: bool
    reason: str
    e_at_z_inf: complex = 0j
    gamma_proxy: float = 0.0
    gamma_proxy_full: float = 0.0
    e_recursion_residual: float = 0.0
    alpha_empirical: float = 0.0
    leakage: float = 0.0
    pair_report: dict = field(default_factory=dict)


@dataclass
class RGTrace:
    levels: list
    z_infinity: complex
    error_bar: float
    e_at: complex
    chain: ChainResult | None = None
    samples: list = field(default_factory=list)

    @property
    def z(self) -> np.ndarray:
        return np.array([r.z for r in self.levels])

    @property
    def gamma_proxy(self) -> np.ndarray:
        return np.array([r.gamma_proxy for r in self.levels])


def run(pipe: Pipeline, cfg: RGConfig | None = None) -> RGTrace:
    cfg = cfg or pipe.cfg
    levels = []
    z = pipe.e_at
    for n in range(cfg.n_steps + 1):
        zr = find_zero(pipe, n, z)
        z = zr.z
        levels.append(LevelRecord(n, zr.z, zr.value, zr.iterations, zr.converged, zr.reason))
    z_inf = levels[-1].z
    ch = pipe.chain(z_inf, cfg.n_steps, final_feshbach=True)
    energies = ch.energies
    for n, rec in enumerate(levels):
        rec.e_at_z_inf = complex(energies[n])
        rec.gamma_proxy = ch.steps[n].diag.gamma_proxy
        rec.gamma_proxy_full = ch.steps[n].diag.gamma_proxy_full
        rec.leakage = ch.steps[n].leakage
        hn = ch.h[n]
        bn = pipe.bases[n]
        try:
            pr = check_pair(hn, ch.steps[n].diag.as_operator(bn), ch.steps[n].cutoff)
            rec.pair_report = {"passed": pr.passed, "sigma_min_t": pr.sigma_min_t,
                               "neumann_left": pr.neumann_left, "neumann_right": pr.neumann_right}
        except ValueError as exc:
            rec.pair_report = {"passed": False, "error": str(exc)}
        if n >= 1:
            rec.e_recursion_residual = abs(energies[n] - energies[n - 1] / pipe.rho)
            rec.alpha_empirical = cfg.alpha_empirical(levels[n - 1].gamma_proxy)
    # ledger-style error bar with the empirical alpha sequence
    alphas = [r.alpha_empirical for r in levels]
    eps = 0.5 - pipe.rho / 2 - (alphas[1] if len(alphas) > 1 else 0.0)
    bar = pipe.rho ** cfg.n_steps * float(np.exp(sum(alphas) / (2 * pipe.rho * eps ** 2)))
    return RGTrace(levels, z_inf, bar, pipe.e_at, ch)


def e_recursion_samples(pipe: Pipeline, trace: RGTrace, n_points: int = 3) -> list:
    """|E^(n)(z) - E^(n-1)(z)/rho| against alpha_n^emp at points of U_n around z_n."""
    out = []
    for n in range(1, len(trace.levels)):
        zn = trace.levels[n].z
        d = abs(pipe.derivative(n, zn))
        half = 0.5 * pipe.cfg.u_threshold / d
        for t in np.linspace(-0.8, 0.8, n_points):
            z = zn + t * half
            ch = pipe.chain(z, n)
            e = ch.energies
            out.append((n, complex(z), float(abs(e[n] - e[n - 1] / pipe.rho)),
                        pipe.cfg.alpha_empirical(ch.steps[n - 1].diag.gamma_proxy)))
    return out


# -- eigenvector ------------------------------------------------------------

@dataclass
class EigenvectorResult:
    phi0: np.ndarray
    psi: np.ndarray
    partials: list
    increments: np.ndarray
    tail_bounds: np.ndarray
    step1_constant: float
    h0_residual: float
    h_residual: float
    flag: str = ""


def step1_constant(rho: float, xi: float, gamma_sum: float) -> float:
    a = 8.0 / rho * xi / (1.0 - xi)
    return a * float(np.exp(a * gamma_sum))


def eigenvector(pipe: Pipeline, trace: RGTrace, depth: int | None = None) -> EigenvectorResult:
    """phi_{0,l} = Q_0 Gamma* Q_1 ... Gamma* Q_l Omega for l <= depth, and the lift
    psi = Q_boldchi (phi_at (x) phi^(0))."""
    depth = pipe.cfg.n_steps if depth is None else depth
    ch = trace.chain
    if ch is None or len(ch.steps) < depth + 1:
        ch = pipe.chain(trace.z_infinity, depth, final_feshbach=True)
    qs = [st.feshbach.q for st in ch.steps[:depth + 1]]

    def product(l):
        v = np.zeros(len(pipe.bases[l].red_index), dtype=complex)
        v[0] = 1.0
        v = qs[l] @ v
        for k in range(l - 1, -1, -1):
            u = np.zeros(len(pipe.bases[k].red_index), dtype=complex)
            u[pipe.shifts[k + 1]] = v
            v = qs[k] @ u
        return v

    omega = np.zeros(len(pipe.basis0.red_index), dtype=complex)
    omega[0] = 1.0
    partials = [product(l) for l in range(depth + 1)]
    incs = [np.linalg.norm(partials[0] - omega)]
    incs += [np.linalg.norm(partials[l] - partials[l - 1]) for l in range(1, depth + 1)]
    phi0 = partials[-1]
    gam = np.array([st.diag.gamma_proxy for st in ch.steps[:depth + 1]])
    xi = pipe.cfg.xi
    C = step1_constant(pipe.rho, xi, float(np.sum(gam)))
    red = ch.reduction
    h0 = ch.h[0]
    r0 = float(np.linalg.norm(h0 @ phi0) / np.linalg.norm(phi0))
    psi = red.lift(phi0)
    H = assemble_H(pipe.spec, pipe.s, pipe.basis0)
    r1 = float(np.linalg.norm(H @ psi - trace.z_infinity * psi) / np.linalg.norm(psi))
    flag = "" if np.linalg.norm(phi0) >= 0.5 else "phi0 norm below 1/2"
    return EigenvectorResult(phi0, psi, partials, np.array(incs), C * gam, C, r0, r1, flag)


# -- certificates -----------------------------------------------------------

@dataclass
class GapReport:
    x: np.ndarray
    sigma_min: np.ndarray
    clean: bool
    lower_bounds: list


def gap_check(pipe: Pipeline, trace: RGTrace, x_samples=None, n_points: int = 10,
              delta: float = 1e-4) -> GapReport:
    """sigma_min(H^(0)[x]) on a grid of real x in (z_inf - rho/4, z_inf - delta)."""
    zi = trace.z_infinity.real
    if x_samples is None:
        x_samples = np.linspace(zi - pipe.rho / 4, zi - delta, n_points + 1)[1:]
    x_samples = np.asarray(x_samples, dtype=float)
    sig = []
    lbs = []
    for x in x_samples:
        ch = pipe.chain(x, 0)
        sig.append(np.linalg.svd(ch.h[0], compute_uv=False)[-1])
    # spot check of H^(n)[x] >= E^(n)(x) - xi gamma_n at a point of [a_n, a_{n+1}),
    # where E^(n)(x) >= rho/2; entries are (n, x, min eig, E^(n)(x), xi gamma_n)
    for n, rec in enumerate(trace.levels[:-1]):
        d = abs(pipe.derivative(n, rec.z))
        x = rec.z.real - 0.6 * pipe.rho / d
        ch = pipe.chain(x, n)
        h = ch.h[-1]
        ev = np.linalg.eigvalsh(0.5 * (h + h.conj().T))
        gam = extract_diag(h, pipe.bases[n]).gamma_proxy_full
        lbs.append((n, float(x), float(ev[0]), float(e_of_z(h).real), float(pipe.cfg.xi * gam)))
    sig = np.array(sig)
    return GapReport(x_samples, sig, bool(np.all(sig > 0)), lbs)


@dataclass
class MonotonicityReport:
    per_level: list
    passed: bool


def monotonicity_check(pipe: Pipeline, trace: RGTrace, n_points: int = 5) -> MonotonicityReport:
    """Finite-difference d/dx E^(n)(x) at points of U_{n+1} on the real axis."""
    per = []
    ok = True
    for n, rec in enumerate(trace.levels):
        zn = rec.z.real
        d = abs(pipe.derivative(n, zn))
        half = pipe.cfg.u_threshold / d
        xs = zn + np.linspace(-0.9, 0.9, n_points) * half
        ds = [pipe.derivative(n, x).real for x in xs]
        per.append((n, xs.tolist(), ds))
        ok = ok and all(v < 0 for v in ds)
    return MonotonicityReport(per, ok)


@dataclass
class HfLimitReport:
    lambdas: np.ndarray
    residuals: np.ndarray
    cauchy: np.ndarray
    residuals_full: np.ndarray
    lambdas_full: np.ndarray
    sector: str = "faithful"

    def tail_ok(self, last: int = 3) -> bool:
        """Residuals non-increasing and Cauchy differences decreasing over the
        last ``last`` levels."""
        res = self.residuals[-last:]
        cau = self.cauchy[-(last - 1):]
        return bool(np.all(np.diff(res) <= 0) and np.all(np.diff(cau) < 0))


def _lambda_fit(h: np.ndarray, hf: np.ndarray):
    """argmin over lambda of ||h - lambda H_f||_F, and the minimum."""
    lam = complex(np.sum(hf * np.diag(h)) / np.sum(hf * hf))
    return lam, float(np.linalg.norm(h - lam * np.diag(hf)))


def hf_limit_check(pipe: Pipeline, trace: RGTrace, sector: str = "faithful") -> HfLimitReport:
    """lambda_n = argmin ||H^(n)(z_inf) - lambda H_f||_F per level.

    The primary fit is on the faithful sector (fewer than n_max bosons); the
    full-H_red fit is reported alongside.
    """
    if sector not in ("faithful", "full"):
        raise ValueError(f"unknown sector {sector!r}")
    lam, res, lam_f, res_f = [], [], [], []
    for n, h in enumerate(trace.chain.h):
        b = pipe.bases[n]
        l, r = _lambda_fit(h, b.red_hf)
        lam_f.append(l)
        res_f.append(r)
        keep = b.faithful_red
        if sector == "faithful" and keep.sum() >= 2:
            l, r = _lambda_fit(h[np.ix_(keep, keep)], b.red_hf[keep])
        lam.append(l)
        res.append(r)
    lam = np.array(lam)
    return HfLimitReport(lam, np.array(res), np.abs(np.diff(lam)), np.array(res_f),
                         np.array(lam_f), sector)
