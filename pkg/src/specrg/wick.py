"""Normal-ordered expansion of the level-0 effective Hamiltonian in powers of g.

Every term of <chi_1 (W F)^(L-1) W chi_1>_at is labelled by flags
(m, p, n, q) per slot: a free creation, a contracted creation, a free
annihilation or a contracted annihilation. Contracted operators stay inside a
vacuum expectation that we evaluate as a matrix product on a small truncated
atom (x) Fock space, which is exact once it holds L // 2 bosons.

Pull-through bookkeeping: a free creation at slot i passes every F to its
left, and a free annihilation at slot i passes every F to its right, so the
F after slot l is evaluated at r + r_l with

    r_l = sum_{i > l, m_i = 1} |k_i| + sum_{i <= l, n_i = 1} |k~_i|.

The left cutoff is evaluated at r + r_0 (all creations) and the right one at
r + r_L (all annihilations).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .feshbach import chi_derivative_bound, chi_pair
from .fockgrid import FockBasis, build_fock, creation_field, omega_norm, mu_norm
from .kernels import ORDER_CAP, KernelSequence, default_r_grid, op_from_kernels, symmetrize
from .model import ModelSpec, Q_GRID, atomic_projection, initial_effective

ROLES = "mpnq"
L_MAX_CAP = 3


@dataclass(frozen=True)
class ContractionTuple:
    flags: tuple  # one of "m", "p", "n", "q" per slot

    def __post_init__(self):
        if any(f not in ROLES for f in self.flags):
            raise ValueError(f"invalid flags {self.flags}")

    @property
    def L(self) -> int:
        return len(self.flags)

    @property
    def M(self) -> int:
        return self.flags.count("m")

    @property
    def N(self) -> int:
        return self.flags.count("n")

    @property
    def contracted(self) -> int:
        return self.flags.count("p") + self.flags.count("q")

    def as_bits(self) -> tuple:
        """(m_l, p_l, n_l, q_l) per slot."""
        return tuple(tuple(int(f == c) for c in ROLES) for f in self.flags)

    def shift(self, l: int, k_m, k_n) -> np.ndarray:
        """r_l for external momenta; ``k_m``/``k_n`` are arrays (..., M)/(..., N)
        listed in slot order."""
        im, i_n = 0, 0
        k_m, k_n = np.asarray(k_m, dtype=float), np.asarray(k_n, dtype=float)
        out = np.zeros(k_m.shape[:-1])
        for i, f in enumerate(self.flags, start=1):
            if f == "m":
                if i > l:
                    out = out + k_m[..., im]
                im += 1
            elif f == "n":
                if i <= l:
                    out = out + k_n[..., i_n]
                i_n += 1
        return np.asarray(out, dtype=float)


def enumerate_tuples(L: int, M: int | None = None, N: int | None = None) -> list:
    """Tuples of I_L with |m| = M and |n| = N (all of I_L when both are None)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if M is not None and N is not None and L < max(1, M + N):
        raise ValueError("L must be >= M + N")
    out = []
    for flags in itertools.product(ROLES, repeat=L):
        t = ContractionTuple(flags)
        if (M is None or t.M == M) and (N is None or t.N == N):
            out.append(t)
    return out


# -- the resolvent profile F ------------------------------------------------

class ResolventProfile:
    """F(t) = boldchibar^2(t) / (H_at(s) - z + t), diagonal in the eigenbasis of H_at."""

    def __init__(self, spec: ModelSpec, s: complex, z: complex):
        self.spec = spec
        self.s = s
        self.z = z
        self.atomic = atomic_projection(spec, s)
        ev, V = np.linalg.eig(spec.h_at(s))
        self.tracked = int(np.argmin(np.abs(ev - self.atomic.e_at)))
        self.ev = ev
        self.V = V
        self.Vinv = np.linalg.inv(V)

    def _check(self, t):
        t = np.asarray(t, dtype=float).reshape(-1)
        den = self.ev[None, :] - self.z + t[:, None]
        # the tracked level is cut off by chibar_1^2, which vanishes on [0, 3/4]
        killed = chi_pair(t, 1.0)[1] == 0
        den[killed, self.tracked] = 1.0
        if np.any(np.abs(den) < 1e-14):
            raise ValueError("atomic resolvent singular at a required z - r")
        return den

    def eigen_factors(self, t) -> np.ndarray:
        """Diagonal factors of F(t) in the H_at eigenbasis, shape (len(t), d)."""
        t = np.asarray(t, dtype=float).reshape(-1)
        den = self._check(t)
        num = np.ones_like(den)
        num[:, self.tracked] = chi_pair(t, 1.0)[1] ** 2
        return num / den

    def eigen_factors_deriv(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1)
        den = self._check(t)
        out = -1.0 / den ** 2
        cb2 = chi_pair(t, 1.0)[1] ** 2
        h = 1e-7
        dcb2 = (chi_pair(t + h, 1.0)[1] ** 2 - chi_pair(np.maximum(t - h, 0.0), 1.0)[1] ** 2) \
            / (t + h - np.maximum(t - h, 0.0))
        out[:, self.tracked] = -cb2 / den[:, self.tracked] ** 2 + dcb2 / den[:, self.tracked]
        return out

    def matrix(self, t: float) -> np.ndarray:
        f = self.eigen_factors([t])[0]
        return (self.V * f[None, :]) @ self.Vinv

    def deriv_matrix(self, t: float) -> np.ndarray:
        f = self.eigen_factors_deriv([t])[0]
        return (self.V * f[None, :]) @ self.Vinv

    def constants(self, t_extra=()) -> tuple:
        """(C_0, C_1) = sup_t (t + 1) ||F(t)|| and sup_t (t + 1) ||F'(t)||.

        For fixed t = q + r the weight q + 1 is largest at q = t, so a sup over t
        alone covers every (q, r) pair.
        """
        ts = np.union1d(np.concatenate([Q_GRID, np.linspace(0, 2, 401)]), np.asarray(t_extra, float))
        c0 = max((t + 1) * np.linalg.norm(self.matrix(t), 2) for t in ts)
        c1 = max((t + 1) * np.linalg.norm(self.deriv_matrix(t), 2) for t in ts)
        return float(c0), float(c1)


def resolvent_profile(spec: ModelSpec, s: complex, z: complex, r, basis: FockBasis) -> np.ndarray:
    """F(H_f + r) as a stack of atom matrices, one per Fock state."""
    prof = ResolventProfile(spec, s, z)
    return np.array([prof.matrix(t) for t in basis.hf_eigenvalues + r])


# -- evaluation of V --------------------------------------------------------

class _ContractionSpace:
    """Small atom (x) Fock space carrying the contracted operators."""

    def __init__(self, spec: ModelSpec, s: complex, z: complex, grid, L: int):
        self.prof = ResolventProfile(spec, s, z)
        self.fock = build_fock(grid, max(1, L // 2))
        self.d = spec.atom_dim
        cre = spec.coupling_values(s, grid)
        ann = np.conj(np.swapaxes(spec.coupling_values(np.conj(s), grid), 1, 2))
        self.g_cre = cre          # atom factor of a free creation
        self.g_ann = ann          # atom factor of a free annihilation
        a_star = creation_field(self.fock, cre)
        a_ann = creation_field(self.fock, spec.coupling_values(np.conj(s), grid)).conj().T
        # act in the eigenbasis of H_at so F is diagonal
        D = self.fock.dim
        big_v = np.kron(self.prof.V, np.eye(D))
        big_vi = np.kron(self.prof.Vinv, np.eye(D))
        self.p_op = big_vi @ a_star @ big_v
        self.q_op = big_vi @ a_ann @ big_v
        self.cre_e = np.einsum("ab,mbc,cd->mad", self.prof.Vinv, cre, self.prof.V)
        self.ann_e = np.einsum("ab,mbc,cd->mad", self.prof.Vinv, ann, self.prof.V)
        at = self.prof.atomic
        self.left = at.left_vector.conj() @ self.prof.V      # l^H in eigen coordinates
        self.right = self.prof.Vinv @ at.right_vector
        self.hf = self.fock.hf_eigenvalues

    def evaluate(self, tup: ContractionTuple, r: np.ndarray, k_m: np.ndarray, k_n: np.ndarray,
                 modes_m: np.ndarray, modes_n: np.ndarray, deriv_slot: int | None = None):
        """V for a batch: r (B,), external |k| (B, M)/(B, N) and mode labels.

        With ``deriv_slot`` = j the j-th F is replaced by F' and the outer
        cutoffs are kept; this is one term of the product rule.
        """
        B = r.shape[0]
        d, D = self.d, self.fock.dim
        v = np.zeros((B, d, D), dtype=complex)
        v[:, :, 0] = self.right[None, :]
        im, i_n = tup.M, tup.N
        for l in range(tup.L, 0, -1):
            f = tup.flags[l - 1]
            if l < tup.L:
                t = (r + tup.shift(l, k_m, k_n))[:, None] + self.hf[None, :]
                fac = (self.prof.eigen_factors_deriv if deriv_slot == l
                       else self.prof.eigen_factors)(t.reshape(-1))
                v = v * fac.reshape(B, D, d).transpose(0, 2, 1)
            if f == "m":
                im -= 1
                v = np.einsum("bij,bjf->bif", self.cre_e[modes_m[:, im]], v)
            elif f == "n":
                i_n -= 1
                v = np.einsum("bij,bjf->bif", self.ann_e[modes_n[:, i_n]], v)
            else:
                op = self.p_op if f == "p" else self.q_op
                v = (v.reshape(B, d * D) @ op.T).reshape(B, d, D)
        val = np.einsum("i,bi->b", self.left, v[:, :, 0])
        c0 = chi_pair(r + tup.shift(0, k_m, k_n), 1.0)[0]
        cL = chi_pair(r + tup.shift(tup.L, k_m, k_n), 1.0)[0]
        return c0 * cL * val


def _assignments(n_modes: int, count: int) -> np.ndarray:
    if count == 0:
        return np.zeros((1, 0), dtype=int)
    return np.array(list(itertools.product(range(n_modes), repeat=count)), dtype=int)


def kernel_V(spec: ModelSpec, s: complex, z: complex, tup: ContractionTuple, r, modes,
             grid) -> complex:
    """V_{m,p,n,q}(r, k_m, k~_n) for one external mode assignment.

    ``modes`` lists the grid modes of the free slots in slot order.
    """
    modes = list(modes)
    free = [f for f in tup.flags if f in "mn"]
    if len(modes) != len(free):
        raise ValueError("one mode per free slot is required")
    mm = np.array([[m for m, f in zip(modes, free) if f == "m"]], dtype=int).reshape(1, -1)
    nn = np.array([[m for m, f in zip(modes, free) if f == "n"]], dtype=int).reshape(1, -1)
    cs = _ContractionSpace(spec, s, z, grid, tup.L)
    k = grid.k_abs
    return complex(cs.evaluate(tup, np.array([float(r)]), k[mm], k[nn], mm, nn)[0])


@dataclass
class WickKernels:
    L_max: int
    g: float
    kernels: KernelSequence
    raw: dict = field(default_factory=dict)       # (M, N) -> unsymmetrized sums
    per_order: dict = field(default_factory=dict)  # (L, M, N) -> g^L-scaled contribution

    @property
    def w00(self) -> np.ndarray:
        return self.kernels.w00

    @property
    def wmn(self) -> dict:
        return self.kernels.wmn


def _tuple_sum(cs: _ContractionSpace, tuples, r_grid, grid, M: int, N: int):
    """sum over tuples of V(r, sigma_m(k^(M)), sigma_n(k~^(N))): shape (R,) + (Mmodes,)*(M+N)."""
    nm = grid.n_modes
    k = grid.k_abs
    ext = _assignments(nm, M + N)
    R = len(r_grid)
    out = np.zeros((R, len(ext)), dtype=complex)
    rr = np.repeat(r_grid, len(ext))
    em = np.tile(ext[:, :M], (R, 1))
    en = np.tile(ext[:, M:], (R, 1))
    for tup in tuples:
        out += cs.evaluate(tup, rr, k[em], k[en], em, en).reshape(R, len(ext))
    return out.reshape((R,) + (nm,) * (M + N))


def assemble_w(spec: ModelSpec, s: complex, z: complex, L_max: int, basis: FockBasis,
               r_grid=None) -> WickKernels:
    """Kernels of H^(0)[s, z] to order g^L_max, sampled on ``r_grid``.

    Only kernels with M + N <= ORDER_CAP are assembled; higher ones start at
    order g^3 and are outside the operator cap of the kernels module.
    """
    if not 1 <= L_max <= L_MAX_CAP:
        raise ValueError(f"L_max must lie in 1..{L_MAX_CAP}")
    grid = basis.grid
    r = default_r_grid(basis) if r_grid is None else np.asarray(r_grid, dtype=float)
    g = spec.g
    at = atomic_projection(spec, s)
    w00 = (at.e_at - z + r).astype(complex)
    wmn = {}
    per_order = {}
    raw = {}
    spaces = {}
    for L in range(1, L_max + 1):
        pref = (-1) ** (L - 1) * g ** L
        if pref == 0:
            continue
        cs = spaces.setdefault(L, _ContractionSpace(spec, s, z, grid, L))
        for M in range(L + 1):
            for N in range(L + 1 - M):
                if M + N > ORDER_CAP:
                    continue
                tuples = enumerate_tuples(L, M, N)
                if not tuples:
                    continue
                contrib = pref * _tuple_sum(cs, tuples, r, grid, M, N)
                per_order[(L, M, N)] = contrib
                if M + N == 0:
                    w00 = w00 + contrib
                else:
                    raw[(M, N)] = raw.get((M, N), 0) + contrib
    for (M, N), arr in raw.items():
        wmn[(M, N)] = symmetrize(arr, M, N)
    ks = KernelSequence(r, w00, grid.weights.copy(), grid.k_abs.copy(), wmn, mu=spec.mu)
    return WickKernels(L_max, g, ks, raw, per_order)


# -- comparison with the direct reduction ------------------------------------

@dataclass
class WickComparison:
    L_max: int
    g: float
    residual: float
    residual_half: float | None = None
    ratio: float | None = None
    expected_ratio: float | None = None
    ratio_ok: bool | None = None


def _direct_h0(spec: ModelSpec, s, z, basis: FockBasis) -> np.ndarray:
    """H^(0) on H_red of ``basis`` computed with one extra boson allowed, so
    that states at the cutoff keep their emission paths to the order compared."""
    big = build_fock(basis.grid, basis.n_max + 1, dim_cap=max(4 * basis.dim, 20000))
    hb = initial_effective(spec, s, z, big)
    pos = {int(b): p for p, b in enumerate(big.red_index)}
    idx = [pos[big.index[basis.states[i]]] for i in basis.red_index]
    return hb[np.ix_(idx, idx)]


def wick_residual(spec: ModelSpec, s, z, L_max: int, basis: FockBasis) -> float:
    wk = assemble_w(spec, s, z, L_max, basis)
    h_w = op_from_kernels(wk.kernels, basis)
    return float(np.linalg.norm(h_w - _direct_h0(spec, s, z, basis), 2))


def compare_with_direct(spec: ModelSpec, s, z, L_max: int, basis: FockBasis,
                        scaling: bool = True, z_shift_with_g: bool = False) -> WickComparison:
    """||H(w^{L <= L_max}) - H^(0)[s, z]|| and its ratio under g -> g/2.

    The ratio target is 2**(L_max + 1) within a factor 1.3.
    """
    res = wick_residual(spec, s, z, L_max, basis)
    out = WickComparison(L_max, spec.g, res)
    if scaling and spec.g != 0:
        half = wick_residual(spec.with_g(spec.g / 2), s, z, L_max, basis)
        out.residual_half = half
        out.expected_ratio = 2.0 ** (L_max + 1)
        out.ratio = res / half if half > 0 else np.inf
        out.ratio_ok = out.expected_ratio / 1.3 <= out.ratio <= out.expected_ratio * 1.3
    return out


# -- bound checks -----------------------------------------------------------

@dataclass
class BoundReport:
    c0: float
    c1: float
    c_at: float
    g_omega: float
    g_mu: float
    n_checked: int
    v1_worst: float          # max of |V| / rhs over evaluated kernels
    v2_worst: float
    field_bound_lhs: float
    field_bound_rhs: float
    annihilation_lhs: float

    @property
    def passed(self) -> bool:
        return (self.v1_worst <= 1.0 and self.v2_worst <= 1.0
                and self.field_bound_lhs <= self.field_bound_rhs + 1e-12
                and self.annihilation_lhs <= self.field_bound_rhs + 1e-12)


def field_bound(spec: ModelSpec, s, basis: FockBasis) -> tuple:
    """(||a*(G)(H_f+1)^(-1/2)||, ||a(G)(H_f+1)^(-1/2)||, ||G||_omega) on the
    truncated space, G = G_s."""
    vals = spec.coupling_values(s, basis.grid)
    cr = creation_field(basis, vals)
    d = spec.atom_dim
    w = np.kron(np.ones(d), 1.0 / np.sqrt(basis.hf_eigenvalues + 1.0))
    lhs = float(np.linalg.norm(cr * w[None, :], 2))
    ann = float(np.linalg.norm(cr.conj().T * w[None, :], 2))
    return lhs, ann, omega_norm(basis.grid, vals)


def bound_check(spec: ModelSpec, samples, L_max: int, basis: FockBasis,
                r_points: int = 5, deriv_h: float = 1e-6) -> BoundReport:
    """(V1) and (V2) for every tuple with L <= L_max at every mode assignment,
    plus the field-operator bound.

    C_0, C_1 and C_at are sups over the (s, z) samples; ||G||_omega and the
    per-mode ||G(k)|| use the sample with the largest |s|.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("bound_check needs at least one (s, z) sample")
    grid = basis.grid
    k = grid.k_abs
    chi_d = chi_derivative_bound()
    c0 = c1 = c_at = 0.0
    for s, z in samples:
        prof = ResolventProfile(spec, s, z)
        a, b = prof.constants()
        c0, c1 = max(c0, a), max(c1, b)
        c_at = max(c_at, float(np.linalg.norm(prof.atomic.p_at, 2)))
    s_big = max((s for s, _ in samples), key=abs)
    g_om = max(omega_norm(grid, spec.coupling_values(s, grid)) for s, _ in samples)
    g_mu = max(mu_norm(grid, spec.coupling_values(s, grid), spec.mu) for s, _ in samples)
    r = np.linspace(0.0, 1.0, r_points)
    worst1 = worst2 = 0.0
    n = 0
    for s, z in samples:
        per_mode_c = np.array([np.linalg.norm(v, 2) for v in spec.coupling_values(s, grid)])
        per_mode_a = np.array([np.linalg.norm(v, 2)
                               for v in spec.coupling_values(np.conj(s), grid)])
        for L in range(1, L_max + 1):
            cs = _ContractionSpace(spec, s, z, grid, L)
            for tup in enumerate_tuples(L):
                M, N = tup.M, tup.N
                ext = _assignments(grid.n_modes, M + N)
                rr = np.repeat(r, len(ext))
                em = np.tile(ext[:, :M], (len(r), 1))
                en = np.tile(ext[:, M:], (len(r), 1))
                v = cs.evaluate(tup, rr, k[em], k[en], em, en)
                vp = cs.evaluate(tup, rr + deriv_h, k[em], k[en], em, en)
                vm = cs.evaluate(tup, np.maximum(rr - deriv_h, 0.0), k[em], k[en], em, en)
                dv = (vp - vm) / (rr + deriv_h - np.maximum(rr - deriv_h, 0.0))
                ext_norm = np.prod(per_mode_c[em], axis=1) * np.prod(per_mode_a[en], axis=1)
                base = ext_norm * g_om ** tup.contracted * c_at
                rhs1 = base * c0 ** (L - 1)
                rhs2 = base * c0 ** (L - 2) * (2 * chi_d * c0 + (L - 1) * c1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    q1 = np.where(rhs1 > 0, np.abs(v) / rhs1, np.where(np.abs(v) > 0, np.inf, 0.0))
                    q2 = np.where(rhs2 > 0, np.abs(dv) / rhs2, np.where(np.abs(dv) > 1e-12, np.inf, 0.0))
                worst1 = max(worst1, float(np.max(q1)))
                worst2 = max(worst2, float(np.max(q2)))
                n += v.size
    lhs, ann, rhs = field_bound(spec, s_big, basis)
    return BoundReport(c0, c1, c_at, g_om, g_mu, n, worst1, worst2, lhs, rhs, ann)
