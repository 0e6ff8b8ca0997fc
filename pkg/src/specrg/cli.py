"""Command line driver: hypothesis checks, the RG pipeline and the certificates.

Exit codes: 0 pass, 1 scientific failure, 2 usage or configuration error.
JSON reports are deterministic; wall-clock data goes to a ``.meta.json`` file
next to each report.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, default_config, load_config
from .fockgrid import build_fock, build_grid
from .kernels import parameter_ledger
from .model import _reference, calibrate_g, hypothesis_report, u_samples
from .rgloop import (Pipeline, e_recursion_samples, eigenvector, gap_check, hf_limit_check,
                     monotonicity_check, run)
from .verify import ContourSpec, analyticity_suite, counterexample_demo, direct_ground, overlap
from .wick import bound_check, compare_with_direct

SCHEMA_VERSION = 1
LEVELS_COLUMNS = ["level", "re_z", "im_z", "re_E", "im_E"]
TABLE_COLUMNS = ["s", "E", "box_half_width", "well_energy", "ground_in_zero_block"]


# -- serialization ----------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(np.real(x)), float(np.imag(x))]
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        x = float(x)
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def write_json(path: Path, payload: dict, meta: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")
    meta_path = path.with_name(path.stem + ".meta.json")
    meta_path.write_text(json.dumps(_jsonable(meta), sort_keys=True, indent=2) + "\n")


def _meta(command: str, started: float) -> dict:
    return {"command": command, "version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "elapsed_seconds": time.perf_counter() - started}


# -- shared setup -----------------------------------------------------------

class Context:
    """Resolved objects shared by the subcommands."""

    def __init__(self, cfg: RunConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = threads
        gr = cfg.grid
        self.grid = build_grid(gr["rho"], gr["shells"], gr["angular_nodes"],
                               mode_budget=gr["mode_budget"])
        self.basis = build_fock(self.grid, cfg.fock["n_max"], dim_cap=cfg.fock["dim_cap"])
        self._g = None

    @property
    def g(self) -> float:
        """Coupling used by the RG: the configured g, or the calibrated one."""
        if self._g is None:
            spec = self.cfg.model_spec()
            if self.cfg.model["calibrate"] and spec.g > 0:
                self._g = calibrate_g(spec, self.grid, self.basis, self.cfg.targets(),
                                      g_start=spec.g, n_steps=self.cfg.rg["n_steps"])
            else:
                self._g = spec.g
        return self._g

    def spec(self, g: float | None = None):
        return self.cfg.model_spec(self.g if g is None else g)

    def ledger(self) -> dict:
        p = self.cfg.polydisc_params()
        pd = self.cfg.polydisc
        led = parameter_ledger(p, pd["alpha0"], pd["beta0"], pd["gamma0"],
                               self.cfg.rg["n_steps"], strict=False)
        rgc = self.cfg.rg_config()
        return {"mode": pd["mode"], "rho": p.rho, "xi": p.xi, "mu": p.mu, "c_chi": p.c_chi,
                "c_beta": p.c_beta, "c_gamma": p.c_gamma, "alpha": led.alpha, "beta": led.beta,
                "gamma": led.gamma, "contraction": led.contraction,
                "z_constant": led.z_constant, "epsilon": led.epsilon,
                "admissible": led.admissible, "u_threshold": rgc.u_threshold,
                "rg_xi": rgc.xi, "rg_c_beta": rgc.c_beta}

    def header(self, command: str) -> dict:
        return {"schema_version": SCHEMA_VERSION, "command": command,
                "config": self.cfg.as_dict(), "ledger": self.ledger()}

    def pipeline(self, spec=None, s=None) -> Pipeline:
        gr = self.cfg.grid
        return Pipeline(spec or self.spec(), self.cfg.s0 if s is None else s, gr["rho"],
                        gr["shells"], gr["angular_nodes"], self.cfg.fock["n_max"],
                        self.cfg.rg_config())

    def out_dir(self, override: str | None) -> Path:
        d = Path(override or self.cfg.output["directory"])
        d.mkdir(parents=True, exist_ok=True)
        return d

    def u_samples(self, spec):
        rz = self.cfg.verify["u_radius_z"]
        return u_samples(spec, self.cfg.verify["u_radius_s"], self.cfg.grid["rho"] if rz is None else rz)


# ledger conditions that do not involve the unknown constant C_gamma; in
# empirical mode only these gate `check`
EMPIRICAL_GATES = ("beta0 <= rho/(8 C_chi)", "gamma0 <= rho/(8 C_chi)",
                   "alpha0 < rho/2", "rho < 4/5")


def _check_payload(ctx: Context):
    spec = ctx.spec()
    rep = hypothesis_report(spec, ctx.grid, ctx.u_samples(spec), ctx.basis)
    led = ctx.ledger()
    gates = led["admissible"]
    if led["mode"] == "empirical":
        gates = {k: v for k, v in gates.items() if k in EMPIRICAL_GATES}
    ledger_ok = all(gates.values())
    failures = list(rep.messages)
    failures += [f"ledger: {k} fails" for k, v in gates.items() if not v]
    payload = {"g": ctx.g, "hypotheses": rep.as_dict(), "ledger_gates": gates,
               "passed": bool(rep.passed and ledger_ok), "failures": failures}
    return payload


def cmd_check(ctx: Context, args) -> int:
    t0 = time.perf_counter()
    body = _check_payload(ctx)
    payload = {**ctx.header("check"), **body}
    write_json(ctx.out_dir(args.out) / "hypotheses.json", payload, _meta("check", t0))
    for msg in body["failures"]:
        print(msg, file=sys.stderr)
    return 0 if body["passed"] else 1


def cmd_run(ctx: Context, args) -> int:
    t0 = time.perf_counter()
    if not args.force:
        chk = _check_payload(ctx)
        if not chk["passed"]:
            for msg in chk["failures"]:
                print(msg, file=sys.stderr)
            print("check failed; use --force to run anyway", file=sys.stderr)
            return 1
    spec = ctx.spec()
    pipe = ctx.pipeline(spec)
    trace = run(pipe)
    failures = [f"level {r.level}: zero search did not converge ({r.reason})"
                for r in trace.levels if not r.converged]
    ev = eigenvector(pipe, trace)
    if ev.h_residual > 1e-6:
        failures.append(f"eigenvector residual {ev.h_residual:.3g} > 1e-6")
    if ev.flag:
        failures.append(ev.flag)
    real_s = np.imag(pipe.s) == 0
    gap = mono = None
    if real_s:
        gap = gap_check(pipe, trace)
        if not gap.clean:
            failures.append("gap window contains a singular H^(0)[x]")
        mono = monotonicity_check(pipe, trace)
        if not mono.passed:
            bad = [n for n, _, ds in mono.per_level if not all(v < 0 for v in ds)]
            failures.append(f"d/dx E^(n) >= 0 at levels {bad}")
    hfl = hf_limit_check(pipe, trace)
    samples = e_recursion_samples(pipe, trace)
    oracle = None
    if ctx.cfg.verify["oracle"] and real_s:
        e_min, vec = direct_ground(spec, float(np.real(pipe.s)), pipe.basis0)
        oracle = {"e_min": e_min, "abs_error": abs(trace.z_infinity - e_min),
                  "overlap": overlap(ev.psi, vec)}
    payload = {
        **ctx.header("run"), "g": ctx.g, "s": pipe.s, "e_at": trace.e_at,
        "z_infinity": trace.z_infinity, "error_bar": trace.error_bar,
        "levels": [asdict(r) for r in trace.levels],
        "eigenvector": {"h_residual": ev.h_residual, "h0_residual": ev.h0_residual,
                        "increments": ev.increments, "tail_bounds": ev.tail_bounds,
                        "step1_constant": ev.step1_constant, "flag": ev.flag,
                        "phi0_norm": float(np.linalg.norm(ev.phi0))},
        "gap": None if gap is None else {"x": gap.x, "sigma_min": gap.sigma_min,
                                         "clean": gap.clean, "lower_bounds": gap.lower_bounds},
        "monotonicity": None if mono is None else {"per_level": mono.per_level,
                                                   "passed": mono.passed},
        "hf_limit": {"sector": hfl.sector, "lambdas": hfl.lambdas, "residuals": hfl.residuals,
                     "cauchy": hfl.cauchy, "residuals_full": hfl.residuals_full,
                     "lambdas_full": hfl.lambdas_full, "tail_ok": hfl.tail_ok()},
        "e_recursion_samples": [{"level": n, "z": z, "residual": r, "alpha_empirical": a}
                                for n, z, r, a in samples],
        "oracle": oracle, "failures": failures, "passed": not failures,
    }
    out = ctx.out_dir(args.out)
    fmts = ctx.cfg.output["formats"]
    if "json" in fmts:
        write_json(out / "trace.json", payload, _meta("run", t0))
    if "csv" in fmts:
        with open(out / "levels.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(LEVELS_COLUMNS)
            for r in trace.levels:
                wr.writerow([r.level, repr(r.z.real), repr(r.z.imag),
                             repr(r.e_value.real), repr(r.e_value.imag)])
            zi = trace.z_infinity
            for r in trace.levels:
                wr.writerow([r.level, repr(zi.real), repr(zi.imag),
                             repr(r.e_at_z_inf.real), repr(r.e_at_z_inf.imag)])
    for msg in failures:
        print(msg, file=sys.stderr)
    return 0 if not failures else 1


def cmd_wick(ctx: Context, args) -> int:
    """The Wick comparison uses the configured g (not the calibrated one):
    the g^3 scaling needs a residual well above roundoff."""
    t0 = time.perf_counter()
    spec = ctx.cfg.model_spec()
    L = ctx.cfg.verify["wick_l_max"]
    e0, _, _ = _reference(spec)
    s = ctx.cfg.s0
    cmp = compare_with_direct(spec, s, e0, L, ctx.basis, scaling=spec.g > 0)
    samples = ctx.u_samples(spec)[:5]
    bnd = bound_check(spec, samples, max(L, 1), ctx.basis)
    failures = []
    if spec.g == 0 and cmp.residual > 1e-12:
        failures.append(f"residual {cmp.residual:.3g} at g = 0")
    if cmp.ratio_ok is False:
        failures.append(f"residual ratio {cmp.ratio:.4g} outside "
                        f"[{cmp.expected_ratio / 1.3:.4g}, {cmp.expected_ratio * 1.3:.4g}]")
    if not bnd.passed:
        failures.append("kernel or field bound violated")
    payload = {**ctx.header("wick"), "g": spec.g, "s": s, "z": e0,
               "comparison": asdict(cmp), "bounds": {**asdict(bnd), "passed": bnd.passed},
               "failures": failures, "passed": not failures}
    write_json(ctx.out_dir(args.out) / "wick.json", payload, _meta("wick", t0))
    for msg in failures:
        print(msg, file=sys.stderr)
    return 0 if not failures else 1


def cmd_analyticity(ctx: Context, args) -> int:
    t0 = time.perf_counter()
    v = ctx.cfg.verify
    gr = ctx.cfg.grid
    contour = ContourSpec(ctx.cfg.s0, v["contour_radius"], v["contour_points"])
    rep = analyticity_suite(ctx.spec(), contour, gr["rho"], gr["shells"], gr["angular_nodes"],
                            ctx.cfg.fock["n_max"], cfg=ctx.cfg.rg_config(),
                            n_coords=v["n_coords"], threads=ctx.threads)
    ok = rep.passed()
    failures = list(rep.failures)
    if not ok and not failures:
        failures.append(f"loop {rep.max_loop:.3g}, conjugation {rep.conj_error:.3g}, "
                        f"Cauchy-Riemann {rep.cr_residual:.3g}")
    payload = {**ctx.header("analyticity"), "g": ctx.g,
               "contour": {"center": contour.center, "radius": contour.radius,
                           "points": contour.points, "nodes": contour.nodes},
               "z_values": rep.z_values, "z_loop": rep.z_loop,
               "phi_indices": rep.phi_indices, "phi_loops": rep.phi_loops,
               "psi_indices": rep.psi_indices, "psi_loops": rep.psi_loops,
               "max_loop": rep.max_loop, "cauchy_riemann_residual": rep.cr_residual,
               "cauchy_riemann_scale": rep.cr_scale, "conjugation_error": rep.conj_error,
               "failures": failures, "passed": ok}
    write_json(ctx.out_dir(args.out) / "contour.json", payload, _meta("analyticity", t0))
    for msg in failures:
        print(msg, file=sys.stderr)
    return 0 if ok else 1


def cmd_demo_counterexample(ctx: Context, args) -> int:
    t0 = time.perf_counter()
    v = ctx.cfg.verify
    rep = counterexample_demo(v["counterexample_s"], h=v["counterexample_h"])
    out = ctx.out_dir(args.out)
    with open(out / "table.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TABLE_COLUMNS)
        for r in rep.rows:
            wr.writerow([repr(r.s), repr(r.energy), repr(r.half_width), repr(r.well_energy),
                         int(r.ground_in_zero_block)])
    failures = []
    for r in rep.rows:
        if r.s > 0 and abs(r.energy) > 1e-6:
            failures.append(f"E({r.s}) = {r.energy:.3g} is not 0")
        if r.s < 0 and abs(r.s) >= 0.5 and r.energy > -1e-3:
            failures.append(f"E({r.s}) = {r.energy:.3g} is not negative")
    if rep.overlap_across_zero >= 0.5:
        failures.append(f"overlap across s = 0 is {rep.overlap_across_zero:.3g}")
    summary = {**ctx.header("demo-counterexample"), "rows": [asdict(r) for r in rep.rows],
               "overlap_across_zero": rep.overlap_across_zero,
               "second_difference_left": rep.second_derivative_left,
               "second_difference_right": rep.second_derivative_right,
               "failures": failures, "passed": not failures}
    write_json(out / "table.summary.json", summary, _meta("demo-counterexample", t0))
    for msg in failures:
        print(msg, file=sys.stderr)
    return 0 if not failures else 1


def cmd_oracle(ctx: Context, args) -> int:
    t0 = time.perf_counter()
    s = ctx.cfg.s0
    if np.imag(s) != 0:
        raise ConfigError("the dense oracle needs a real model.s0")
    spec = ctx.spec()
    t_rg = time.perf_counter()
    pipe = ctx.pipeline(spec)
    trace = run(pipe)
    ev = eigenvector(pipe, trace)
    t_rg = time.perf_counter() - t_rg
    g_or = ctx.cfg.verify["oracle_g"]
    e_min, vec = direct_ground(spec, float(s), pipe.basis0, g=g_or)
    err = abs(trace.z_infinity - e_min)
    tol = ctx.cfg.verify["oracle_tol"] * (1 + abs(e_min))
    ov = overlap(ev.psi, vec)
    failures = []
    if err > tol:
        failures.append(f"|z_inf - E_min| = {err:.3g} > {tol:.3g}")
    payload = {**ctx.header("oracle"), "g": ctx.g, "oracle_g": ctx.g if g_or is None else g_or,
               "s": s, "z_infinity": trace.z_infinity, "e_min": e_min, "abs_error": err,
               "tolerance": tol, "overlap": ov, "eigen_residual": ev.h_residual,
               "failures": failures, "passed": not failures}
    meta = _meta("oracle", t0)
    meta["rg_seconds"] = t_rg
    write_json(ctx.out_dir(args.out) / "oracle.json", payload, meta)
    for msg in failures:
        print(msg, file=sys.stderr)
    return 0 if not failures else 1


COMMANDS = {
    "check": cmd_check,
    "run": cmd_run,
    "wick": cmd_wick,
    "analyticity": cmd_analyticity,
    "demo-counterexample": cmd_demo_counterexample,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="specrg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="INI configuration (defaults if omitted)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides [output])")
        p.add_argument("--threads", type=int, default=1, metavar="N")
        p.add_argument("--force", action="store_true", help="run even if check fails")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config) if args.config else default_config()
        try:
            ctx = Context(cfg, threads=args.threads)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return COMMANDS[args.command](ctx, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # pipeline refusals (pair failure, leakage, singular blocks)
        if "insufficient shells" in str(exc):
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
