"""Run configuration: a flat INI file with typed keys.

Every key has a default, so an empty file describes the spin-boson desk run.
Unknown sections or keys are rejected rather than ignored.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field

from .kernels import PolydiscParams
from .model import MODEL_CATALOG, ModelSpec
from .rgloop import RGConfig


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit code 2)."""


def _parse_complex(text: str) -> complex:
    return complex(text.replace(" ", ""))


def _parse_floats(text: str) -> list:
    return [float(t) for t in text.replace(",", " ").split()]


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "none", "default") else float(text)


# key -> (parser, default); order defines the canonical dump
SCHEMA = {
    "model": {
        "name": (str, "spin_boson"),
        "g": (float, 0.02),
        "s0": (_parse_complex, 0.1 + 0j),
        "mu": (float, 0.5),
        "uv_cutoff": (float, 1.0),
        "calibrate": (_parse_bool, True),
        "levels": (_parse_floats, [0.0, 1.0, 1.5]),
    },
    "grid": {
        "rho": (float, 0.25),
        "shells": (int, 8),
        "angular_nodes": (int, 2),
        "mode_budget": (int, 4096),
    },
    "fock": {
        "n_max": (int, 2),
        "dim_cap": (int, 20000),
    },
    "rg": {
        "rho": (_optional_float, None),
        "n_steps": (int, 6),
        "u_threshold": (_optional_float, None),
        "zero_tol": (float, 1e-12),
        "newton_max": (int, 40),
        "soft_u": (_parse_bool, True),
    },
    "polydisc": {
        "alpha0": (float, 0.03125),
        "beta0": (float, 0.03125),
        "gamma0": (float, 0.03125),
        "xi": (float, 0.125),
        "c_chi": (float, 1.0),
        "mode": (str, "empirical"),
    },
    "verify": {
        "oracle": (_parse_bool, True),
        "oracle_tol": (float, 1e-8),
        "oracle_g": (_optional_float, None),
        "contour_radius": (float, 0.02),
        "contour_points": (int, 16),
        "n_coords": (int, 5),
        "wick_l_max": (int, 2),
        "u_radius_s": (float, 0.02),
        "u_radius_z": (_optional_float, None),
        "counterexample_s": (_parse_floats, [-1.0, -0.5, -0.05, 0.0, 0.05, 0.5, 1.0]),
        "counterexample_h": (float, 0.05),
    },
    "output": {
        "directory": (str, "out"),
        "formats": (lambda t: [x.strip() for x in t.split(",") if x.strip()], ["json", "csv"]),
    },
}


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    fock: dict = field(default_factory=dict)
    rg: dict = field(default_factory=dict)
    polydisc: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def model_spec(self, g: float | None = None) -> ModelSpec:
        m = self.model
        s0 = m["s0"]
        kw = dict(g=m["g"] if g is None else g, mu=m["mu"], uv_cutoff=m["uv_cutoff"])
        if m["name"] == "spin_boson":
            return MODEL_CATALOG["spin_boson"](s0=s0.real if s0.imag == 0 else s0, **kw)
        return MODEL_CATALOG["dipole_toy"](s0=s0.real if s0.imag == 0 else s0,
                                           levels=tuple(m["levels"]), **kw)

    @property
    def s0(self):
        s0 = self.model["s0"]
        return s0.real if s0.imag == 0 else s0

    def rg_config(self) -> RGConfig:
        r = self.rg
        return RGConfig(rho=self.grid["rho"], n_steps=r["n_steps"], u_threshold=r["u_threshold"],
                        zero_tol=r["zero_tol"], newton_max=r["newton_max"],
                        c_chi=self.polydisc["c_chi"], soft_u=r["soft_u"])

    def polydisc_params(self) -> PolydiscParams:
        p = self.polydisc
        rho = self.grid["rho"]
        if p["mode"] == "paper-locked":
            return PolydiscParams.locked(p["alpha0"], p["beta0"], p["gamma0"], rho,
                                         self.model["mu"], p["c_chi"])
        return PolydiscParams(p["alpha0"], p["beta0"], p["gamma0"], rho, p["xi"],
                              self.model["mu"], p["c_chi"])

    def targets(self) -> tuple:
        p = self.polydisc_params()
        return (p.alpha, p.beta, p.gamma, p.xi, p.mu)

    def as_dict(self) -> dict:
        """JSON-ready resolved configuration."""
        out = {}
        for sec, vals in asdict(self).items():
            out[sec] = {k: ([v.real, v.imag] if isinstance(v, complex) else v)
                        for k, v in vals.items()}
        return out


def _validate(cfg: RunConfig) -> None:
    m, gr, fk, rg, pd = cfg.model, cfg.grid, cfg.fock, cfg.rg, cfg.polydisc
    if m["name"] not in MODEL_CATALOG:
        raise ConfigError(f"model.name must be one of {sorted(MODEL_CATALOG)}")
    if m["g"] < 0:
        raise ConfigError("model.g must be >= 0")
    if m["mu"] <= 0:
        raise ConfigError("model.mu must be > 0")
    if not 0 < gr["rho"] < 0.8:
        raise ConfigError("grid.rho must lie in (0, 4/5)")
    if rg["rho"] is not None and rg["rho"] != gr["rho"]:
        raise ConfigError("rg.rho must equal grid.rho")
    if gr["shells"] < 1 or gr["angular_nodes"] < 1:
        raise ConfigError("grid.shells and grid.angular_nodes must be positive")
    if gr["shells"] * gr["angular_nodes"] > gr["mode_budget"]:
        raise ConfigError("grid.shells * grid.angular_nodes exceeds grid.mode_budget")
    if rg["n_steps"] < 0:
        raise ConfigError("rg.n_steps must be >= 0")
    if rg["n_steps"] + 2 > gr["shells"]:
        raise ConfigError(f"insufficient shells: need shells >= n_steps + 2 "
                          f"({gr['shells']} < {rg['n_steps'] + 2})")
    if fk["n_max"] < 1:
        raise ConfigError("fock.n_max must be >= 1")
    if pd["mode"] not in ("empirical", "paper-locked"):
        raise ConfigError("polydisc.mode must be 'empirical' or 'paper-locked'")
    if pd["c_chi"] < 1:
        raise ConfigError("polydisc.c_chi must be >= 1")
    if cfg.verify["contour_points"] < 3 or cfg.verify["contour_radius"] <= 0:
        raise ConfigError("verify contour needs radius > 0 and at least 3 points")
    if not 0 <= cfg.verify["wick_l_max"] <= 3:
        raise ConfigError("verify.wick_l_max must lie in 0..3")
    bad = set(cfg.output["formats"]) - {"json", "csv"}
    if bad:
        raise ConfigError(f"unknown output formats {sorted(bad)}")


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    unknown = set(cp.sections()) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    cfg = RunConfig()
    for sec, keys in SCHEMA.items():
        vals = {}
        given = dict(cp[sec]) if cp.has_section(sec) else {}
        extra = set(given) - set(keys)
        if extra:
            raise ConfigError(f"unknown keys in [{sec}]: {sorted(extra)}")
        for key, (parser, default) in keys.items():
            if key in given:
                try:
                    vals[key] = parser(given[key])
                except ValueError as exc:
                    raise ConfigError(f"[{sec}] {key}: {exc}") from exc
            else:
                vals[key] = list(default) if isinstance(default, list) else default
        setattr(cfg, sec, vals)
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


def default_config() -> RunConfig:
    return parse_config("")


def dump_config(cfg: RunConfig) -> str:
    """Canonical INI text for ``cfg``."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for key in keys:
            v = getattr(cfg, sec)[key]
            if isinstance(v, bool):
                t = "true" if v else "false"
            elif isinstance(v, list):
                t = ", ".join(str(x) for x in v)
            elif isinstance(v, complex):
                t = repr(v.real) if v.imag == 0 else str(v).strip("()")
            elif v is None:
                t = "default"
            else:
                t = str(v)
            lines.append(f"{key} = {t}")
        lines.append("")
    return "\n".join(lines)

