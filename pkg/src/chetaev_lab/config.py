"""Scenario configuration: INI text in, validated :class:`ScenarioConfig` out.

Every key has a type and a default; unknown sections or keys are errors, and
all errors are collected before reporting.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from typing import Any, Callable

from .actions import ACTION_KINDS
from .dynamics import CRANK_NICOLSON, SCHEMES, SPLIT_STEP
from .grid import BOX, PERIODIC, grid_errors

POTENTIALS = ("harmonic", "free", "inverted_harmonic", "box_well", "linear")
FAMILIES = ("gaussian", "eigenstate", "stationary", "coherent", "free_gaussian", "plane_wave")
OPERATIONS = (
    "spectrum", "box_artifact", "quantum_potential", "energy_balance", "continuity", "qhj",
    "velocity", "trajectories", "equivariance", "moments", "uncertainty", "perturbation_action",
    "chetaev_psi", "dispersion", "plane_wave_exact", "norm", "classical_flow", "variational",
    "poincare", "exponents", "action_L", "reduced_variational", "exp_integral", "sweep_width",
)
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Carries every problem found in one pass."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


# -- value parsers ------------------------------------------------------------

def _float(s: str) -> float:
    v = float(s)
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError("must be finite")
    return v


def _int(s: str) -> int:
    return int(s)


def _str(s: str) -> str:
    return s.strip()


def _list(item: Callable) -> Callable:
    def parse(s: str) -> tuple:
        parts = [p.strip() for p in s.split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        return tuple(item(p) for p in parts)
    return parse


def _fmt(v: Any) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _positive(v):
    return None if all(x > 0 for x in (v if isinstance(v, tuple) else (v,))) else "must be positive"


def _nonneg(v):
    return None if all(x >= 0 for x in (v if isinstance(v, tuple) else (v,))) else "must be non-negative"


def _choice(options):
    def check(v):
        vals = v if isinstance(v, tuple) else (v,)
        bad = [x for x in vals if x not in options]
        return None if not bad else f"{', '.join(map(str, bad))} not in {{{', '.join(options)}}}"
    return check


def _fraction(v):
    return None if 0 < v <= 1 else "must lie in (0, 1]"


# section -> key -> (parser, default, check)
SCHEMA: dict[str, dict[str, tuple]] = {
    "system": {
        "potential": (_str, "harmonic", _choice(POTENTIALS)),
        "omega": (_float, 1.0, _positive),
        "force": (_float, 0.0, None),
        "mass": (_list(_float), (1.0,), _positive),
        "hbar": (_float, 1.0, _positive),
    },
    "grid": {
        "dim": (_int, 1, _choice((1, 2))),
        "lower": (_list(_float), (-10.0,), None),
        "upper": (_list(_float), (10.0,), None),
        "points": (_list(_int), (256,), None),
        "boundary": (_str, PERIODIC, _choice((PERIODIC, BOX))),
    },
    "initial": {
        "family": (_str, "gaussian", _choice(FAMILIES)),
        "width": (_list(_float), (1.0,), _positive),
        "center": (_list(_float), (0.0,), None),
        "momentum": (_list(_float), (0.0,), None),
        "amplitude": (_float, 1.0, None),
        "index": (_list(_int), (0,), _nonneg),
        "mode": (_list(_int), (1,), None),
        "q0": (_list(_float), (0.0,), None),
        "p0": (_list(_float), (0.0,), None),
        "t0": (_float, 0.0, None),
    },
    "evolution": {
        "scheme": (_str, "auto", _choice(("auto",) + SCHEMES)),
        "dt": (_float, 0.01, _positive),
        "t_final": (_float, 0.0, _nonneg),
        "store_every": (_int, 1, _positive),
        "classical_dt": (_float, 0.01, _positive),
        "classical_t_final": (_float, 0.0, _nonneg),
    },
    "analysis": {
        "operations": (_list(_str), ("quantum_potential", "moments"), _choice(OPERATIONS)),
        "n_states": (_int, 3, _positive),
        "n_traj": (_int, 1000, _positive),
        "seed": (_int, 0, _nonneg),
        "fit_window": (_float, 0.5, _fraction),
        "core_mass": (_float, 0.8, _fraction),
        "action": (_str, "plane", _choice(ACTION_KINDS)),
        "action_param": (_float, 1.0, None),
        "sweep_widths": (_list(_float), (0.5, 0.75, 1.0, 1.5, 2.0), _positive),
        "tol_spectrum": (_float, 1e-4, _positive),
        "tol_stationary": (_float, 1e-5, _positive),
        "tol_energy_balance": (_float, 1e-4, _positive),
        "tol_continuity": (_float, 1e-3, _positive),
        "tol_qhj": (_float, 1e-3, _positive),
        "tol_equivariance": (_float, 0.05, _positive),
        "tol_trajectory": (_float, 1e-3, _positive),
        "tol_uncertainty": (_float, 1e-6, _positive),
        "tol_dispersion": (_float, 1e-3, _positive),
        "tol_norm": (_float, 1e-8, _positive),
        "tol_chetaev": (_float, 1e-6, _positive),
        "tol_action": (_float, 1e-5, _positive),
        "tol_poincare": (_float, 1e-8, _positive),
        "tol_exponent": (_float, 1e-3, _positive),
    },
    "output": {
        "directory": (_str, "", None),
        "formats": (_list(_str), FORMATS, _choice(FORMATS)),
        "snapshot_every": (_int, 0, _nonneg),
    },
}


@dataclass(frozen=True)
class ScenarioConfig:
    system: dict
    grid: dict
    initial: dict
    evolution: dict
    analysis: dict
    output: dict
    name: str = "scenario"

    def section(self, name: str) -> dict:
        return getattr(self, name)

    @property
    def hbar(self) -> float:
        return self.system["hbar"]

    @property
    def seed(self) -> int:
        return self.analysis["seed"]

    @property
    def scheme(self) -> str:
        s = self.evolution["scheme"]
        if s != "auto":
            return s
        return SPLIT_STEP if self.grid["boundary"] == PERIODIC else CRANK_NICOLSON

    def with_changes(self, section: str, **values) -> "ScenarioConfig":
        data = {s: dict(self.section(s)) for s in SCHEMA}
        data[section].update(values)
        return ScenarioConfig(**data, name=self.name)

    def to_ini(self) -> str:
        lines = [f"# scenario: {self.name}"]
        for sec in SCHEMA:
            lines.append(f"[{sec}]")
            for key in SCHEMA[sec]:
                lines.append(f"{key} = {_fmt(self.section(sec)[key])}")
            lines.append("")
        return "\n".join(lines)


def _syntax_position(exc: configparser.Error, text: str) -> tuple[int, int]:
    lineno = getattr(exc, "lineno", None)
    if lineno is None and getattr(exc, "errors", None):
        lineno = exc.errors[0][0]
    lineno = lineno or 1
    lines = text.splitlines()
    line = lines[lineno - 1] if 0 < lineno <= len(lines) else ""
    col = len(line) - len(line.lstrip()) + 1
    return lineno, col


def _per_axis(values: tuple, dim: int, key: str, errors: list) -> tuple:
    if len(values) == 1:
        return values * dim
    if len(values) != dim:
        errors.append(f"[grid] {key}: expected 1 or {dim} values, got {len(values)}")
    return values


def parse_config(text: str, name: str = "scenario") -> ScenarioConfig:
    """Parse and validate INI text; raises :class:`ConfigError` listing every problem."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), default_section="__defaults__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line, col = _syntax_position(exc, text)
        if isinstance(exc, configparser.MissingSectionHeaderError):
            msg = "expected a [section] header"
        elif isinstance(exc, configparser.ParsingError):
            msg = "expected 'key = value', '[section]' or a '#' comment"
        else:
            msg = str(exc).splitlines()[0]
        raise ConfigError([f"syntax error at line {line}, column {col}: {msg}"]) from None

    errors: list[str] = []
    data: dict[str, dict] = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            errors.append(f"unknown section [{sec}]")
    for sec, keys in SCHEMA.items():
        values = {}
        given = cp[sec] if cp.has_section(sec) else {}
        for key in given:
            if key not in keys:
                errors.append(f"[{sec}] unknown key {key!r}")
        for key, (parse, default, check) in keys.items():
            if key in given:
                raw = given[key]
                try:
                    v = parse(raw)
                except ValueError as exc:
                    errors.append(f"[{sec}] {key} = {raw!r}: {exc}")
                    values[key] = default
                    continue
                msg = check(v) if check else None
                if msg:
                    errors.append(f"[{sec}] {key} = {raw!r}: {msg}")
                values[key] = v
            else:
                values[key] = default
        data[sec] = values
    errors.extend(_cross_checks(data))
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(**data, name=name)


def _cross_checks(d: dict) -> list[str]:
    errors: list[str] = []
    g, s, i, e, a = d["grid"], d["system"], d["initial"], d["evolution"], d["analysis"]
    dim = g["dim"]
    lower = _per_axis(g["lower"], dim, "lower", errors)
    upper = _per_axis(g["upper"], dim, "upper", errors)
    points = _per_axis(g["points"], dim, "points", errors)
    if len(lower) == len(upper) == len(points) == dim:
        errors.extend(f"[grid] {m}" for m in grid_errors(lower, upper, points, g["boundary"]))
    if len(s["mass"]) not in (1, dim):
        errors.append(f"[system] mass: expected 1 or {dim} values")
    for key in ("width", "center", "momentum", "index", "mode", "q0", "p0"):
        if len(i[key]) not in (1, dim):
            errors.append(f"[initial] {key}: expected 1 or {dim} values")
    periodic = g["boundary"] == PERIODIC
    if e["scheme"] == SPLIT_STEP and not periodic:
        errors.append("[evolution] scheme split_step_spectral needs a periodic grid")
    if s["potential"] == "box_well" and periodic:
        errors.append("[system] potential box_well needs boundary = box")
    if i["family"] in ("coherent", "free_gaussian") and dim != 1:
        errors.append(f"[initial] family {i['family']} is one-dimensional")
    if i["family"] == "stationary" and periodic:
        errors.append("[initial] family stationary needs boundary = box")
    if i["family"] == "plane_wave" and not periodic:
        errors.append("[initial] family plane_wave needs a periodic grid")
    if i["family"] == "eigenstate" and s["potential"] != "harmonic":
        errors.append("[initial] family eigenstate is the analytic oscillator state; use family = stationary")
    ops = a["operations"]
    if "equivariance" in ops and "trajectories" not in ops:
        errors.append("[analysis] equivariance needs trajectories")
    return errors


def load_config(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, os.path.splitext(os.path.basename(path))[0])
