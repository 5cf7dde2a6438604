"""Scenario configuration files (TOML) and their validation."""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .keyrate import PRESETS, SecurityTargets
from .observables import ARCHITECTURES, ROLES, SetupParams, TriggerSpec
from .optimizer import OptimizationSpec, default_spec, default_var
from .sources import custom_statistics, generic_statistics, ideal_statistics, pdc_statistics

SCHEMA = {
    "scenario": {"name", "architecture"},
    "setup": {"eta_cd", "eta_c", "eta_d", "p_d", "t", "loss_db"},
    "sources": set(),
    "grid": {"loss_db", "eta_cd", "n_sh"},
    "security": {"sets", "eps_sec", "eps_cor", "eps_rob", "eps_ea"},
    "optimization": {"objective", "free", "fixed", "bounds", "grid_points", "key_grid_points",
                     "sweeps", "xtol", "optimize"},
    "search": {"etas", "mode", "n_cap", "threshold", "tol_db"},
    "output": {"dir", "plot", "formats"},
    "run": {"workers", "seed", "cache_size"},
}
SOURCE_KEYS = {"family", "lam", "n_max", "p0", "q", "probs", "mu"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ScenarioConfig:
    """Validated scenario: setup template, grids, security sets and search settings."""

    name: str
    setup: SetupParams
    loss_grid: list
    eta_grid: list
    n_sh_grid: list
    security: list
    spec: OptimizationSpec
    optimize: bool = True
    etas: list = field(default_factory=list)
    mode: str = "finite"
    n_cap: float | None = 1e15
    threshold: float | None = None
    tol_db: float = 0.05
    out_dir: str = "out"
    plot: bool = True
    formats: tuple = ("png",)
    workers: int = 1
    seed: int = 0
    cache_size: int = 16384
    raw: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _fail(where: str, msg: str):
    raise ConfigError(f"{where}: {msg}")


def _grid(value, where: str) -> list:
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "step", "num", "log"}
        if extra:
            _fail(where, f"unknown keys {sorted(extra)}")
        try:
            start, stop = float(value["start"]), float(value["stop"])
        except KeyError as e:
            _fail(where, f"missing {e.args[0]!r}")
        if value.get("log"):
            pts = np.geomspace(start, stop, int(value.get("num", 5)))
        elif "step" in value:
            step = float(value["step"])
            if step <= 0:
                _fail(where, "step must be positive")
            pts = np.arange(start, stop + step / 2, step)
        else:
            pts = np.linspace(start, stop, int(value.get("num", 5)))
        value = [round(float(x), 12) for x in pts]
    if not isinstance(value, list):
        value = [value]
    try:
        value = [float(x) for x in value]
    except (TypeError, ValueError):
        _fail(where, "grid entries must be numbers")
    if not value:
        _fail(where, "grid is empty")
    if value != sorted(value):
        _fail(where, "grid must be sorted")
    return value


def _source(role: str, spec: dict):
    where = f"sources.{role}"
    if not isinstance(spec, dict):
        _fail(where, "expected a table")
    extra = set(spec) - SOURCE_KEYS
    if extra:
        _fail(where, f"unknown keys {sorted(extra)}")
    n_max = int(spec.get("n_max", 3))
    if role in ("h", "v"):
        fam = spec.get("family", "triggered" if "mu" in spec else "ideal")
        if fam == "ideal":
            return TriggerSpec(None, n_max)
        if fam == "triggered":
            return TriggerSpec(float(spec["mu"]), n_max)
        _fail(where, f"family {fam!r} not valid for a triggered source")
    fam = spec.get("family", "ideal")
    try:
        if fam == "ideal":
            return ideal_statistics(n_max)
        if fam == "pdc":
            return pdc_statistics(float(spec["lam"]), n_max)
        if fam == "generic":
            return generic_statistics(float(spec.get("p0", 0.0)), float(spec["q"]))
        if fam == "custom":
            return custom_statistics(spec["probs"])
    except KeyError as e:
        _fail(where, f"missing {e.args[0]!r}")
    except ValueError as e:
        _fail(where, str(e))
    _fail(where, f"unknown family {fam!r}")


def _security(sec: dict) -> list:
    explicit = {"eps_sec", "eps_cor", "eps_rob", "eps_ea"} & set(sec)
    if explicit:
        if explicit != {"eps_sec", "eps_cor", "eps_rob", "eps_ea"}:
            _fail("security", "explicit targets need eps_sec, eps_cor, eps_rob and eps_ea")
        return [SecurityTargets(float(sec["eps_sec"]), float(sec["eps_cor"]),
                                float(sec["eps_rob"]), float(sec["eps_ea"]), "custom")]
    names = sec.get("sets", ["S1"])
    if isinstance(names, str):
        names = [names]
    out = []
    for n in names:
        if n not in PRESETS:
            _fail("security.sets", f"unknown preset {n!r}")
        out.append(PRESETS[n])
    return out


def parse_config(data: dict, preset: str | None = None) -> ScenarioConfig:
    """Validate a parsed TOML document; unknown sections or keys are rejected."""
    for section, body in data.items():
        if section not in SCHEMA:
            _fail(section, "unknown section")
        if not isinstance(body, dict):
            _fail(section, "expected a table")
        if section != "sources":
            extra = set(body) - SCHEMA[section]
            if extra:
                _fail(section, f"unknown keys {sorted(extra)}")
    sc = data.get("scenario", {})
    arch = sc.get("architecture", "esr")
    if arch not in ARCHITECTURES:
        _fail("scenario.architecture", f"must be one of {ARCHITECTURES}")
    st = data.get("setup", {})
    eta_c = st.get("eta_c", st.get("eta_cd", 1.0))
    eta_d = st.get("eta_d", st.get("eta_cd", 1.0))
    srcs = {}
    for role, spec in data.get("sources", {}).items():
        if role not in ROLES[arch]:
            _fail(f"sources.{role}", f"role not used by {arch}; expected {ROLES[arch]}")
        srcs[role] = _source(role, spec)
    try:
        setup = SetupParams(arch, float(eta_c), float(eta_d), float(st.get("loss_db", 0.0)),
                            float(st.get("p_d", 1e-7)), st.get("t", 0.9 if arch == "pqa" else None),
                            tuple(sorted(srcs.items())))
    except (TypeError, ValueError) as e:
        _fail("setup", str(e))
    gr = data.get("grid", {})
    loss_grid = _grid(gr.get("loss_db", [setup.loss_db]), "grid.loss_db")
    eta_grid = _grid(gr.get("eta_cd", [setup.eta_c]), "grid.eta_cd")
    n_grid = _grid(gr.get("n_sh", [1e7]), "grid.n_sh")
    if any(e <= 0 or e > 1 for e in eta_grid):
        _fail("grid.eta_cd", "efficiencies must lie in (0, 1]")
    if any(x < 0 for x in loss_grid):
        _fail("grid.loss_db", "loss must be non-negative")
    security = [PRESETS[preset]] if preset else _security(data.get("security", {}))
    op = data.get("optimization", {})
    objective = op.get("objective", "finite")
    if objective not in ("finite", "asymptotic"):
        _fail("optimization.objective", "must be 'finite' or 'asymptotic'")
    fixed = dict(op.get("fixed", {}))
    bounds = {k: tuple(v) for k, v in op.get("bounds", {}).items()}
    try:
        for name in list(fixed) + list(bounds):
            default_var(name)
        auto = default_spec(setup, objective)
        free = tuple(op.get("free", [n for n in auto.free if n not in fixed]))
        spec = OptimizationSpec(free=free, fixed=tuple(sorted(fixed.items())),
                                bounds=tuple(sorted(bounds.items())), objective=objective,
                                grid_points=int(op.get("grid_points", 3)),
                                key_grid_points=int(op.get("key_grid_points", 4)),
                                sweeps=int(op.get("sweeps", 3)), xtol=float(op.get("xtol", 1e-3)))
    except ValueError as e:
        _fail("optimization", str(e))
    if not op.get("optimize", True):
        spec = OptimizationSpec(free=(), fixed=spec.fixed, objective=objective)
    se = data.get("search", {})
    etas = _grid(se["etas"], "search.etas") if "etas" in se else []
    mode = se.get("mode", "finite")
    if mode not in ("finite", "asymptotic", "cap"):
        _fail("search.mode", "must be 'finite', 'asymptotic' or 'cap'")
    out = data.get("output", {})
    formats = tuple(out.get("formats", ["png"]))
    if set(formats) - {"png", "svg"}:
        _fail("output.formats", "only 'png' and 'svg' are supported")
    run = data.get("run", {})
    workers = int(run.get("workers", os.cpu_count() or 1))
    if workers < 1:
        _fail("run.workers", "must be at least 1")
    n_cap = se.get("n_cap", 1e15)
    return ScenarioConfig(
        name=str(sc.get("name", "scenario")), setup=setup, loss_grid=loss_grid,
        eta_grid=eta_grid, n_sh_grid=n_grid, security=security, spec=spec,
        optimize=bool(op.get("optimize", True)), etas=etas, mode=mode,
        n_cap=None if n_cap in (0, "none") else float(n_cap),
        threshold=se.get("threshold"), tol_db=float(se.get("tol_db", 0.05)),
        out_dir=str(out.get("dir", "out")), plot=bool(out.get("plot", True)), formats=formats,
        workers=workers, seed=int(run.get("seed", 0)), cache_size=int(run.get("cache_size", 16384)),
        raw=data)


def load_config(path: str, preset: str | None = None) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return parse_config(data, preset)

