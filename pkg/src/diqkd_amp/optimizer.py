"""Rate maximization and the derived threshold searches.

The search is a deterministic multi-start grid followed by coordinate
descent with bounded 1-D line searches. Physical parameters (t, source
intensities) form an outer loop because each evaluation needs new
observables; the security split and gamma are optimized in an inner loop
that only touches the cheap key-length formula.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np
from scipy.optimize import minimize_scalar

from .keyrate import (PRESETS, KeyRateResult, ProtocolParams, SecurityTargets, g, h,
                      raw_key_length)
from .observables import HeraldedObservables, SetupParams, TriggerSpec, heralded_observables
from .sources import generic_statistics, pdc_statistics

RATE_THRESHOLD = 1e-10
SESSION_CAP = 1e15
KEY_VARS = ("f_pa", "f_ir", "gamma")
DEFAULT_FIXED = {"f_pa": 0.5, "f_ir": 0.5, "gamma": 0.01}


@dataclass(frozen=True)
class Var:
    """A bounded variable searched in a unit coordinate."""

    name: str
    lo: float
    hi: float
    scale: str = "log"

    def from_unit(self, u: float) -> float:
        u = min(max(u, 0.0), 1.0)
        if self.scale == "lin":
            return self.lo + u * (self.hi - self.lo)
        if self.scale == "log":
            return math.exp(math.log(self.lo) + u * (math.log(self.hi) - math.log(self.lo)))
        a, b = _logit(self.lo), _logit(self.hi)
        return 1 / (1 + math.exp(-(a + u * (b - a))))


def _logit(x: float) -> float:
    return math.log(x / (1 - x))


def default_var(name: str) -> Var:
    if name in ("f_pa", "f_ir"):
        return Var(name, 1e-6, 1 - 1e-6, "logit")
    if name == "gamma":
        return Var(name, 1e-5, 0.5, "log")
    if name == "t":
        return Var(name, 1e-3, 1 - 1e-4, "logit")
    if name.startswith("lam:"):
        return Var(name, 1e-4, 0.9, "log")
    if name.startswith("mu:"):
        return Var(name, 1e-4, 2.0, "log")
    raise ValueError(f"unknown free variable {name!r}")


@dataclass(frozen=True)
class OptimizationSpec:
    """Which variables are free, their bounds, and the search settings.

    Attributes:
        free: Names of free variables. Key variables are ``f_pa``, ``f_ir``
            and ``gamma``; physical ones are ``t``, ``lam:<role>`` and
            ``mu:<role>``.
        fixed: Values for variables that are not free.
        bounds: Optional ``{name: (lo, hi)}`` overrides.
        objective: ``"finite"`` or ``"asymptotic"``.
        grid_points: Grid density per physical variable.
        key_grid_points: Grid density per key variable.
        sweeps: Maximum coordinate-descent sweeps.
        xtol: Line-search tolerance in unit coordinates.
        seed: Recorded in the result; the search itself is deterministic.
    """

    free: tuple = KEY_VARS
    fixed: tuple = ()
    bounds: tuple = ()
    objective: str = "finite"
    grid_points: int = 3
    key_grid_points: int = 4
    sweeps: int = 3
    xtol: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.objective not in ("finite", "asymptotic"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.grid_points < 1 or self.key_grid_points < 1:
            raise ValueError("grid densities must be positive")
        for name in self.free:
            self.var(name)
        for name, (lo, hi) in self.bounds:
            if not lo < hi:
                raise ValueError(f"empty bounds for {name}")

    def var(self, name: str) -> Var:
        base = default_var(name)
        over = dict(self.bounds).get(name)
        return base if over is None else replace(base, lo=over[0], hi=over[1])

    def fixed_value(self, name: str):
        return dict(self.fixed).get(name, DEFAULT_FIXED.get(name))


def free_physical_vars(setup: SetupParams) -> tuple:
    """Physical variables worth optimizing for this setup."""
    names = []
    if setup.architecture == "pqa":
        names.append("t")
    for role, src in setup.sources:
        if isinstance(src, TriggerSpec):
            if src.mu is not None:
                names.append(f"mu:{role}")
        elif getattr(src, "family", "") == "pdc":
            names.append(f"lam:{role}")
    return tuple(names)


def default_spec(setup: SetupParams, objective: str = "finite", **kw) -> OptimizationSpec:
    keys = KEY_VARS if objective == "finite" else ()
    return OptimizationSpec(free=keys + free_physical_vars(setup), objective=objective, **kw)


def apply_physical(setup: SetupParams, values: dict) -> SetupParams:
    """Return ``setup`` with t and source intensities replaced by ``values``."""
    roles = {}
    mapping = dict(setup.sources)
    for name, v in values.items():
        if name == "t":
            setup = replace(setup, t=v)
        elif name.startswith("lam:"):
            role = name[4:]
            n_max = mapping[role].n_max if role in mapping else 3
            roles[role] = pdc_statistics(v, n_max)
        elif name.startswith("mu:"):
            role = name[3:]
            n_max = mapping[role].n_max if role in mapping else 3
            roles[role] = TriggerSpec(v, n_max)
    return setup.with_sources(**roles) if roles else setup


def _search(variables, fun, grid_points, sweeps, xtol, workers=1):
    """Maximize ``fun(values) -> (score, payload)`` over the unit cube.

    Returns (values, score, payload, best grid score).
    """
    if not variables:
        s, p = fun({})
        return {}, s, p, s

    def decode(u):
        return {v.name: v.from_unit(x) for v, x in zip(variables, u)}

    ticks = [(k + 0.5) / grid_points for k in range(grid_points)]
    starts = [tuple(u) for u in product(ticks, repeat=len(variables))]
    if workers > 1 and len(starts) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(fun, [decode(u) for u in starts]))
    else:
        results = [fun(decode(u)) for u in starts]
    best_i = max(range(len(starts)), key=lambda i: (results[i][0], -i))
    u = list(starts[best_i])
    score, payload = results[best_i]
    grid_score = score
    memo = {}

    def along(k, x):
        trial = list(u)
        trial[k] = x
        key = tuple(trial)
        if key not in memo:
            memo[key] = fun(decode(trial))
        return memo[key]

    for _ in range(sweeps):
        start_score = score
        for k in range(len(variables)):
            r = minimize_scalar(lambda x: -_finite(along(k, x)[0]), bounds=(0.0, 1.0),
                                method="bounded", options={"xatol": xtol})
            cand = along(k, float(r.x))
            if cand[0] > score:
                u[k] = float(r.x)
                score, payload = cand
        if score <= start_score + 1e-12 * abs(start_score):
            break
    return decode(u), score, payload, grid_score


def _finite(x: float) -> float:
    return x if math.isfinite(x) else -1e300


def _key_score(obs, n_sh, targets, values):
    """Score a key-variable choice: K when positive, else a negative ranking value."""
    try:
        budget = targets.split(values["f_pa"], values["f_ir"])
        raw, eo = raw_key_length(obs.omega_sh, obs.q_sh, ProtocolParams(n_sh, values["gamma"]),
                                 budget)
    except ValueError:
        return -math.inf, None
    n_exp = n_sh / obs.p_sh
    score = raw / n_exp if raw > 0 else -1.0 + raw / n_sh
    return score, (raw, eo)


def _asym_raw(obs) -> float:
    if obs.p_sh <= 0 or not obs.feasible:
        return -math.inf
    return obs.p_sh * (g(min(obs.omega_sh, (2 + math.sqrt(2)) / 4)) - h(obs.q_sh))


@dataclass
class _Evaluator:
    setup: SetupParams
    spec: OptimizationSpec
    targets: SecurityTargets
    n_sh: float
    key_vars: tuple
    key_fixed: dict

    def observables(self, phys: dict) -> HeraldedObservables:
        return heralded_observables(apply_physical(self.setup, phys))

    def inner(self, obs):
        if obs.p_sh <= 0 or not obs.feasible:
            return {}, -math.inf, None, -math.inf

        def fun(vals):
            return _key_score(obs, self.n_sh, self.targets, {**self.key_fixed, **vals})

        return _search(self.key_vars, fun, self.spec.key_grid_points, self.spec.sweeps,
                       self.spec.xtol)

    def __call__(self, phys: dict):
        obs = self.observables(phys)
        if self.spec.objective == "asymptotic":
            return _asym_raw(obs), (obs, {}, None, _asym_raw(obs))
        vals, score, payload, _ = self.inner(obs)
        return score, (obs, vals, payload, score)


def maximize_rate(setup: SetupParams, spec: OptimizationSpec | None = None,
                  targets: SecurityTargets | str = "S1", n_sh: float = 1e7,
                  workers: int = 1) -> KeyRateResult:
    """Maximize K (or K_inf) over the free variables of ``spec``.

    Args:
        setup: Physical setup; free physical variables override its fields.
        spec: Search specification, by default all key and physical variables.
        targets: Security targets or a preset name.
        n_sh: Block size (ignored for the asymptotic objective).
        workers: Processes used for the outer grid.

    Returns:
        KeyRateResult whose ``chosen`` record holds every variable value,
        the entropy-rate argmax ``p_t`` and the best initial-grid rate.
    """
    spec = spec or default_spec(setup)
    if isinstance(targets, str):
        targets = PRESETS[targets]
    phys_vars = [spec.var(n) for n in spec.free if n not in KEY_VARS]
    key_vars = tuple(spec.var(n) for n in spec.free if n in KEY_VARS)
    key_fixed = {n: spec.fixed_value(n) for n in KEY_VARS if n not in spec.free}
    phys_fixed = {n: v for n, v in spec.fixed if n not in KEY_VARS}
    base = apply_physical(setup, phys_fixed)
    ev = _Evaluator(base, spec, targets, n_sh, key_vars, key_fixed)
    phys, score, payload, grid_score = _search(phys_vars, ev, spec.grid_points, spec.sweeps,
                                               spec.xtol, workers)
    obs, key_vals, inner_payload, _ = payload
    chosen = {**phys_fixed, **phys, "seed": spec.seed}
    if spec.objective == "asymptotic":
        k = max(score, 0.0) if math.isfinite(score) else 0.0
        grid_k = max(grid_score, 0.0) if math.isfinite(grid_score) else 0.0
        chosen["grid_best_k"] = float(grid_k)
        feasible = k > 0
        k_cond = k / obs.p_sh if obs.p_sh > 0 else 0.0
        return KeyRateResult(math.inf if feasible else 0.0, k_cond, k, math.inf, obs, feasible,
                             score, 0.0, chosen)
    chosen.update(key_fixed)
    chosen.update(key_vals)
    chosen["grid_best_k"] = float(max(grid_score, 0.0))
    if inner_payload is None:
        return KeyRateResult(0.0, 0.0, 0.0, math.inf, obs, False, -math.inf, 0.0, chosen)
    raw, eo = inner_payload
    chosen["p_t"] = eo.p_t
    l = max(raw, 0.0)
    n_exp = n_sh / obs.p_sh
    return KeyRateResult(l, l / n_sh, l / n_exp, n_exp, obs, raw > 0, raw, eo.value, chosen)


@dataclass
class CriticalPoint:
    eta_cd: float
    n_star: float
    unbounded: bool
    k: float = 0.0
    evaluations: int = 0


@dataclass
class CriticalLineResult:
    points: list = field(default_factory=list)
    label: str = ""


def critical_blocksize(setup: SetupParams, targets="S1", spec: OptimizationSpec | None = None,
                       threshold: float = RATE_THRESHOLD, n_min: float = 1e4,
                       n_max: float = 1e20, resolution: float = 1.05,
                       workers: int = 1) -> CriticalPoint:
    """Smallest n_sh whose optimized K reaches ``threshold``.

    The returned ``n_star`` satisfies K(n_star) >= threshold while the
    largest infeasible block size probed lies within ``resolution`` below it.
    """
    spec = spec or default_spec(setup)
    asym = maximize_rate(setup, replace(spec, objective="asymptotic",
                                        free=tuple(n for n in spec.free if n not in KEY_VARS)),
                         targets, workers=workers)
    evals = 1
    if asym.k < threshold:
        return CriticalPoint(setup.eta_c, math.inf, True, 0.0, evals)

    def rate(n):
        nonlocal evals
        evals += 1
        return maximize_rate(setup, spec, targets, n, workers).k

    hi = n_min
    k_hi = rate(hi)
    if k_hi >= threshold:
        return CriticalPoint(setup.eta_c, hi, False, k_hi, evals)
    lo = hi
    while k_hi < threshold:
        lo, hi = hi, hi * 10
        if hi > n_max:
            return CriticalPoint(setup.eta_c, math.inf, True, 0.0, evals)
        k_hi = rate(hi)
    while hi / lo > resolution:
        mid = math.sqrt(lo * hi)
        k_mid = rate(mid)
        if k_mid >= threshold:
            hi, k_hi = mid, k_mid
        else:
            lo = mid
    return CriticalPoint(setup.eta_c, hi, False, k_hi, evals)


def critical_line(etas, setup_for_eta, targets="S1", spec=None, **kw) -> CriticalLineResult:
    """Critical block sizes along ``etas``; ``setup_for_eta(eta)`` builds each setup."""
    label = targets if isinstance(targets, str) else targets.name
    pts = [critical_blocksize(setup_for_eta(e), targets, spec, **kw) for e in etas]
    for p, e in zip(pts, etas):
        p.eta_cd = e
    return CriticalLineResult(pts, label)


def max_tolerable_loss(setup: SetupParams, mode: str = "finite", targets="S1",
                       spec: OptimizationSpec | None = None, n_sh: float = 1e7,
                       threshold: float | None = None, n_cap: float | None = SESSION_CAP,
                       tol_db: float = 0.05, step_db: float = 5.0, max_db: float = 200.0,
                       workers: int = 1):
    """Largest channel loss (dB) meeting the rate and session-size constraints.

    Args:
        setup: Template; its ``loss_db`` is overwritten.
        mode: ``"finite"`` (K >= threshold, default 1e-10), ``"asymptotic"``
            (K_inf > threshold, default 0) or ``"cap"`` (only <N> <= n_cap).
        n_cap: Upper limit on <N>, or None.
        tol_db: Bisection resolution.

    Returns:
        The largest feasible loss found, or None when Λ = 0 is infeasible.
    """
    if mode not in ("finite", "asymptotic", "cap"):
        raise ValueError(f"unknown mode {mode!r}")
    if threshold is None:
        threshold = RATE_THRESHOLD if mode == "finite" else 0.0
    objective = "asymptotic" if mode == "asymptotic" else "finite"
    if spec is None:
        spec = default_spec(setup, objective)
    elif spec.objective != objective:
        spec = replace(spec, objective=objective)

    def feasible(loss):
        s = replace(setup, loss_db=loss)
        if mode == "cap":
            obs = heralded_observables(s)
            return obs.p_sh > 0 and n_sh / obs.p_sh <= n_cap
        r = maximize_rate(s, spec, targets, n_sh, workers)
        if mode == "asymptotic":
            ok = r.raw_l > threshold
            return ok and (n_cap is None or r.observables.p_sh <= 0 or
                           n_sh / r.observables.p_sh <= n_cap)
        return r.k >= threshold and r.feasible and (n_cap is None or r.n_expected <= n_cap)

    if not feasible(0.0):
        return None
    lo = 0.0
    hi = step_db
    while feasible(hi):
        lo = hi
        hi += step_db
        if hi > max_db:
            return lo
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def q_max_search(loss_db: float, setup: SetupParams, targets="S1",
                 spec: OptimizationSpec | None = None, n_sh: float = 1e11,
                 n_cap: float | None = SESSION_CAP, q_min: float = 1e-9, q_hi: float = 1.0,
                 rel_tol: float = 0.01, role: str = "cd", workers: int = 1) -> float:
    """Largest double-to-single pair ratio q of the relay source keeping K > 0.

    The relay source emits no vacuum, so p1 = 1/(1+q) and p2 = q/(1+q).
    Returns 0 when even q = 0 is infeasible.
    """
    spec = spec or default_spec(setup)
    base = replace(setup, loss_db=loss_db)

    def feasible(q):
        s = base.with_sources(**{role: generic_statistics(0.0, q)})
        r = maximize_rate(s, spec, targets, n_sh, workers)
        return r.feasible and r.l > 0 and (n_cap is None or r.n_expected <= n_cap)

    if not feasible(0.0):
        return 0.0
    if feasible(q_hi):
        return q_hi
    lo, hi = q_min, q_hi
    if not feasible(lo):
        return 0.0
    while hi / lo > 1 + rel_tol:
        mid = math.sqrt(lo * hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def asymptotic_threshold(setup_for_eta, threshold: float = RATE_THRESHOLD, lo: float = 0.85,
                         hi: float = 1.0, tol: float = 1e-5, spec=None) -> float | None:
    """Smallest eta_cd whose optimized K_inf reaches ``threshold`` (bisection).

    ``setup_for_eta(eta)`` builds the setup; physical variables are optimized.
    """
    def ok(eta):
        s = setup_for_eta(eta)
        sp = spec or default_spec(s, "asymptotic")
        return maximize_rate(s, sp).k >= threshold

    if not ok(hi):
        return None
    if ok(lo):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
