"""Finite-key secret key length, asymptotic rate and security budgets.

All logarithms are base 2 except inside the Hoeffding bound for the
estimation interval, which uses the natural logarithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

TSIRELSON = (2 + math.sqrt(2)) / 4
CLASSICAL = 0.75
_SQRT_TOL = 1e-12
_PT_EDGE = 1e-9


def h(x: float) -> float:
    """Binary entropy with h(0) = h(1) = 0."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def _dh(x: float) -> float:
    return math.log2((1 - x) / x)


def _radicand(p: float) -> float:
    r = 16 * p * (p - 1) + 3
    if r < 0:
        if r < -_SQRT_TOL:
            raise ValueError(f"p={p} gives negative radicand {r}")
        r = 0.0
    return r


def g(p: float) -> float:
    """Entropy rate 1 - h(1/2 + sqrt(16 p (p-1) + 3)/2) of the CHSH game.

    Defined on [0, Tsirelson]; below 3/4 the radicand turns negative, so the
    rate is taken as 0 there (no Bell violation).
    """
    if p < 0 or p > TSIRELSON + 1e-12:
        raise ValueError(f"winning probability {p} outside [0, {TSIRELSON}]")
    if p <= CLASSICAL:
        return 0.0
    return 1.0 - h(0.5 + 0.5 * math.sqrt(_radicand(min(p, TSIRELSON))))


def dg(p: float) -> float:
    """Derivative of g for 3/4 < p < Tsirelson."""
    r = _radicand(p)
    s = math.sqrt(r)
    if s == 0.0:
        # limit at p = 3/4: h(1/2 + e) ~ 1 - 2 e^2 / ln 2 with e^2 = 2 (p - 3/4)
        return 4.0 / math.log(2)
    x = 0.5 + 0.5 * s
    return -_dh(x) * 0.5 * (32 * p - 16) / (2 * s)


def f_min(p: float, pt: float) -> float:
    if p < pt:
        return g(p)
    return g(pt) + dg(pt) * (p - pt)


def eta(p: float, pt: float, n: float, gamma: float, eps1: float, eps2: float) -> float:
    corr = (2 / math.sqrt(n)) * (math.log2(13) + dg(pt) / gamma)
    return f_min(p, pt) - corr * math.sqrt(1 - 2 * math.log2(eps1 * eps2))


@dataclass
class EtaOpt:
    value: float
    p_t: float
    p_eval: float
    violation: bool


def eta_opt(omega: float, n: float, gamma: float, delta_est: float, eps1: float,
            eps2: float) -> EtaOpt:
    """Maximize eta over p_t in (3/4, Tsirelson) at p = (omega gamma - delta_est)/gamma.

    Returns value 0 with ``violation=False`` when the evaluation point shows
    no CHSH advantage.
    """
    if not (0 < eps1 < 1 and 0 < eps2 < 1):
        raise ValueError("eps1 and eps2 must lie in (0, 1)")
    p = (omega * gamma - delta_est) / gamma
    if p <= CLASSICAL:
        return EtaOpt(0.0, float("nan"), p, False)
    p = min(p, TSIRELSON)
    lo, hi = CLASSICAL + _PT_EDGE, TSIRELSON - _PT_EDGE

    def neg(pt):
        return -eta(p, pt, n, gamma, eps1, eps2)

    best = None
    # restart from three sub-brackets to guard against flat stretches
    edges = np.linspace(lo, hi, 4)
    for a, b in zip(edges[:-1], edges[1:]):
        r = minimize_scalar(neg, bounds=(a, b), method="bounded",
                            options={"xatol": 1e-10, "maxiter": 500})
        if best is None or r.fun < best.fun:
            best = r
    return EtaOpt(-best.fun, float(best.x), p, True)


def leak_ir(q: float, omega: float, n: float, gamma: float, eps_ir: float,
            eps_ir_prime: float) -> float:
    """Information-reconciliation leakage in bits."""
    lead = n * ((1 - gamma) * h(q) + gamma * h(omega))
    e2 = eps_ir_prime**2
    return (lead
            + 4 * math.sqrt(n) * math.log2(2 * math.sqrt(2) + 1) * math.sqrt(2 * math.log2(8 / e2))
            + math.log2(8 / e2 + 2 / (2 - eps_ir_prime))
            + math.log2(1 / eps_ir))


def delta_est_min(n: float, eps_rob_ea: float) -> float:
    """Smallest estimation interval allowed by the Hoeffding bound."""
    if n <= 0 or eps_rob_ea <= 0:
        raise ValueError("inputs must be positive")
    return math.sqrt(math.log(1 / eps_rob_ea) / (2 * n))


@dataclass(frozen=True)
class SecurityBudget:
    """Security targets and their split into component failure probabilities."""

    eps_sec: float
    eps_cor: float
    eps_rob: float
    eps_pa: float
    eps_s: float
    eps_ea: float
    eps_ir: float
    eps_ir_prime: float
    eps_rob_ea: float

    @property
    def eps_rob_ir(self) -> float:
        return self.eps_ir_prime + self.eps_ir

    def violations(self) -> list[str]:
        out = []
        comps = dict(eps_pa=self.eps_pa, eps_s=self.eps_s, eps_ea=self.eps_ea, eps_ir=self.eps_ir,
                     eps_ir_prime=self.eps_ir_prime, eps_rob_ea=self.eps_rob_ea)
        for k, v in comps.items():
            if not 0 < v < 1:
                out.append(f"{k}={v} outside (0, 1)")
        rel = 1e-12
        if self.eps_pa + self.eps_s + self.eps_ea > self.eps_sec * (1 + rel):
            out.append("eps_pa + eps_s + eps_ea exceeds eps_sec")
        if abs(self.eps_ir - self.eps_cor) > rel * self.eps_cor:
            out.append("eps_ir must equal eps_cor")
        if self.eps_rob_ir + self.eps_rob_ea + self.eps_ir > self.eps_rob * (1 + rel):
            out.append("eps_rob_ir + eps_rob_ea + eps_ir exceeds eps_rob")
        return out

    def validate(self) -> "SecurityBudget":
        bad = self.violations()
        if bad:
            raise ValueError("invalid security budget: " + "; ".join(bad))
        return self


@dataclass(frozen=True)
class SecurityTargets:
    eps_sec: float
    eps_cor: float
    eps_rob: float
    eps_ea: float
    name: str = "custom"

    def split(self, f_pa: float = 0.5, f_ir: float = 0.5) -> SecurityBudget:
        """Budget saturating both sums.

        f_pa: share of eps_sec - eps_ea given to privacy amplification (rest to smoothing).
        f_ir: share of eps_rob - 2 eps_cor given to eps'_IR (rest to eps_rob^EA).
        """
        if not (0 < f_pa < 1 and 0 < f_ir < 1):
            raise ValueError("split fractions must lie in (0, 1)")
        free_sec = self.eps_sec - self.eps_ea
        free_rob = self.eps_rob - 2 * self.eps_cor
        if free_sec <= 0 or free_rob <= 0:
            raise ValueError("targets leave no room for the split")
        return SecurityBudget(self.eps_sec, self.eps_cor, self.eps_rob,
                              eps_pa=f_pa * free_sec, eps_s=(1 - f_pa) * free_sec,
                              eps_ea=self.eps_ea, eps_ir=self.eps_cor,
                              eps_ir_prime=f_ir * free_rob, eps_rob_ea=(1 - f_ir) * free_rob)


PRESETS = {
    "S1": SecurityTargets(1e-5, 1e-10, 1e-2, 1e-6, "S1"),
    "S2": SecurityTargets(1e-9, 1e-15, 1e-3, 1e-10, "S2"),
}


@dataclass(frozen=True)
class ProtocolParams:
    n_sh: float
    gamma: float
    delta_est: float | None = None

    def resolved_delta(self, budget: SecurityBudget) -> float:
        floor = delta_est_min(self.n_sh, budget.eps_rob_ea)
        if self.delta_est is None:
            return floor
        if self.delta_est < floor * (1 - 1e-12):
            raise ValueError(f"delta_est {self.delta_est} below Hoeffding floor {floor}")
        return self.delta_est


@dataclass
class KeyRateResult:
    l: float
    k_cond: float
    k: float
    n_expected: float
    observables: object
    feasible: bool
    raw_l: float = 0.0
    eta_opt: float = 0.0
    chosen: dict = field(default_factory=dict)


def raw_key_length(omega: float, q: float, proto: ProtocolParams, budget: SecurityBudget):
    """Unclamped key length and the entropy rate used."""
    n = proto.n_sh
    gam = proto.gamma
    if not 0 < gam < 1:
        raise ValueError(f"test probability {gam} outside (0, 1)")
    de = proto.resolved_delta(budget)
    e1 = budget.eps_s / 4
    e2 = budget.eps_ea + budget.eps_ir
    eo = eta_opt(omega, n, gam, de, e1, e2)
    if not eo.violation:
        return -math.inf, eo
    l = (n * (eo.value - gam)
         - 2 * math.log2(7) * math.sqrt(1 - 2 * math.log2(e1 * e2)) * math.sqrt(n)
         - leak_ir(q, omega, n, gam, budget.eps_ir, budget.eps_ir_prime)
         - 3 * math.log2(_one_minus_sqrt_one_minus(e1**2))
         - 2 * math.log2(1 / budget.eps_pa))
    return l, eo


def _one_minus_sqrt_one_minus(x2: float) -> float:
    return x2 / (1 + math.sqrt(1 - x2))


def key_length(obs, proto: ProtocolParams, budget: SecurityBudget) -> KeyRateResult:
    """Finite-key length for heralded observables ``obs`` (needs p_sh, omega_sh, q_sh)."""
    budget.validate()
    if obs.p_sh <= 0 or not obs.feasible:
        return KeyRateResult(0.0, 0.0, 0.0, math.inf, obs, False, -math.inf)
    n = proto.n_sh
    raw, eo = raw_key_length(obs.omega_sh, obs.q_sh, proto, budget)
    n_exp = n / obs.p_sh
    l = max(raw, 0.0)
    return KeyRateResult(l, l / n, l / n_exp, n_exp, obs, raw > 0, raw, eo.value,
                         {"gamma": proto.gamma, "p_t": eo.p_t})


def asymptotic_rate(obs) -> float:
    """P_SH [g(omega) - h(Q)], clamped at zero."""
    if obs.p_sh <= 0 or not obs.feasible:
        return 0.0
    return max(0.0, obs.p_sh * (g(min(obs.omega_sh, TSIRELSON)) - h(obs.q_sh)))
