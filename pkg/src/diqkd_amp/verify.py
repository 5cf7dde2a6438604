"""Self-checks: oracle agreement, normalization and closed-form agreement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

from . import clickdist as cd
from . import fock_oracle as fo
from .observables import esr_ideal_closed_form, heralded_observables, make_setup, pqa_ideal_closed_form

THETA_PAIRS = ((0.0, 0.0), (0.0, math.pi / 8), (math.pi / 4, -math.pi / 8))
ZETA_PAIRS = ((1.0, 1.0), (0.9, 0.81))
T_VALUES = (0.5, 0.9)
SCOPES = ("oracle", "normalization", "closed-form")


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_dev: float
    tol: float
    cases: int = 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max_dev={self.max_dev:.3e} tol={self.tol:.0e} cases={self.cases}"


def oracle_cases():
    """(arch, conditioning, setup dict, theta_a, theta_b) over the verification grid."""
    for (za, zb), (ta, tb) in product(ZETA_PAIRS, THETA_PAIRS):
        base = {"zeta_cd": za, "zeta_cchd": zb}
        for cond in product(range(3), repeat=2):
            yield "esr", cond, base, ta, tb
        for t in T_VALUES:
            for cond in product(range(3), repeat=3):
                if sum(cond) <= 4:
                    yield "pqa", cond, {**base, "t": t}, ta, tb
        yield "two_esr", (1, 1, 1), base, ta, tb
        for n in range(3):
            yield "unassisted", (n,), {"eta_ch": zb}, ta, tb


def closed_form_distribution(arch, cond, setup, ta, tb) -> cd.CondDistribution:
    if arch == "esr":
        return cd.esr_cond_distribution(*cond, setup["zeta_cd"], setup["zeta_cchd"], ta, tb)
    if arch == "pqa":
        return cd.pqa_cond_distribution(*cond, setup["zeta_cd"], setup["zeta_cchd"], setup["t"],
                                        ta, tb)
    if arch == "two_esr":
        return cd.two_esr_cond_distribution(*cond, setup["zeta_cd"], setup["zeta_cchd"], ta, tb)
    return cd.unassisted_cond_distribution(*cond, setup["eta_ch"], ta, tb)


def check_oracle(tol: float = 1e-9) -> CheckResult:
    """Per-pattern agreement of the closed forms with the Fock-space simulation."""
    worst, count = 0.0, 0
    for arch, cond, setup, ta, tb in oracle_cases():
        ref = fo.oracle_cond_distribution(arch, cond, setup, ta, tb)
        got = closed_form_distribution(arch, cond, setup, ta, tb).entries()
        for key in set(ref) | set(got):
            worst = max(worst, abs(ref.get(key, 0.0) - got.get(key, 0.0)))
        count += 1
    return CheckResult("oracle equivalence", worst < tol, worst, tol, count)


def check_normalization(tol: float = 1e-9, noisy_tol: float = 1e-12,
                        p_d: float = 1e-7) -> list[CheckResult]:
    """Sum over patterns is one, with and without first-order dark counts."""
    clean, noisy, count = 0.0, 0.0, 0
    for arch, cond, setup, ta, tb in oracle_cases():
        dist = closed_form_distribution(arch, cond, setup, ta, tb)
        clean = max(clean, abs(dist.total() - 1))
        noisy = max(noisy, abs(cd.apply_dark_counts(dist, p_d).total() - 1))
        count += 1
    return [CheckResult("normalization (noiseless)", clean < tol, clean, tol, count),
            CheckResult("normalization (dark counts)", noisy < noisy_tol, noisy, noisy_tol, count)]


def check_closed_form(tol: float = 1e-9) -> CheckResult:
    """Pipeline observables against the ideal-source closed forms."""
    worst, count = 0.0, 0
    for xi in (1.0, 0.95, 0.9):
        eta = math.sqrt(xi)
        got = heralded_observables(make_setup("esr", eta_cd=eta))
        ref = esr_ideal_closed_form(xi)
        worst = max(worst, abs(got.p_sh - ref.p_sh), abs(got.omega_sh - ref.omega_sh),
                    abs(got.q_sh - ref.q_sh))
        count += 1
        for t in (0.3, 0.7, 0.95):
            got = heralded_observables(make_setup("pqa", eta_cd=eta, t=t))
            ref = pqa_ideal_closed_form(xi, t)
            worst = max(worst, abs(got.p_sh - ref.p_sh), abs(got.omega_sh - ref.omega_sh),
                        abs(got.q_sh - ref.q_sh))
            count += 1
    return CheckResult("closed-form observables", worst < tol, worst, tol, count)


def run_checks(scope: str = "all") -> list[CheckResult]:
    if scope not in SCOPES + ("all",):
        raise ValueError(f"unknown scope {scope!r}")
    out = []
    if scope in ("oracle", "all"):
        out.append(check_oracle())
    if scope in ("normalization", "all"):
        out.extend(check_normalization())
    if scope in ("closed-form", "all"):
        out.append(check_closed_form())
    return out
