"""Heralding probability, conditional QBER and CHSH winning probability."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import product

import numpy as np

from . import clickdist as cd
from .keyrate import TSIRELSON
from .sources import (PhotonStatistics, TriggeredSource, ideal_single_photon, ideal_statistics,
                      triggered_source)

ARCHITECTURES = ("esr", "pqa", "two_esr", "unassisted")
PI8 = math.pi / 8
PI4 = math.pi / 4
CHSH_ANGLES = ((0.0, -PI8), (0.0, PI8), (PI4, -PI8), (PI4, PI8))

# Index of the CHSH term carrying the minus sign, per architecture and herald.
# For the single-relay setups the pair shared after a same-port herald and a
# split-port herald differ, which moves the sign between the last two terms.
_MINUS_TERM = {
    ("esr", (1, 1, 0, 0)): 3, ("esr", (0, 0, 1, 1)): 3,
    ("esr", (0, 1, 1, 0)): 2, ("esr", (1, 0, 0, 1)): 2,
    ("pqa", (1, 1, 0, 0)): 2, ("pqa", (0, 0, 1, 1)): 2,
    ("pqa", (0, 1, 1, 0)): 3, ("pqa", (1, 0, 0, 1)): 3,
}
HERALD_COUNT = {"esr": 4, "pqa": 4, "two_esr": 16, "unassisted": 1}
ROLES = {"esr": ("ab", "cd"), "pqa": ("ab", "h", "v"), "two_esr": ("central", "alice", "bob"),
         "unassisted": ("ab",)}


@dataclass(frozen=True)
class TriggerSpec:
    """Triggered single-photon source; mu=None means an ideal deterministic photon."""

    mu: float | None = None
    n_max: int = 3


@dataclass(frozen=True)
class SetupParams:
    """Physical setup: efficiencies, channel loss (dB), noise and sources by role."""

    architecture: str = "esr"
    eta_c: float = 1.0
    eta_d: float = 1.0
    loss_db: float = 0.0
    p_d: float = 0.0
    t: float | None = None
    sources: tuple = ()

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        for name in ("eta_c", "eta_d"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name}={v} outside (0, 1]")
        if self.loss_db < 0:
            raise ValueError("channel loss must be non-negative")
        if not 0 <= self.p_d < 1:
            raise ValueError("dark-count rate outside [0, 1)")
        if self.architecture == "unassisted" and self.eta_c * self.eta_d != 1:
            raise ValueError("the unassisted model assumes eta_c = eta_d = 1")
        if self.architecture == "pqa":
            if self.t is None or not 0 <= self.t <= 1:
                raise ValueError("PQA needs a transmittance t in [0, 1]")

    @property
    def eta_ch(self) -> float:
        return 10 ** (-self.loss_db / 10)

    @property
    def zeta_cd(self) -> float:
        return self.eta_c * self.eta_d

    @property
    def zeta_cchd(self) -> float:
        """Efficiency of the arm crossing the channel; each half-channel for two relays."""
        if self.architecture == "two_esr":
            return self.eta_c * self.eta_d * 10 ** (-self.loss_db / 20)
        return self.eta_c * self.eta_ch * self.eta_d

    def source(self, role: str):
        mapping = dict(self.sources)
        if role in mapping:
            return mapping[role]
        return TriggerSpec() if role in ("h", "v") else ideal_statistics()

    def with_sources(self, **roles) -> "SetupParams":
        mapping = dict(self.sources)
        mapping.update(roles)
        return replace(self, sources=tuple(sorted(mapping.items())))


def make_setup(architecture="esr", eta_cd=1.0, loss_db=0.0, p_d=0.0, t=None, **sources):
    """Build a setup with eta_c = eta_d = eta_cd, sources given by role keyword."""
    return SetupParams(architecture, eta_cd, eta_cd, loss_db, p_d, t, tuple(sorted(sources.items())))


@dataclass
class HeraldedObservables:
    p_sh: float
    omega_sh: float
    q_sh: float
    s_sh: float
    feasible: bool = True
    p_omega: float = 0.0
    extra: dict = field(default_factory=dict)


def _trigger(spec, setup: SetupParams) -> TriggeredSource:
    if isinstance(spec, TriggeredSource):
        return spec
    if spec.mu is None:
        return ideal_single_photon()
    return triggered_source(spec.mu, setup.zeta_cd, setup.p_d, spec.n_max)


def mixture_weights(setup: SetupParams):
    """Conditioning tuples with their weights, and the trigger prefactor."""
    arch = setup.architecture
    if arch == "pqa":
        src = setup.source("ab")
        th, tv = _trigger(setup.source("h"), setup), _trigger(setup.source("v"), setup)
        supports = [src.support(), th.signal.support(), tv.signal.support()]
        pref = th.p_trigger * tv.p_trigger
    else:
        supports = [setup.source(r).support() for r in ROLES[arch]]
        pref = 1.0
    out = []
    for combo in product(*supports):
        w = math.prod(p for _, p in combo)
        if w > 0:
            out.append((tuple(n for n, _ in combo), w))
    return out, pref


def cond_distribution(arch, cond, setup: SetupParams, theta_a, theta_b, blocks=None):
    """Noiseless conditional distribution for one conditioning tuple."""
    blocks = None if blocks is None else tuple(blocks)
    if arch == "unassisted":
        return _cond(arch, tuple(cond), setup.eta_ch, 0.0, None, theta_a, theta_b, None)
    return _cond(arch, tuple(cond), setup.zeta_cd, setup.zeta_cchd, setup.t, theta_a, theta_b,
                 blocks)


# Intensity sweeps only reweight conditionings, so results are memoized.
@lru_cache(maxsize=16384)
def _cond(arch, cond, z1, z2, t, theta_a, theta_b, blocks):
    if arch == "esr":
        return cd.esr_cond_distribution(*cond, z1, z2, theta_a, theta_b, blocks)
    if arch == "pqa":
        return cd.pqa_cond_distribution(*cond, z1, z2, t, theta_a, theta_b, blocks)
    if arch == "two_esr":
        return cd.two_esr_cond_distribution(*cond, z1, z2, theta_a, theta_b, blocks)
    return cd.unassisted_cond_distribution(*cond, z1, theta_a, theta_b)


def set_cache_size(size: int) -> None:
    """Resize (and clear) the memo of per-conditioning distributions."""
    global _cond
    _cond = lru_cache(maxsize=size)(_cond.__wrapped__)


def _pad(arr: np.ndarray, dim: int) -> np.ndarray:
    if arr.shape[0] == dim:
        return arr
    out = np.zeros((dim,) * 4)
    s = arr.shape
    out[: s[0], : s[1], : s[2], : s[3]] = arr
    return out


def canonical_herald(arch: str) -> tuple:
    if arch == "two_esr":
        return cd.OMEGA + cd.OMEGA
    if arch == "unassisted":
        return ()
    return cd.OMEGA


def mixed_distribution(setup: SetupParams, theta_a: float, theta_b: float, blocks=None,
                       noisy: bool = True) -> cd.CondDistribution:
    """Source-averaged distribution restricted to ``blocks`` (plus what noise needs)."""
    arch = setup.architecture
    weights, _ = mixture_weights(setup)
    need = None if blocks is None else cd.closure(blocks)
    if arch == "unassisted":
        need = None
    parts = [(cond_distribution(arch, c, setup, theta_a, theta_b, need), w) for c, w in weights]
    dim = max(next(iter(d.tables.values())).shape[0] for d, _ in parts) + 1
    tables = {}
    for d, w in parts:
        for hb, arr in d.tables.items():
            if hb in tables:
                tables[hb] += w * _pad(arr, dim)
            else:
                tables[hb] = w * _pad(arr, dim)
    mix = cd.CondDistribution(arch, ("mixture",), {}, tables)
    if noisy and setup.p_d > 0:
        mix = cd.apply_dark_counts(mix, setup.p_d, extend=blocks is None)
    if blocks is not None:
        mix.tables = {hb: mix.tables[hb] for hb in blocks if hb in mix.tables}
    return mix


def binary_table(setup: SetupParams, theta_a: float, theta_b: float, herald=None) -> np.ndarray:
    """P(A_A, A_B, herald) after noise, flip and assignment."""
    arch = setup.architecture
    herald = canonical_herald(arch) if herald is None else tuple(herald)
    mix = mixed_distribution(setup, theta_a, theta_b, [herald])
    arr = mix.tables.get(herald)
    if arr is None:
        return np.zeros((2, 2))
    return cd.binary_outcomes(arr, cd.FLIP_ALICE[arch])


def minus_term(arch: str, herald) -> int:
    if arch in ("two_esr", "unassisted"):
        return 2
    return _MINUS_TERM[(arch, tuple(herald))]


def heralded_observables(setup: SetupParams, herald=None) -> HeraldedObservables:
    """(P_SH, omega|SH, Q|SH, S|SH) for the canonical herald (or the one given)."""
    arch = setup.architecture
    herald = canonical_herald(arch) if herald is None else tuple(herald)
    _, pref = mixture_weights(setup)
    zz = binary_table(setup, 0.0, 0.0, herald)
    p_omega = float(zz.sum())
    p_sh = HERALD_COUNT[arch] * pref * p_omega
    if arch == "unassisted":
        p_sh = p_omega
    extra = {"p_trigger_product": pref}
    if p_omega <= 0:
        return HeraldedObservables(0.0, float("nan"), float("nan"), float("nan"), False, 0.0, extra)
    q = float(zz[0, 1] + zz[1, 0]) / p_omega
    minus = minus_term(arch, herald)
    s = 0.0
    for k, (ta, tb) in enumerate(CHSH_ANGLES):
        tab = binary_table(setup, ta, tb, herald)
        e = 2 * float(tab[0, 0] + tab[1, 1]) / p_omega - 1
        s += -e if k == minus else e
    omega = s / 8 + 0.5
    return HeraldedObservables(p_sh, omega, q, s, True, p_omega, extra)


def esr_ideal_closed_form(xi: float) -> HeraldedObservables:
    """Ideal sources, no dark counts, no channel loss; xi = eta_cd^2."""
    if not 0 < xi <= 1:
        raise ValueError("xi must lie in (0, 1]")
    p = xi**2 / 2
    omega = TSIRELSON * xi**2 + 0.75 * (1 - xi) ** 2 + xi * (1 - xi)
    q = xi * (1 - xi)
    return HeraldedObservables(p, omega, q, 8 * (omega - 0.5), True, p / 4)


def pqa_ideal_closed_form(xi: float, t: float) -> HeraldedObservables:
    if not 0 < xi <= 1:
        raise ValueError("xi must lie in (0, 1]")
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    d = 1 - xi * (1 - t)
    p = (1 - t) * xi**2 * d
    omega = (TSIRELSON * t * xi**2 + 0.75 * (1 - xi) ** 2 + (1 + t) / 2 * xi * (1 - xi)) / d
    q = (1 + t) * xi * (1 - xi) / (2 * d)
    return HeraldedObservables(p, omega, q, 8 * (omega - 0.5), True, p / 4)


def expected_transmissions(n_sh: float, p_sh: float) -> float:
    """<N> = n_sh / P_SH, infinite when nothing heralds."""
    if p_sh <= 0:
        return math.inf
    return n_sh / p_sh


def esr_transmissions_closed_form(n_sh, eta_cd, eta_ch, p_d) -> float:
    """First-order-in-p_d <N> for the ESR with ideal sources."""
    x = eta_cd**2
    inner = (1 - 4 * p_d) * eta_ch * x + 4 * p_d * (1 + eta_ch * (1 - 2 * x))
    return 2 * n_sh / (x * inner)


def pqa_transmissions_closed_form(n_sh, eta_cd, eta_ch, p_d, t) -> float:
    x = eta_cd**2
    inner = (1 - 10 * p_d) * (1 - t) * eta_ch * x + 4 * p_d * (1 - t + eta_ch / 2)
    return n_sh / (x * (1 - x * (1 - t)) * inner)


def cutoff_loss_closed_form(n_sh: float, eta_cd: float, cap: float = 1e15) -> float:
    """Channel loss (dB) where the ideal ESR needs exactly ``cap`` signals at p_d = 0."""
    return 10 * math.log10(cap) - 10 * math.log10(2 * n_sh / eta_cd**4)
