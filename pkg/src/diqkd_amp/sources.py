"""Photon-pair number statistics for entanglement and triggered sources."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-12
DEFAULT_NMAX = 3


@dataclass(frozen=True)
class PhotonStatistics:
    """Truncated pair-number distribution p_0..p_nmax of one source.

    Attributes:
        probs: probabilities indexed by pair number.
        family: provenance tag (ideal, pdc, triggered, generic, custom).
        params: family parameters, kept for reporting.
    """

    probs: tuple[float, ...]
    family: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty list")
        if np.any(p < 0):
            raise ValueError(f"negative probability in {self.probs}")
        if abs(p.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")

    @property
    def n_max(self) -> int:
        return len(self.probs) - 1

    def __getitem__(self, n: int) -> float:
        return self.probs[n] if 0 <= n < len(self.probs) else 0.0

    def mean_pairs(self) -> float:
        """Half the mean photon number, i.e. the mean number of pairs over two."""
        return 0.5 * sum(n * p for n, p in enumerate(self.probs))

    def support(self) -> list[tuple[int, float]]:
        """Pairs (n, p_n) with p_n > 0."""
        return [(n, p) for n, p in enumerate(self.probs) if p > 0.0]


def _fold(head: list[float]) -> tuple[float, ...]:
    """Fold the truncated tail into the top bin."""
    top = 1.0 - math.fsum(head[:-1])
    out = list(head[:-1]) + [max(top, 0.0)]
    return tuple(out)


def ideal_statistics(n_max: int = DEFAULT_NMAX) -> PhotonStatistics:
    """Deterministic single-pair source, p_1 = 1."""
    probs = [0.0] * (max(n_max, 1) + 1)
    probs[1] = 1.0
    return PhotonStatistics(tuple(probs), "ideal", {})


def pdc_statistics(lam: float, n_max: int = DEFAULT_NMAX) -> PhotonStatistics:
    """Type-II PDC statistics p_n = (n+1) lam^n / (1+lam)^(n+2).

    Args:
        lam: intensity, half the expected number of pairs.
        n_max: truncation order; the tail mass goes into p_nmax.
    """
    if lam < 0:
        raise ValueError(f"negative PDC intensity {lam}")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    head = [(n + 1) * lam**n / (1 + lam) ** (n + 2) for n in range(n_max + 1)]
    return PhotonStatistics(_fold(head), "pdc", {"lam": lam})


def generic_statistics(p0: float, q: float) -> PhotonStatistics:
    """Three-bin statistics with vacuum p0 and double-to-single ratio q."""
    if not 0 <= p0 < 1:
        raise ValueError(f"p0 must lie in [0, 1), got {p0}")
    if q < 0:
        raise ValueError(f"q must be non-negative, got {q}")
    p1 = (1 - p0) / (1 + q)
    p2 = q * p1
    p0 = 1.0 - p1 - p2
    return PhotonStatistics((p0, p1, p2), "generic", {"p0": p0, "q": q})


def custom_statistics(probs) -> PhotonStatistics:
    return PhotonStatistics(tuple(float(p) for p in probs), "custom", {})


def lambda_from_p0(p0: float) -> float:
    """PDC intensity with vacuum probability p0 = 1/(1+lam)^2."""
    if not 0 < p0 <= 1:
        raise ValueError(f"p0 must lie in (0, 1], got {p0}")
    return p0**-0.5 - 1.0


def q_pdc(p0: float) -> float:
    """Double-to-single ratio p_2/p_1 of a PDC source with vacuum p0."""
    s = p0**-0.5
    return (s - 1.0) * (s + 2.0) / 2.0


def _thermal(mu: float, n_max: int) -> list[float]:
    return [mu**n / (1 + mu) ** (n + 1) for n in range(n_max + 1)]


@dataclass(frozen=True)
class TriggeredSource:
    """Heralded single-photon source: trigger probability and signal statistics."""

    p_trigger: float
    signal: PhotonStatistics


def triggered_source(
    mu: float, zeta_cd: float, p_d: float, n_max: int = DEFAULT_NMAX, pair_probs=None
) -> TriggeredSource:
    """Trigger probability and conditional signal statistics r_n.

    With ``pair_probs`` omitted the pair statistics are thermal with mean ``mu``
    (triggered PDC), and the infinite sums are done in closed form.

    Raises:
        ValueError: when a trigger is impossible (zeta_cd = 0 and p_d = 0).
    """
    if mu < 0:
        raise ValueError(f"negative mean pair number {mu}")
    if not 0 <= zeta_cd <= 1:
        raise ValueError(f"efficiency {zeta_cd} outside [0, 1]")
    if not 0 <= p_d < 1:
        raise ValueError(f"dark-count rate {p_d} outside [0, 1)")
    if zeta_cd == 0 and p_d == 0:
        raise ValueError("trigger impossible: zero efficiency and no dark counts")

    z = zeta_cd

    def weight(n: int) -> float:
        click = n * z * (1 - z) ** (n - 1) if n > 0 else 0.0
        dark = (1 - z) ** n
        return (1 - p_d) * click + p_d * dark

    if pair_probs is None:
        p_trig = (p_d + mu * z) / (1 + mu * z) ** 2
        pn = _thermal(mu, n_max)
    else:
        pn = list(pair_probs)
        p_trig = math.fsum(p * weight(n) for n, p in enumerate(pn))
    if p_trig <= 0:
        return TriggeredSource(0.0, PhotonStatistics((1.0,), "triggered", {"mu": mu}))
    r = [p * weight(n) / p_trig for n, p in enumerate(pn)]
    return TriggeredSource(p_trig, PhotonStatistics(_fold(r), "triggered", {"mu": mu}))


def ideal_single_photon() -> TriggeredSource:
    """Deterministic single photon with unit trigger probability."""
    return TriggeredSource(1.0, PhotonStatistics((0.0, 1.0), "ideal", {}))
