"""Brute-force sparse Fock-space simulator of the optical circuits.

Each two-mode element is applied as the matrix exponential of its generator
on every fixed-photon-number block, so the oracle shares no combinatorial
code with the closed forms in :mod:`diqkd_amp.clickdist`.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

PRUNE_TOL = 1e-15

H, V = "h", "v"


@dataclass(frozen=True, order=True)
class ModeIndex:
    spatial: str
    pol: str

    def __post_init__(self):
        if self.pol not in (H, V):
            raise ValueError(f"unknown polarization {self.pol!r}")

    def __str__(self):
        return f"{self.spatial}_{self.pol}"


def modes_for(spatial_labels) -> tuple[ModeIndex, ...]:
    """Both polarizations of each spatial label, in sorted order."""
    return tuple(sorted(ModeIndex(s, p) for s in spatial_labels for p in (H, V)))


class FockState:
    """Sparse map from occupation vectors to complex amplitudes."""

    def __init__(self, modes, amplitudes=None, truncation: int | None = None, prune: bool = True):
        self.modes = tuple(modes)
        if len(set(self.modes)) != len(self.modes):
            raise ValueError("duplicate mode in circuit")
        self.index = {m: k for k, m in enumerate(self.modes)}
        self.amplitudes: dict[tuple[int, ...], complex] = dict(amplitudes or {})
        self.truncation = truncation
        self.prune = prune
        if truncation is not None:
            for occ in self.amplitudes:
                if sum(occ) > truncation:
                    raise ValueError(f"occupation {occ} exceeds truncation {truncation}")

    @classmethod
    def vacuum(cls, modes, truncation=None, prune=True):
        modes = tuple(modes)
        return cls(modes, {(0,) * len(modes): 1.0 + 0j}, truncation, prune)

    def copy_with(self, amplitudes):
        if self.prune:
            amplitudes = {k: a for k, a in amplitudes.items() if abs(a) > PRUNE_TOL}
        return FockState(self.modes, amplitudes, self.truncation, self.prune)

    def norm2(self) -> float:
        return math.fsum(abs(a) ** 2 for a in self.amplitudes.values())

    def photon_number(self) -> set[int]:
        return {sum(o) for o in self.amplitudes}

    def amplitude(self, occupation: dict) -> complex:
        occ = [0] * len(self.modes)
        for m, k in occupation.items():
            occ[self.index[m]] = k
        return self.amplitudes.get(tuple(occ), 0.0)

    def create(self, mode: ModeIndex) -> "FockState":
        """Apply a creation operator on one mode."""
        k = self.index[mode]
        out = {}
        for occ, a in self.amplitudes.items():
            new = list(occ)
            new[k] += 1
            out[tuple(new)] = a * math.sqrt(new[k])
        return self.copy_with(out)

    def __add__(self, other: "FockState") -> "FockState":
        out = defaultdict(complex, self.amplitudes)
        for occ, a in other.amplitudes.items():
            out[occ] += a
        return self.copy_with(dict(out))

    def scale(self, c: complex) -> "FockState":
        return self.copy_with({k: c * a for k, a in self.amplitudes.items()})


@lru_cache(maxsize=None)
def _mixing_block(n_total: int, phi: float) -> np.ndarray:
    """Unitary on the (k, n_total - k) block for x -> cos x + sin y, y -> cos y - sin x."""
    dim = n_total + 1
    gen = np.zeros((dim, dim))
    for k in range(dim):
        # y^dag x moves a photon from x to y: |k, N-k> -> |k-1, N-k+1>
        if k > 0:
            gen[k - 1, k] += math.sqrt(k * (n_total - k + 1))
        # x^dag y moves a photon from y to x
        if k < n_total:
            gen[k + 1, k] -= math.sqrt((k + 1) * (n_total - k))
    return expm(phi * gen)


def _mix(state: FockState, x: ModeIndex, y: ModeIndex, phi: float) -> FockState:
    """x^dag -> cos(phi) x^dag + sin(phi) y^dag ; y^dag -> cos(phi) y^dag - sin(phi) x^dag."""
    ix, iy = state.index[x], state.index[y]
    out = defaultdict(complex)
    for occ, a in state.amplitudes.items():
        nx, ny = occ[ix], occ[iy]
        n_tot = nx + ny
        if n_tot == 0:
            out[occ] += a
            continue
        col = _mixing_block(n_tot, phi)[:, nx]
        base = list(occ)
        for k in range(n_tot + 1):
            c = col[k]
            if c == 0.0:
                continue
            base[ix], base[iy] = k, n_tot - k
            out[tuple(base)] += a * c
    return state.copy_with(dict(out))


def build_pair_state(n: int, modes, truncation: int | None = None, form: str = "singlet",
                     all_modes=None) -> FockState:
    """Normalized pair state on spatial modes (a, b).

    ``form="singlet"`` gives (a_h b_v - a_v b_h)^n |0> / (n! sqrt(n+1));
    ``form="product"`` gives (a^dag b^dag)^n |0> / n! on the h modes.
    """
    if n < 0:
        raise ValueError("pair number must be non-negative")
    if truncation is not None and truncation < 2 * n:
        raise ValueError(f"truncation {truncation} below photon number {2 * n}")
    a, b = modes
    circuit = tuple(all_modes) if all_modes is not None else modes_for((a, b))
    ah, av, bh, bv = (ModeIndex(a, H), ModeIndex(a, V), ModeIndex(b, H), ModeIndex(b, V))
    state = FockState.vacuum(circuit, truncation)
    for _ in range(n):
        if form == "singlet":
            state = state.create(bv).create(ah) + state.create(bh).create(av).scale(-1)
        elif form == "product":
            state = state.create(bh).create(ah)
        else:
            raise ValueError(f"unknown pair form {form!r}")
    norm = math.factorial(n) * (math.sqrt(n + 1) if form == "singlet" else 1.0)
    return state.scale(1.0 / norm)


def fock_product(counts: dict, all_modes, truncation=None) -> FockState:
    """Normalized product of Fock states, counts keyed by ModeIndex."""
    state = FockState.vacuum(all_modes, truncation)
    norm = 1.0
    for mode, k in counts.items():
        for _ in range(k):
            state = state.create(mode)
        norm *= math.sqrt(math.factorial(k))
    return state.scale(1.0 / norm)


def apply_bs(state: FockState, modes, transmittance: float) -> FockState:
    """Beamsplitter on spatial modes (a, b), both polarizations.

    a^dag -> sqrt(T) a^dag + sqrt(1-T) b^dag, b^dag -> sqrt(T) b^dag - sqrt(1-T) a^dag,
    so mode a carries the transmitted signal and b the reflected/loss port.
    """
    if not 0 <= transmittance <= 1:
        raise ValueError(f"transmittance {transmittance} outside [0, 1]")
    a, b = modes
    phi = math.acos(math.sqrt(transmittance))
    for pol in (H, V):
        x, y = ModeIndex(a, pol), ModeIndex(b, pol)
        if x not in state.index or y not in state.index:
            raise KeyError(f"missing mode {x} or {y}")
        state = _mix(state, x, y, phi)
    return state


def apply_rotation(state: FockState, spatial: str, theta: float) -> FockState:
    """Polarization rotation: h -> cos h + sin v, v -> cos v - sin h."""
    x, y = ModeIndex(spatial, H), ModeIndex(spatial, V)
    if x not in state.index or y not in state.index:
        raise KeyError(f"spatial mode {spatial!r} lacks a polarization")
    return _mix(state, x, y, theta)


def measure_pnr(state: FockState, detector_modes) -> dict[tuple[int, ...], float]:
    """Click-pattern distribution on the listed modes, marginalizing the rest."""
    detector_modes = tuple(detector_modes)
    if len(set(detector_modes)) != len(detector_modes):
        raise ValueError("detector modes are not disjoint")
    idx = [state.index[m] for m in detector_modes]
    acc = defaultdict(list)
    for occ, a in state.amplitudes.items():
        acc[tuple(occ[i] for i in idx)].append(abs(a) ** 2)
    return {k: math.fsum(v) for k, v in acc.items()}


ARCHITECTURES = ("esr", "pqa", "two_esr", "unassisted")


def _det(*pairs):
    return tuple(ModeIndex(s, p) for s, p in pairs)


def oracle_cond_distribution(arch: str, pair_counts, setup: dict, theta_a: float,
                             theta_b: float, prune: bool = True) -> dict:
    """Noiseless click distribution of one architecture by direct simulation.

    ``setup`` holds ``zeta_cd``, ``zeta_cchd`` (``eta_ch`` for unassisted) and
    ``t`` for the PQA.
    """
    if arch == "esr":
        n, n2 = pair_counts
        modes = modes_for("abcdfgpq")
        st = build_pair_state(n, ("a", "b"), all_modes=modes)
        st2 = build_pair_state(n2, ("c", "d"), all_modes=modes)
        st = _tensor(st, st2)
        st = apply_bs(st, ("a", "f"), setup["zeta_cd"])
        st = apply_bs(st, ("b", "g"), setup["zeta_cchd"])
        st = apply_bs(st, ("c", "p"), setup["zeta_cd"])
        st = apply_bs(st, ("d", "q"), setup["zeta_cd"])
        st = apply_bs(st, ("b", "c"), 0.5)
        st = apply_rotation(st, "a", theta_a)
        st = apply_rotation(st, "d", theta_b)
        det = _det(("a", H), ("a", V), ("d", H), ("d", V), ("c", H), ("c", V), ("b", H), ("b", V))
    elif arch == "pqa":
        n, n1, n2 = pair_counts
        modes = modes_for("abcdfgp")
        st = build_pair_state(n, ("a", "b"), all_modes=modes)
        st = _tensor(st, fock_product({ModeIndex("d", H): n1, ModeIndex("d", V): n2}, modes))
        st = apply_bs(st, ("a", "f"), setup["zeta_cd"])
        st = apply_bs(st, ("b", "g"), setup["zeta_cchd"])
        st = apply_bs(st, ("d", "p"), setup["zeta_cd"])
        st = apply_bs(st, ("d", "c"), setup["t"])
        st = apply_rotation(st, "d", math.pi / 4)
        st = apply_rotation(st, "c", math.pi / 4)
        st = apply_bs(st, ("b", "c"), 0.5)
        st = apply_rotation(st, "a", theta_a)
        st = apply_rotation(st, "d", theta_b)
        det = _det(("a", H), ("a", V), ("d", H), ("d", V), ("c", H), ("c", V), ("b", H), ("b", V))
    elif arch == "two_esr":
        n1, n2, n3 = pair_counts
        modes = modes_for("abcdefgkpqrs")
        st = build_pair_state(n1, ("a", "b"), all_modes=modes)
        st = _tensor(st, build_pair_state(n2, ("e", "f"), all_modes=modes))
        st = _tensor(st, build_pair_state(n3, ("c", "d"), all_modes=modes))
        half = setup["zeta_cchd"]
        st = apply_bs(st, ("a", "g"), half)
        st = apply_bs(st, ("b", "k"), half)
        st = apply_bs(st, ("e", "p"), setup["zeta_cd"])
        st = apply_bs(st, ("f", "q"), setup["zeta_cd"])
        st = apply_bs(st, ("c", "r"), setup["zeta_cd"])
        st = apply_bs(st, ("d", "s"), setup["zeta_cd"])
        st = apply_bs(st, ("a", "e"), 0.5)
        st = apply_bs(st, ("b", "c"), 0.5)
        st = apply_rotation(st, "f", theta_a)
        st = apply_rotation(st, "d", theta_b)
        det = _det(("f", H), ("f", V), ("d", H), ("d", V),
                   ("e", H), ("e", V), ("a", H), ("a", V),
                   ("c", H), ("c", V), ("b", H), ("b", V))
    elif arch == "unassisted":
        (n,) = pair_counts
        modes = modes_for("abg")
        st = build_pair_state(n, ("a", "b"), all_modes=modes)
        st = apply_bs(st, ("b", "g"), setup["eta_ch"])
        st = apply_rotation(st, "a", theta_a)
        st = apply_rotation(st, "b", theta_b)
        det = _det(("a", H), ("a", V), ("b", H), ("b", V))
    else:
        raise ValueError(f"unsupported architecture {arch!r}")
    if not prune:
        st.prune = False
    return measure_pnr(st, det)


def _tensor(s1: FockState, s2: FockState) -> FockState:
    """Product of two states on the same mode set with disjoint supports."""
    if s1.modes != s2.modes:
        raise ValueError("states live on different circuits")
    out = defaultdict(complex)
    for o1, a1 in s1.amplitudes.items():
        for o2, a2 in s2.amplitudes.items():
            if any(x and y for x, y in zip(o1, o2)):
                raise ValueError("tensor product of overlapping modes")
            out[tuple(x + y for x, y in zip(o1, o2))] += a1 * a2
    return s1.copy_with(dict(out))
