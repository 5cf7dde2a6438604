"""Closed-form conditional click-pattern distributions.

Every optical element contributes an explicit combinatorial amplitude
(loss splitting, polarization rotation, 50:50 interference, tunable
beamsplitter).  Amplitudes are evaluated with cached log-factorials, an
explicit sign bit and non-negative trigonometric and efficiency exponents,
so summands at sin = 0, cos = 0 or unit efficiency need no special casing.
The squared norm over the loss modes is taken by contracting per-block
reduced densities over the coherent source indices.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

CLIP_TOL = 1e-12
_MAX_FACT = 128
_LOGFACT = np.array([math.lgamma(k + 1) for k in range(_MAX_FACT)])

NUM_DETECTORS = {"esr": 8, "pqa": 8, "two_esr": 12, "unassisted": 4}
HERALD_SIZE = {"esr": 4, "pqa": 4, "two_esr": 8, "unassisted": 0}
OMEGA = (1, 1, 0, 0)
HERALDS = ((1, 1, 0, 0), (0, 1, 1, 0), (1, 0, 0, 1), (0, 0, 1, 1))

_clip_lock = threading.Lock()
clip_count = 0


def log_binom(n: int, k: int) -> float:
    if n < _MAX_FACT:
        return _LOGFACT[n] - _LOGFACT[k] - _LOGFACT[n - k]
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _term(sign: int, log_mag: float, factors) -> float:
    """sign * exp(log_mag) * prod(base ** exponent) with integer exponents >= 0."""
    val = 1.0
    for base, e in factors:
        if e < 0:
            raise AssertionError(f"negative exponent {e} on base {base}")
        if e:
            val *= base**e
    return sign * math.exp(log_mag) * val


def _fsum(terms) -> float:
    return math.fsum(terms)


def _q(x: float) -> float:
    """Quantize a float for cache keys."""
    return float(f"{x:.12g}")


# Elementary amplitudes


@lru_cache(maxsize=None)
def loss_amp(m: int, lost: int, zeta: float) -> float:
    """Amplitude of keeping m - lost photons out of m, with sqrt(lost!) normalization."""
    if lost < 0 or lost > m:
        return 0.0
    t, r = math.sqrt(zeta), math.sqrt(1.0 - zeta)
    return _term(1, log_binom(m, lost) + 0.5 * _LOGFACT[lost], ((t, m - lost), (r, lost)))


@lru_cache(maxsize=None)
def rotation_poly(h_in: int, v_in: int, theta: float) -> tuple[float, ...]:
    """Coefficients c_alpha of h^alpha v^(N-alpha) in (cos h + sin v)^h_in (cos v - sin h)^v_in."""
    c, s = math.cos(theta), math.sin(theta)
    n = h_in + v_in
    out = []
    for alpha in range(n + 1):
        terms = []
        # j photons stay h, alpha - j come from v
        for j in range(max(0, alpha - v_in), min(h_in, alpha) + 1):
            u = alpha - j
            e_cos = j + (v_in - u)
            e_sin = (h_in - j) + u
            terms.append(_term((-1) ** u, log_binom(h_in, j) + log_binom(v_in, u),
                               ((c, e_cos), (s, e_sin))))
        out.append(_fsum(terms))
    return tuple(out)


@lru_cache(maxsize=None)
def interference_poly(k: int, t: int) -> tuple[float, ...]:
    """50:50 interference b^k c^t -> sum_tau coef * b2^tau c2^(k+t-tau), b -> (b2+c2)/sqrt2, c -> (c2-b2)/sqrt2."""
    out = []
    for tau in range(k + t + 1):
        terms = []
        for u in range(max(0, tau - k), min(t, tau) + 1):
            terms.append(_term((-1) ** u, log_binom(k, tau - u) + log_binom(t, u), ()))
        out.append(_fsum(terms) * 2.0 ** (-(k + t) / 2))
    return tuple(out)


@lru_cache(maxsize=None)
def split_amp(m: int, kept: int, t: float) -> float:
    """Tunable beamsplitter: amplitude of kept photons transmitted out of m."""
    if kept < 0 or kept > m:
        return 0.0
    return _term(1, log_binom(m, kept), ((math.sqrt(t), kept), (math.sqrt(1.0 - t), m - kept)))


def _sqrt_fact(k: int) -> float:
    return math.exp(0.5 * _LOGFACT[k])


# Reduced densities


def party_density(inputs, zeta: float, theta: float, dim: int) -> np.ndarray:
    """rho[i, i', alpha, beta] for a measured party.

    ``inputs[i]`` is the (h, v) photon count entering the party's loss
    beamsplitter for source index i.  The loss-mode occupations are traced out.
    """
    zeta = _q(zeta)
    return _party_density(tuple(inputs), zeta, theta, dim)


@lru_cache(maxsize=4096)
def _party_density(inputs, zeta, theta, dim):
    nidx = len(inputs)
    amps = {}
    for i, (h_in, v_in) in enumerate(inputs):
        for fh in range(h_in + 1):
            for fv in range(v_in + 1):
                xh, xv = h_in - fh, v_in - fv
                pre = loss_amp(h_in, fh, zeta) * loss_amp(v_in, fv, zeta)
                if pre == 0.0:
                    continue
                rot = rotation_poly(xh, xv, theta)
                arr = amps.setdefault((fh, fv), np.zeros((nidx, dim, dim)))
                n = xh + xv
                for alpha in range(n + 1):
                    beta = n - alpha
                    arr[i, alpha, beta] += pre * rot[alpha] * _sqrt_fact(alpha) * _sqrt_fact(beta)
    rho = np.zeros((nidx, nidx, dim, dim))
    for arr in amps.values():
        rho += np.einsum("iab,jab->ijab", arr, arr)
    return rho


def _herald_index(blocks):
    return {b: k for k, b in enumerate(blocks)}


def bsm_density(b_inputs, c_inputs, zeta_b: float, zeta_c: float, blocks) -> np.ndarray:
    """rho[i, i', x, x', B] for a 50:50 Bell-state measurement.

    Mode b (the incoming arm) and mode c (the local source arm) each pass their
    own loss beamsplitter before interfering.  ``blocks`` lists the herald
    tuples (mu, nu, tau, lam) to keep; mu/nu count the c output port.
    """
    return _bsm_density(tuple(b_inputs), tuple(c_inputs), _q(zeta_b), _q(zeta_c), tuple(blocks))


@lru_cache(maxsize=2048)
def _bsm_density(b_inputs, c_inputs, zeta_b, zeta_c, blocks):
    nb, nc, nB = len(b_inputs), len(c_inputs), len(blocks)
    index = _herald_index(blocks)
    amps = {}
    for i, (bh, bv) in enumerate(b_inputs):
        for x, (ch, cv) in enumerate(c_inputs):
            for gh, gv, ph, pv in product(range(bh + 1), range(bv + 1), range(ch + 1), range(cv + 1)):
                pre = (loss_amp(bh, gh, zeta_b) * loss_amp(bv, gv, zeta_b)
                       * loss_amp(ch, ph, zeta_c) * loss_amp(cv, pv, zeta_c))
                if pre == 0.0:
                    continue
                k, m, t, y = bh - gh, bv - gv, ch - ph, cv - pv
                ih, iv = interference_poly(k, t), interference_poly(m, y)
                arr = None
                for tau in range(k + t + 1):
                    mu = k + t - tau
                    for lam in range(m + y + 1):
                        nu = m + y - lam
                        b = index.get((mu, nu, tau, lam))
                        if b is None:
                            continue
                        if arr is None:
                            arr = amps.setdefault((gh, gv, ph, pv), np.zeros((nb, nc, nB)))
                        norm = _sqrt_fact(mu) * _sqrt_fact(nu) * _sqrt_fact(tau) * _sqrt_fact(lam)
                        arr[i, x, b] += pre * ih[tau] * iv[lam] * norm
    rho = np.zeros((nb, nb, nc, nc, nB))
    for arr in amps.values():
        rho += np.einsum("ixB,jyB->ijxyB", arr, arr)
    return rho


def _pair_terms(n: int):
    """Source coefficients and mode contents of (a_h b_v - a_v b_h)^n / (n! sqrt(n+1)).

    Term i is (a_v b_h)^i (a_h b_v)^(n-i); returns (coef, first=(h, v), second=(h, v)).
    """
    out = []
    for i in range(n + 1):
        coef = _term((-1) ** i, log_binom(n, i) - _LOGFACT[n] - 0.5 * math.log(n + 1), ())
        out.append((coef, (n - i, i), (i, n - i)))
    return out


def all_blocks(total: int, size: int = 4):
    """All herald tuples of the given length with sum <= total."""
    return [b for b in product(range(total + 1), repeat=size) if sum(b) <= total]


def closure(blocks):
    """Blocks plus every block one count below them (needed for dark counts)."""
    out = set(blocks)
    for b in blocks:
        for c, v in enumerate(b):
            if v > 0:
                out.add(b[:c] + (v - 1,) + b[c + 1:])
    return sorted(out)


# Distribution container


@dataclass
class CondDistribution:
    """Click-pattern probabilities stored as party-count arrays per herald block.

    ``tables[H][alpha, beta, gamma, delta]`` is the probability of the pattern
    (alpha, beta, gamma, delta) + H.
    """

    arch: str
    conditioning: tuple
    params: dict
    tables: dict
    noise_applied: bool = False
    clipped: int = field(default=0, compare=False)

    @property
    def num_detectors(self) -> int:
        return NUM_DETECTORS[self.arch]

    def entries(self, tol: float = 0.0) -> dict:
        out = {}
        for h, arr in self.tables.items():
            for idx in zip(*np.nonzero(arr > tol)):
                out[tuple(int(v) for v in idx) + h] = float(arr[idx])
        return out

    def prob(self, pattern) -> float:
        pattern = tuple(pattern)
        arr = self.tables.get(pattern[4:])
        if arr is None:
            return 0.0
        idx = pattern[:4]
        if any(v >= s for v, s in zip(idx, arr.shape)):
            return 0.0
        return float(arr[idx])

    def total(self) -> float:
        return math.fsum(math.fsum(a.ravel()) for a in self.tables.values())

    def herald_marginal(self, block) -> float:
        arr = self.tables.get(tuple(block))
        return 0.0 if arr is None else math.fsum(arr.ravel())


def _finish(arch, cond, params, tables) -> CondDistribution:
    global clip_count
    clipped = 0
    out = {}
    for h, arr in tables.items():
        worst = arr.min() if arr.size else 0.0
        if worst < -CLIP_TOL:
            raise ArithmeticError(f"probability {worst} below clip tolerance for {arch} {cond} {h}")
        neg = arr < 0
        if neg.any():
            clipped += int(neg.sum())
            arr = np.where(neg, 0.0, arr)
        out[h] = arr
    if clipped:
        with _clip_lock:
            clip_count += clipped
    return CondDistribution(arch, tuple(cond), params, out, False, clipped)


def _tables_from(p: np.ndarray, blocks) -> dict:
    return {tuple(b): np.ascontiguousarray(p[..., k]) for k, b in enumerate(blocks)}


def _check_eff(*zetas):
    for z in zetas:
        if not 0 <= z <= 1:
            raise ValueError(f"efficiency {z} outside [0, 1]")


# Architectures


def esr_cond_distribution(n: int, n2: int, zeta_cd: float, zeta_cchd: float,
                          theta_a: float, theta_b: float, blocks=None) -> CondDistribution:
    """Noiseless ESR distribution conditioned on pair numbers (n, n2).

    Pattern order (alpha, beta, gamma, delta, mu, nu, tau, lam).  ``blocks``
    restricts the herald blocks computed; None means the full support.
    """
    _check_eff(zeta_cd, zeta_cchd)
    if blocks is None:
        blocks = all_blocks(n + n2)
    blocks = list(blocks)
    dim = max(n, n2) + 2
    s1, s2 = _pair_terms(n), _pair_terms(n2)
    c1 = np.array([t[0] for t in s1])
    c2 = np.array([t[0] for t in s2])
    rho_a = party_density([t[1] for t in s1], zeta_cd, theta_a, dim)
    rho_d = party_density([t[2] for t in s2], zeta_cd, theta_b, dim)
    rho_m = bsm_density([t[2] for t in s1], [t[1] for t in s2], zeta_cchd, zeta_cd, blocks)
    p = np.einsum("i,j,x,y,ijab,xycd,ijxyB->abcdB", c1, c1, c2, c2, rho_a, rho_d, rho_m,
                  optimize=True)
    params = {"zeta_cd": zeta_cd, "zeta_cchd": zeta_cchd, "theta_a": theta_a, "theta_b": theta_b}
    return _finish("esr", (n, n2), params, _tables_from(p, blocks))


@lru_cache(maxsize=4096)
def _pqa_inner(x: int, y: int, k: int, m: int, t: float, theta_b: float, blocks, dim):
    """Amplitudes F[gamma, delta, B] of the amplifier optics for fixed input photons.

    x, y: h and v photons surviving the triggered-source loss in mode d;
    k, m: h and v photons of the incoming arm b.
    """
    index = _herald_index(blocks)
    out = np.zeros((dim, dim, len(blocks)))
    for z in range(x + 1):
        for w in range(y + 1):
            pre = split_amp(x, z, t) * split_amp(y, w, t)
            if pre == 0.0:
                continue
            # Hadamard then Bob's setting: a single rotation by pi/4 + theta_b
            rot_d = rotation_poly(z, w, math.pi / 4 + theta_b)
            had_c = rotation_poly(x - z, y - w, math.pi / 4)
            nc = x - z + y - w
            for rh in range(nc + 1):
                rv = nc - rh
                ih, iv = interference_poly(k, rh), interference_poly(m, rv)
                for tau in range(k + rh + 1):
                    mu = k + rh - tau
                    for lam in range(m + rv + 1):
                        nu = m + rv - lam
                        b = index.get((mu, nu, tau, lam))
                        if b is None:
                            continue
                        amp_c = pre * had_c[rh] * ih[tau] * iv[lam]
                        if amp_c == 0.0:
                            continue
                        norm = _sqrt_fact(mu) * _sqrt_fact(nu) * _sqrt_fact(tau) * _sqrt_fact(lam)
                        for gamma in range(z + w + 1):
                            delta = z + w - gamma
                            out[gamma, delta, b] += (amp_c * norm * rot_d[gamma]
                                                     * _sqrt_fact(gamma) * _sqrt_fact(delta))
    return out


@lru_cache(maxsize=1024)
def _pqa_rest_density(b_inputs, n1, n2, zeta_cd, zeta_cchd, t, theta_b, blocks, dim):
    nidx = len(b_inputs)
    amps = {}
    d_norm = 1.0 / (_sqrt_fact(n1) * _sqrt_fact(n2))
    for i, (bh, bv) in enumerate(b_inputs):
        for gh, gv, ph, pv in product(range(bh + 1), range(bv + 1), range(n1 + 1), range(n2 + 1)):
            pre = (loss_amp(bh, gh, zeta_cchd) * loss_amp(bv, gv, zeta_cchd)
                   * loss_amp(n1, ph, zeta_cd) * loss_amp(n2, pv, zeta_cd) * d_norm)
            if pre == 0.0:
                continue
            f = _pqa_inner(n1 - ph, n2 - pv, bh - gh, bv - gv, t, theta_b, blocks, dim)
            arr = amps.setdefault((gh, gv, ph, pv), np.zeros((nidx, dim, dim, len(blocks))))
            arr[i] += pre * f
    rho = np.zeros((nidx, nidx, dim, dim, len(blocks)))
    for arr in amps.values():
        rho += np.einsum("icdB,jcdB->ijcdB", arr, arr)
    return rho


def pqa_cond_distribution(n: int, n1: int, n2: int, zeta_cd: float, zeta_cchd: float, t: float,
                          theta_a: float, theta_b: float, blocks=None) -> CondDistribution:
    """Noiseless PQA distribution conditioned on (n, n1, n2) and a double trigger.

    n1 (n2) is the photon number of the h (v) triggered source.
    """
    _check_eff(zeta_cd, zeta_cchd)
    if not 0 <= t <= 1:
        raise ValueError(f"transmittance {t} outside [0, 1]")
    if blocks is None:
        blocks = all_blocks(n + n1 + n2)
    blocks = tuple(blocks)
    dim = max(n, n1 + n2) + 2
    s1 = _pair_terms(n)
    c1 = np.array([s[0] for s in s1])
    rho_a = party_density([s[1] for s in s1], zeta_cd, theta_a, dim)
    rho_r = _pqa_rest_density(tuple(s[2] for s in s1), n1, n2, _q(zeta_cd), _q(zeta_cchd), _q(t),
                              theta_b, blocks, dim)
    p = np.einsum("i,j,ijab,ijcdB->abcdB", c1, c1, rho_a, rho_r, optimize=True)
    params = {"zeta_cd": zeta_cd, "zeta_cchd": zeta_cchd, "t": t,
              "theta_a": theta_a, "theta_b": theta_b}
    return _finish("pqa", (n, n1, n2), params, _tables_from(p, blocks))


def two_esr_cond_distribution(n1: int, n2: int, n3: int, zeta_cd: float, zeta_cchd: float,
                              theta_a: float, theta_b: float, blocks=None) -> CondDistribution:
    """Noiseless distribution with a central source and an ESR on each side.

    n1: central source; n2: Alice's relay source; n3: Bob's relay source.
    ``zeta_cchd`` is the efficiency of each half of the channel.  ``blocks``
    lists 8-tuples (Alice's relay counts followed by Bob's).
    """
    _check_eff(zeta_cd, zeta_cchd)
    if blocks is None:
        blocks = [ba + bb for ba in all_blocks(n1 + n2) for bb in all_blocks(n1 + n3)]
    blocks = list(blocks)
    blocks_a = sorted({b[:4] for b in blocks})
    blocks_b = sorted({b[4:] for b in blocks})
    dim = max(n2, n3) + 2
    s1, s2, s3 = _pair_terms(n1), _pair_terms(n2), _pair_terms(n3)
    c1, c2, c3 = (np.array([s[0] for s in src]) for src in (s1, s2, s3))
    rho_alice = party_density([s[2] for s in s2], zeta_cd, theta_a, dim)
    rho_bob = party_density([s[2] for s in s3], zeta_cd, theta_b, dim)
    rho_ma = bsm_density([s[1] for s in s1], [s[1] for s in s2], zeta_cchd, zeta_cd, blocks_a)
    rho_mb = bsm_density([s[2] for s in s1], [s[1] for s in s3], zeta_cchd, zeta_cd, blocks_b)
    p = np.einsum("i,j,x,y,u,v,xyab,uvcd,ijxyA,ijuvB->abcdAB",
                  c1, c1, c2, c2, c3, c3, rho_alice, rho_bob, rho_ma, rho_mb, optimize=True)
    ia, ib = _herald_index(blocks_a), _herald_index(blocks_b)
    tables = {tuple(b): np.ascontiguousarray(p[..., ia[b[:4]], ib[b[4:]]]) for b in blocks}
    params = {"zeta_cd": zeta_cd, "zeta_cchd": zeta_cchd, "theta_a": theta_a, "theta_b": theta_b}
    return _finish("two_esr", (n1, n2, n3), params, tables)


def unassisted_cond_distribution(n: int, eta_ch: float, theta_a: float,
                                 theta_b: float) -> CondDistribution:
    """Distribution without an amplifier: lossless Alice, channel loss on Bob's arm."""
    _check_eff(eta_ch)
    dim = n + 2
    s1 = _pair_terms(n)
    c1 = np.array([s[0] for s in s1])
    rho_a = party_density([s[1] for s in s1], 1.0, theta_a, dim)
    rho_b = party_density([s[2] for s in s1], eta_ch, theta_b, dim)
    p = np.einsum("i,j,ijab,ijcd->abcd", c1, c1, rho_a, rho_b, optimize=True)
    params = {"eta_ch": eta_ch, "theta_a": theta_a, "theta_b": theta_b}
    return _finish("unassisted", (n,), params, {(): p})


# Noise and post-processing


def apply_dark_counts(dist: CondDistribution, p_d: float, num_detectors: int | None = None,
                      extend: bool = True) -> CondDistribution:
    """First-order dark-count noise.

    P~(a) = (1 - D p_d) P(a) + p_d * sum of P(s) over patterns s one count below a.
    With ``extend`` the herald blocks one count above the computed ones are
    added so the result stays exactly normalized.
    """
    if dist.noise_applied:
        raise ValueError("dark counts already applied")
    d = num_detectors if num_detectors is not None else dist.num_detectors
    if d != dist.num_detectors:
        raise ValueError(f"{dist.arch} has {dist.num_detectors} detectors, got {d}")
    tables = dist.tables
    keys = set(tables)
    if extend:
        for h in list(tables):
            for c in range(len(h)):
                keys.add(h[:c] + (h[c] + 1,) + h[c + 1:])
    shape = next(iter(tables.values())).shape
    zero = np.zeros(shape)
    out = {}
    for h in sorted(keys):
        base = tables.get(h, zero)
        shifted = np.zeros(shape)
        for ax in range(4):
            sl_dst = [slice(None)] * 4
            sl_src = [slice(None)] * 4
            sl_dst[ax] = slice(1, None)
            sl_src[ax] = slice(0, -1)
            shifted[tuple(sl_dst)] += base[tuple(sl_src)]
        for c, v in enumerate(h):
            if v > 0:
                shifted += tables.get(h[:c] + (v - 1,) + h[c + 1:], zero)
        out[h] = (1.0 - d * p_d) * base + p_d * shifted
    return CondDistribution(dist.arch, dist.conditioning, dict(dist.params, p_d=p_d), out, True,
                            dist.clipped)


def binary_outcomes(arr: np.ndarray, flip_alice: bool) -> np.ndarray:
    """Collapse a party-count array [alpha, beta, gamma, delta] to P[A_A, A_B].

    A party outputs 0 iff its counters read exactly (1, 0) after the optional
    alpha <-> beta flip on Alice's side, and 1 otherwise.
    """
    if flip_alice:
        arr = np.swapaxes(arr, 0, 1)
    total = arr.sum()
    a_marg = arr[1, 0].sum()
    b_marg = arr[:, :, 1, 0].sum()
    p00 = arr[1, 0, 1, 0]
    p01 = a_marg - p00
    p10 = b_marg - p00
    p11 = total - p00 - p01 - p10
    return np.array([[p00, p01], [p10, p11]])


@dataclass
class BinaryOutcomeDistribution:
    """P(A_A, A_B, herald block) as 2x2 arrays keyed by herald block."""

    arch: str
    tables: dict

    def entries(self) -> dict:
        return {(a, b) + h: float(t[a, b]) for h, t in self.tables.items()
                for a in (0, 1) for b in (0, 1)}


def postprocess(dist: CondDistribution, flip_alice: bool) -> BinaryOutcomeDistribution:
    return BinaryOutcomeDistribution(
        dist.arch, {h: binary_outcomes(arr, flip_alice) for h, arr in dist.tables.items()})


FLIP_ALICE = {"esr": True, "two_esr": True, "unassisted": True, "pqa": False}


def support_ok(arch: str, cond, pattern) -> bool:
    """Photon-number bounds a noiseless pattern must satisfy."""
    p = pattern
    if arch == "esr":
        n, n2 = cond
        return p[0] + p[1] <= n and p[2] + p[3] <= n2 and sum(p[4:]) <= n + n2
    if arch == "pqa":
        n, n1, n2 = cond
        return p[0] + p[1] <= n and p[2] + p[3] <= n1 + n2 and sum(p[2:]) <= n + n1 + n2
    if arch == "two_esr":
        n1, n2, n3 = cond
        return (p[0] + p[1] <= n2 and p[2] + p[3] <= n3 and sum(p[4:8]) <= n1 + n2
                and sum(p[8:]) <= n1 + n3)
    if arch == "unassisted":
        (n,) = cond
        return p[0] + p[1] == n and p[2] + p[3] <= n
    raise ValueError(arch)
