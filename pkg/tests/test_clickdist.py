import math

import numpy as np
import pytest

from diqkd_amp import clickdist as cd
from diqkd_amp import fock_oracle as fo

PI4, PI8 = math.pi / 4, math.pi / 8


def _max_dev(ref: dict, got: dict) -> float:
    return max(abs(ref.get(k, 0.0) - got.get(k, 0.0)) for k in set(ref) | set(got))


@pytest.mark.parametrize("arch,cond,setup,ta,tb,closed", [
    ("esr", (1, 1), {"zeta_cd": 1.0, "zeta_cchd": 1.0}, 0.0, 0.0,
     lambda: cd.esr_cond_distribution(1, 1, 1.0, 1.0, 0.0, 0.0)),
    ("esr", (2, 1), {"zeta_cd": 0.9, "zeta_cchd": 0.81}, 0.0, 0.0,
     lambda: cd.esr_cond_distribution(2, 1, 0.9, 0.81, 0.0, 0.0)),
    ("pqa", (1, 1, 1), {"zeta_cd": 0.9, "zeta_cchd": 0.81, "t": 0.7}, PI4, PI8,
     lambda: cd.pqa_cond_distribution(1, 1, 1, 0.9, 0.81, 0.7, PI4, PI8)),
    ("two_esr", (1, 1, 1), {"zeta_cd": 0.95, "zeta_cchd": 0.9}, 0.0, 0.0,
     lambda: cd.two_esr_cond_distribution(1, 1, 1, 0.95, 0.9, 0.0, 0.0)),
    ("unassisted", (2,), {"eta_ch": 0.8}, PI4, PI8,
     lambda: cd.unassisted_cond_distribution(2, 0.8, PI4, PI8)),
])
def test_closed_form_matches_oracle(arch, cond, setup, ta, tb, closed):
    ref = fo.oracle_cond_distribution(arch, cond, setup, ta, tb)
    assert _max_dev(ref, closed().entries()) < 1e-12


def test_ideal_esr_heralds_singlet_correlations():
    dist = cd.esr_cond_distribution(1, 1, 1.0, 1.0, 0.0, 0.0)
    # canonical herald: perfect anticorrelation in the h/v basis before the flip
    arr = dist.tables[cd.OMEGA]
    assert dist.herald_marginal(cd.OMEGA) == pytest.approx(1 / 8)
    assert arr[1, 0, 1, 0] + arr[0, 1, 0, 1] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("cond", [(0, 0), (1, 1), (2, 1), (1, 2)])
def test_support_bounds(cond):
    dist = cd.esr_cond_distribution(*cond, 0.9, 0.7, PI4, -PI8)
    for pattern, p in dist.entries(tol=1e-15).items():
        assert cd.support_ok("esr", cond, pattern), pattern


@pytest.mark.parametrize("arch,cond", [("esr", (1, 2)), ("pqa", (1, 1, 1)),
                                       ("two_esr", (1, 1, 1))])
def test_herald_marginal_independent_of_settings(arch, cond):
    def dist(ta, tb):
        if arch == "esr":
            return cd.esr_cond_distribution(*cond, 0.9, 0.6, ta, tb)
        if arch == "pqa":
            return cd.pqa_cond_distribution(*cond, 0.9, 0.6, 0.8, ta, tb)
        return cd.two_esr_cond_distribution(*cond, 0.9, 0.6, ta, tb)

    a, b = dist(0.0, 0.0), dist(PI4, PI8)
    for block in a.tables:
        assert a.herald_marginal(block) == pytest.approx(b.herald_marginal(block), abs=1e-14)


def test_vacuum_dark_counts():
    dist = cd.esr_cond_distribution(0, 0, 1.0, 1.0, 0.0, 0.0)
    noisy = cd.apply_dark_counts(dist, 1e-7)
    assert noisy.prob((0,) * 8) == pytest.approx(1 - 8e-7, abs=1e-18)
    for k in range(8):
        pattern = [0] * 8
        pattern[k] = 1
        assert noisy.prob(pattern) == pytest.approx(1e-7, abs=1e-20)
    assert noisy.total() == pytest.approx(1.0, abs=1e-15)


def test_dark_counts_applied_once():
    noisy = cd.apply_dark_counts(cd.unassisted_cond_distribution(1, 0.9, 0.0, 0.0), 1e-6)
    with pytest.raises(ValueError):
        cd.apply_dark_counts(noisy, 1e-6)


def test_detector_count_checked():
    with pytest.raises(ValueError):
        cd.apply_dark_counts(cd.unassisted_cond_distribution(1, 0.9, 0.0, 0.0), 1e-6, 8)


def test_binary_outcomes_assignment():
    arr = np.zeros((3, 3, 3, 3))
    arr[1, 0, 1, 0] = 0.25   # both read (1, 0)
    arr[0, 1, 0, 0] = 0.25   # Alice (0, 1), Bob silent
    arr[0, 0, 0, 0] = 0.25   # no click
    arr[1, 1, 2, 0] = 0.25   # multi-clicks
    np.testing.assert_allclose(cd.binary_outcomes(arr, flip_alice=False),
                               [[0.25, 0.0], [0.0, 0.75]])
    np.testing.assert_allclose(cd.binary_outcomes(arr, flip_alice=True),
                               [[0.0, 0.25], [0.25, 0.5]])


def test_efficiency_validation():
    with pytest.raises(ValueError):
        cd.esr_cond_distribution(1, 1, 1.2, 1.0, 0.0, 0.0)


def test_log_binom_large_arguments():
    assert cd.log_binom(200, 100) == pytest.approx(math.log(math.comb(200, 100)), rel=1e-13)
