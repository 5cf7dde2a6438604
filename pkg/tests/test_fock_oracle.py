import math

import pytest

from diqkd_amp import fock_oracle as fo
from diqkd_amp.fock_oracle import H, V, ModeIndex


def test_two_pair_singlet_amplitudes():
    state = fo.build_pair_state(2, ("a", "b"))
    amps = state.amplitudes
    s3 = 1 / math.sqrt(3)
    assert set(amps) == {(2, 0, 0, 2), (1, 1, 1, 1), (0, 2, 2, 0)}
    assert amps[(2, 0, 0, 2)].real == pytest.approx(s3, abs=1e-14)
    assert amps[(1, 1, 1, 1)].real == pytest.approx(-s3, abs=1e-14)
    assert amps[(0, 2, 2, 0)].real == pytest.approx(s3, abs=1e-14)


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_pair_state_is_normalized(n):
    assert fo.build_pair_state(n, ("a", "b")).norm2() == pytest.approx(1.0, abs=1e-13)


def test_hong_ou_mandel_dip():
    modes = fo.modes_for(("a", "b"))
    state = fo.fock_product({ModeIndex("a", H): 1, ModeIndex("b", H): 1}, modes)
    out = fo.apply_bs(state, ("a", "b"), 0.5)
    assert abs(out.amplitude({ModeIndex("a", H): 1, ModeIndex("b", H): 1})) < 1e-14
    assert out.norm2() == pytest.approx(1.0, abs=1e-14)


def test_single_photon_on_balanced_splitter():
    modes = fo.modes_for(("a", "b"))
    state = fo.apply_bs(fo.fock_product({ModeIndex("a", H): 1}, modes), ("a", "b"), 0.5)
    dist = fo.measure_pnr(state, (ModeIndex("a", H), ModeIndex("b", H)))
    assert dist == pytest.approx({(1, 0): 0.5, (0, 1): 0.5}, abs=1e-14)


def test_rotation_maps_h_to_v_at_right_angle():
    modes = fo.modes_for(("a",))
    state = fo.apply_rotation(fo.fock_product({ModeIndex("a", H): 1}, modes), "a", math.pi / 2)
    assert abs(state.amplitude({ModeIndex("a", V): 1})) == pytest.approx(1.0, abs=1e-14)


def test_bs_rejects_bad_transmittance():
    state = fo.build_pair_state(1, ("a", "b"))
    with pytest.raises(ValueError):
        fo.apply_bs(state, ("a", "b"), 1.5)


def test_duplicate_detectors_rejected():
    state = fo.build_pair_state(1, ("a", "b"))
    with pytest.raises(ValueError):
        fo.measure_pnr(state, (ModeIndex("a", H), ModeIndex("a", H)))


def test_truncation_guard():
    with pytest.raises(ValueError):
        fo.build_pair_state(2, ("a", "b"), truncation=3)


@pytest.mark.parametrize("arch,cond,setup", [
    ("esr", (1, 1), {"zeta_cd": 1.0, "zeta_cchd": 1.0}),
    ("pqa", (1, 1, 1), {"zeta_cd": 0.9, "zeta_cchd": 0.81, "t": 0.7}),
    ("two_esr", (1, 1, 1), {"zeta_cd": 0.95, "zeta_cchd": 0.9}),
    ("unassisted", (2,), {"eta_ch": 0.8}),
])
def test_oracle_distribution_sums_to_one(arch, cond, setup):
    dist = fo.oracle_cond_distribution(arch, cond, setup, math.pi / 4, math.pi / 8)
    assert math.fsum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    assert min(dist.values()) >= 0
