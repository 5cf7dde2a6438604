import math

import pytest

from diqkd_amp.keyrate import (CLASSICAL, PRESETS, TSIRELSON, ProtocolParams, SecurityBudget,
                               asymptotic_rate, delta_est_min, dg, eta_opt, g, h,
                               key_length, leak_ir)
from diqkd_amp.observables import HeraldedObservables, esr_ideal_closed_form

# Frozen from an independent 40-digit mpmath evaluation with a dense p_t scan.
ETA_OPT_REF = -0.78419435054560142
LEAK_REF = 87481888.334637050
G08_REF = 0.34611243579453872


def test_g_endpoints():
    assert g(CLASSICAL) == 0.0
    assert g(TSIRELSON) == pytest.approx(1.0, abs=1e-12)
    assert g(0.6) == 0.0


def test_g_reference_value():
    assert g(0.8) == pytest.approx(G08_REF, rel=1e-12)
    assert g(0.8) == pytest.approx(0.3468, abs=1e-3)


def test_g_domain():
    with pytest.raises(ValueError):
        g(0.9)
    with pytest.raises(ValueError):
        g(-0.1)


def test_dg_matches_finite_difference():
    for p in (0.76, 0.8, 0.84):
        fd = (g(p + 1e-7) - g(p - 1e-7)) / 2e-7
        assert dg(p) == pytest.approx(fd, rel=1e-5)


def test_binary_entropy_edges():
    assert h(0.0) == 0.0 and h(1.0) == 0.0
    assert h(0.5) == pytest.approx(1.0)


def test_delta_est():
    assert delta_est_min(1e7, 1e-2) == pytest.approx(4.799e-4, rel=1e-3)
    assert delta_est_min(1e7, 1.0) == 0.0
    assert delta_est_min(4e7, 1e-2) == pytest.approx(delta_est_min(1e7, 1e-2) / 2)


def test_eta_opt_reference():
    de = delta_est_min(1e10, 1e-3)
    res = eta_opt(0.84, 1e10, 1e-3, de, 1e-8, 1e-8)
    assert res.violation
    assert res.value == pytest.approx(ETA_OPT_REF, rel=1e-6)


def test_eta_opt_large_block_limit():
    res = eta_opt(0.84, 1e30, 1e-3, 0.0, 1e-8, 1e-8)
    assert res.value == pytest.approx(g(0.84), abs=1e-6)
    top = eta_opt(TSIRELSON, 1e30, 0.5, 0.0, 1e-8, 1e-8)
    assert top.value == pytest.approx(1.0, abs=1e-4)


def test_eta_opt_without_violation():
    res = eta_opt(0.74, 1e10, 0.1, 0.0, 1e-8, 1e-8)
    assert not res.violation and res.value == 0.0


def test_leak_reference():
    assert leak_ir(0.01, 0.85, 1e9, 0.01, 1e-10, 1e-2) == pytest.approx(LEAK_REF, rel=1e-12)


def test_leak_scaling():
    a = leak_ir(0.02, 0.85, 1e9, 0.01, 1e-10, 1e-2)
    b = leak_ir(0.02, 0.85, 2e9, 0.01, 1e-10, 1e-2)
    assert b / a == pytest.approx(2.0, rel=1e-2)


def test_preset_split_saturates_budget():
    b = PRESETS["S1"].split(0.3, 0.7)
    assert b.eps_pa + b.eps_s + b.eps_ea == pytest.approx(b.eps_sec, rel=1e-12)
    assert b.eps_rob_ir + b.eps_rob_ea + b.eps_ir == pytest.approx(b.eps_rob, rel=1e-12)
    assert b.eps_ir == b.eps_cor
    assert b.violations() == []


def test_presets_exact():
    s1, s2 = PRESETS["S1"], PRESETS["S2"]
    assert (s1.eps_sec, s1.eps_cor, s1.eps_rob) == (1e-5, 1e-10, 1e-2)
    assert (s2.eps_sec, s2.eps_cor, s2.eps_rob) == (1e-9, 1e-15, 1e-3)


def test_budget_violation_rejected():
    bad = SecurityBudget(1e-5, 1e-10, 1e-2, eps_pa=1e-5, eps_s=1e-5, eps_ea=1e-6, eps_ir=1e-10,
                         eps_ir_prime=1e-3, eps_rob_ea=1e-3)
    obs = esr_ideal_closed_form(1.0)
    with pytest.raises(ValueError):
        key_length(obs, ProtocolParams(1e9, 0.01), bad)


def test_no_violation_gives_zero_key():
    obs = HeraldedObservables(0.1, 0.74, 0.0, 8 * (0.74 - 0.5))
    r = key_length(obs, ProtocolParams(1e9, 0.01), PRESETS["S1"].split())
    assert r.l == 0.0 and not r.feasible


def test_key_length_consistency():
    obs = esr_ideal_closed_form(0.95)
    r = key_length(obs, ProtocolParams(1e11, 0.01), PRESETS["S1"].split())
    assert r.feasible
    assert r.k_cond * obs.p_sh == pytest.approx(r.k, rel=1e-12)
    assert r.k <= r.k_cond


def test_key_length_monotone_in_omega_and_q():
    budget = PRESETS["S1"].split()
    proto = ProtocolParams(1e10, 0.02)
    base = HeraldedObservables(0.1, 0.84, 0.02, 0.0)
    better = HeraldedObservables(0.1, 0.845, 0.02, 0.0)
    noisier = HeraldedObservables(0.1, 0.84, 0.03, 0.0)
    l0 = key_length(base, proto, budget).l
    assert key_length(better, proto, budget).l >= l0
    assert key_length(noisier, proto, budget).l <= l0


def test_smaller_pa_budget_costs_key():
    obs = esr_ideal_closed_form(0.97)
    proto = ProtocolParams(1e10, 0.02)

    def budget(eps_pa):
        return SecurityBudget(1e-5, 1e-10, 1e-2, eps_pa=eps_pa, eps_s=4e-6, eps_ea=1e-6,
                              eps_ir=1e-10, eps_ir_prime=5e-3, eps_rob_ea=4e-3)

    assert key_length(obs, proto, budget(1e-8)).l < key_length(obs, proto, budget(4e-6)).l


def test_asymptotic_rate_values():
    assert asymptotic_rate(esr_ideal_closed_form(1.0)) == pytest.approx(0.5, abs=1e-12)
    perfect = HeraldedObservables(1.0, TSIRELSON, 0.0, 2 * math.sqrt(2))
    assert asymptotic_rate(perfect) == pytest.approx(1.0, abs=1e-12)


def test_finite_rate_approaches_asymptotic():
    obs = esr_ideal_closed_form(0.98)
    rates = []
    for n in (1e9, 1e11, 1e13):
        best = max(key_length(obs, ProtocolParams(n, gam), PRESETS["S1"].split(0.5, 0.5)).k_cond
                   for gam in (1e-3, 3e-3, 1e-2, 3e-2, 1e-1))
        rates.append(best)
    assert rates[0] < rates[1] < rates[2]
    assert rates[2] <= asymptotic_rate(obs) / obs.p_sh


def test_delta_below_floor_rejected():
    with pytest.raises(ValueError):
        ProtocolParams(1e7, 0.1, 1e-6).resolved_delta(PRESETS["S1"].split())
