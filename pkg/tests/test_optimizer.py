import math
from dataclasses import replace

import pytest

from diqkd_amp.keyrate import PRESETS, ProtocolParams, key_length
from diqkd_amp.observables import heralded_observables, make_setup
from diqkd_amp.optimizer import (OptimizationSpec, Var, apply_physical, critical_blocksize,
                                 default_spec, max_tolerable_loss, maximize_rate, q_max_search)
from diqkd_amp.sources import pdc_statistics


def test_var_transforms_hit_bounds():
    for scale in ("lin", "log", "logit"):
        v = Var("x", 1e-3, 0.5, scale)
        assert v.from_unit(0.0) == pytest.approx(1e-3)
        assert v.from_unit(1.0) == pytest.approx(0.5)


def test_all_fixed_spec_is_single_evaluation():
    setup = make_setup("esr", eta_cd=0.98, loss_db=10, p_d=1e-7)
    spec = OptimizationSpec(free=(), fixed=(("f_pa", 0.3), ("f_ir", 0.6), ("gamma", 0.02)))
    r = maximize_rate(setup, spec, "S1", 1e10)
    direct = key_length(heralded_observables(setup), ProtocolParams(1e10, 0.02),
                        PRESETS["S1"].split(0.3, 0.6))
    assert r.l == pytest.approx(direct.l, rel=1e-12)
    assert r.k == pytest.approx(direct.k, rel=1e-12)


def test_optimizer_not_worse_than_its_grid():
    setup = make_setup("esr", eta_cd=0.99, loss_db=5, p_d=1e-7, ab=pdc_statistics(0.1),
                       cd=pdc_statistics(0.1))
    r = maximize_rate(setup, default_spec(setup, grid_points=2, sweeps=1), "S1", 1e10)
    assert r.k >= r.chosen["grid_best_k"]
    assert r.k > 0


def test_optimizer_is_deterministic():
    setup = make_setup("esr", eta_cd=0.98, loss_db=10, p_d=1e-7)
    a = maximize_rate(setup, n_sh=1e9)
    b = maximize_rate(setup, n_sh=1e9)
    assert a.k == b.k and a.chosen == b.chosen


def test_infeasible_point_reports_zero():
    r = maximize_rate(make_setup("esr", eta_cd=0.9), n_sh=1e9)
    assert r.k == 0.0 and not r.feasible


def test_physical_overrides():
    base = make_setup("pqa", t=0.5, ab=pdc_statistics(0.1))
    s = apply_physical(base, {"t": 0.9, "lam:ab": 0.2})
    assert s.t == 0.9
    assert dict(s.sources)["ab"].params["lam"] == pytest.approx(0.2)


def test_pqa_probability_peak():
    # at fixed xi the heralding probability peaks at t = 1 - 1/(2 xi)
    xi = 0.9
    best = max((heralded_observables(make_setup("pqa", eta_cd=math.sqrt(xi), t=t)).p_sh, t)
               for t in [k / 200 for k in range(1, 200)])
    assert best[1] == pytest.approx(1 - 1 / (2 * xi), abs=0.01)


def test_pqa_rate_prefers_high_transmittance():
    setup = make_setup("pqa", eta_cd=0.99, t=0.5)
    r = maximize_rate(setup, default_spec(setup), "S1", 1e11)
    assert r.chosen["t"] > 1 - 1 / (2 * 0.99**2)


def test_critical_blocksize_unbounded_below_threshold():
    p = critical_blocksize(make_setup("esr", eta_cd=0.955, p_d=1e-7))
    assert p.unbounded and math.isinf(p.n_star)


def test_critical_blocksize_perfect_detectors():
    setup = make_setup("esr", eta_cd=1.0, p_d=1e-7)
    p = critical_blocksize(setup)
    assert not p.unbounded and p.n_star <= 1e7
    assert maximize_rate(setup, n_sh=p.n_star).k >= 1e-10
    assert maximize_rate(setup, n_sh=p.n_star / 1.05).k < 1e-10


def test_cap_only_loss_matches_closed_form():
    lm = max_tolerable_loss(make_setup("esr", eta_cd=1.0, p_d=0.0), "cap", n_sh=1e7)
    assert lm == pytest.approx(150 - 10 * math.log10(2e7), abs=0.1)


def test_unassisted_ideal_max_loss():
    lm = max_tolerable_loss(make_setup("unassisted"), "asymptotic", n_cap=None)
    assert lm == pytest.approx(0.7, abs=0.05)


def test_q_max_positive_at_zero_loss():
    setup = make_setup("esr", eta_cd=1.0, p_d=0.0)
    spec = replace(default_spec(setup), key_grid_points=3, sweeps=2)
    assert q_max_search(0.0, setup, spec=spec, n_sh=1e11) > 0


def test_spec_rejects_unknown_variable():
    with pytest.raises(ValueError):
        OptimizationSpec(free=("bogus",))
    with pytest.raises(ValueError):
        OptimizationSpec(objective="fastest")


def test_asymptotic_search_ignores_finite_objective_in_spec():
    setup = make_setup("unassisted")
    lm = max_tolerable_loss(setup, "asymptotic", spec=default_spec(setup, "finite"), n_cap=None)
    assert 0.6 < lm < 0.7
