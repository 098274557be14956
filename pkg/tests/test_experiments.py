import math

import numpy as np
import pytest

from kschaos.errors import ConfigError
from kschaos.experiments import (EpsRule, StudyConfig, StudyReport, chaos_study,
                                 collision_study, consistency_study, fit_slope, gronwall_check,
                                 kernel_lemma_suite, stability_study)
from kschaos.experiments.collision import (collision_times, resolution_radius,
                                           segment_min_distance)
from kschaos.experiments.common import mean_se
from kschaos.experiments.gronwall import (comparison_solution, loglip_bound, loglip_check,
                                          quadratic_check)
from kschaos.experiments.lemmas import (bump_density, eps_difference, quasi_lipschitz_check,
                                        quadrature_force, sup_scaling)
from kschaos.geometry import Disk
from kschaos.kernel import RegularizedKernel


def test_eps_rule():
    r = EpsRule("schedule", 0.2)
    assert r.eps(math.e**4) == pytest.approx(0.1)
    assert EpsRule("schedule", 0.4).eps(500) == 2 * r.eps(500)
    assert EpsRule.from_config(0.3) == EpsRule("fixed", 0.3)
    with pytest.raises(ConfigError):
        EpsRule("weird", 1)
    with pytest.raises(ConfigError):
        EpsRule.from_config({"value": 1})


def test_study_config_and_report():
    cfg = StudyConfig("x", N_list=[4, 8], eps_rule={"kind": "fixed", "value": 0.1}, workers=3)
    assert "workers" not in cfg.to_dict() and cfg.N_list == (4, 8)
    with pytest.raises(ConfigError):
        StudyConfig("x", replicas=0)
    rep = StudyReport("x")
    rep.points += [{"a": 1}, {"a": 2, "b": 0.5}]
    rep.verdict("ok", True, 0.5, "<= 1", 10)
    assert rep.passed and rep.summary() == "[PASS] ok: value=0.5 tolerance=<= 1 n=10"
    assert rep.to_csv().splitlines() == ["a,b", "1,nan", "2,0.5"]
    rep.verdict("bad", False, 2.0, "<= 1")
    assert not rep.passed


def test_fit_slope_and_mean_se():
    x = np.array([1, 2, 4, 8.0])
    s, se = fit_slope(x, 3 * x**-1.5)
    assert s == pytest.approx(-1.5) and se < 1e-12
    m, se = mean_se([1.0, 2.0, 3.0])
    assert m == 2.0 and se == pytest.approx(1 / math.sqrt(3))


def test_quadrature_oracle_agrees_with_shell_reduction():
    rk = RegularizedKernel(0.1)
    for x in ([0.05, 0.02], [0.11, -0.03], [0.0, 0.099]):
        np.testing.assert_allclose(quadrature_force(0.1, np.array([x]))[0], rk.force(np.array(x)),
                                   rtol=1e-8, atol=1e-14)


def test_sup_scaling_exact_exponents():
    for d in (2, 3):
        sc = sup_scaling(d)
        assert sc["slope_force"] == pytest.approx(-(d - 1), abs=1e-6)
        assert sc["slope_grad"] == pytest.approx(-d, abs=0.05)


def test_bump_density_peak():
    for peak in (1.0, 2.0, 4.0):
        g = bump_density(peak, 64)
        assert g.linf() == pytest.approx(peak, rel=1e-9) and g.mass() == pytest.approx(1.0)


def test_eps_difference_linear():
    rows = eps_difference(n=320)
    slope, _ = fit_slope([r["eps"] for r in rows], [r["sup_diff"] for r in rows])
    assert abs(slope - 1) <= 0.1


def test_quasi_lipschitz_ratios_bounded():
    rows = quasi_lipschitz_check(eps_list=(0.2, 0.1), gaps=(0.2, 0.1, 0.05), n_points=40, n=32)
    assert {r["kind"] for r in rows} == {"translate", "rotate"}
    ratios = [r["ratio"] for r in rows]
    assert max(ratios) / min(ratios) < 10
    # same density, same point, same eps: zero difference
    rk = RegularizedKernel(0.1)
    from kschaos.kernel import convolve_force_density
    rho = bump_density(2.0, 32)
    x = np.array([[0.3, 0.6]])
    assert np.all(convolve_force_density(rk, rho, x) - convolve_force_density(rk, rho, x) == 0)


def test_kernel_suite_quick_passes():
    rep = kernel_lemma_suite(quick=True)
    assert rep.passed, rep.summary()


def test_gronwall_pieces():
    assert quadratic_check() <= 1e-8
    # omega(eps) = 0: comparison solution and bound are zero
    s, f = comparison_solution(1.0, 1.0, 0.0)
    assert f.max() == 0 and float(loglip_bound(1.0, 0.0, 0.5)) == 0.0
    r = loglip_check(1.0, 1.0, w_eps=0.01)
    assert r["violations"] == 0
    s, f = comparison_solution(1.0, 1.0, 0.01)
    assert np.all(f <= np.exp(1 - np.exp(-1)) * 0.01 ** (np.exp(-1) / 2) + 1e-15)
    assert gronwall_check().passed


def test_gronwall_bound_fails_beyond_unit_ct():
    # the bound is not valid for C T > 1 (recorded design decision)
    assert loglip_check(2.0, 1.0, w_eps=1e-4)["violations"] > 0


def test_segment_min_distance():
    x0 = np.array([[[0.0, 0.0], [1.0, 0.0]]])
    x1 = np.array([[[1.0, 0.0], [0.0, 0.0]]])  # swap: relative path passes through 0
    assert segment_min_distance(x0, x1)[0] == 0.0
    x1 = np.array([[[0.0, 0.0], [2.0, 0.0]]])
    assert segment_min_distance(x0, x1)[0] == pytest.approx(1.0)


def test_resolution_radius_scaling():
    assert resolution_radius(4e-4, 2) == pytest.approx(2 * resolution_radius(1e-4, 2))


def test_collision_zero_noise_exact_time():
    # nu = 0, N = 2: |Z|^2 (Z = X1 - X2) decreases at rate 2/pi, so
    # tau = (pi/2)|Z0|^2 = 2 pi |X1 - mean|^2
    dt = 1e-4
    tau, cens, msd = collision_times(2, 0.0, dt, 7.0, 4, 0, Disk([0, 0], 1), 1e-9)
    assert not cens.any()
    np.testing.assert_allclose(tau, 2 * np.pi * msd, atol=20 * dt)


def test_collision_study_small():
    cfg = StudyConfig("collision", N_list=[2], eps_rule=0.0, nu=1 / (16 * math.pi), dt=1e-3,
                      replicas=20, seed=1, params={"T_max": 20.0})
    rep = collision_study(cfg)
    main = rep.points[0]
    assert main["mean_tau"] < math.pi and main["censored"] == 0


def test_stability_study_small():
    cfg = StudyConfig("stability", N_list=[100], eps_rule=0.1, nu=0.1, T=0.05, dt=1e-3,
                      replicas=2, seed=0, params={"h_grid": [0.0, 0.1, 0.01], "grid": 32})
    rep = stability_study(cfg)
    v = {x.name: x for x in rep.verdicts}
    assert v["h = 0 gives zero gap"].passed
    assert v["terminal gap decreasing as h -> 0"].passed


def test_chaos_study_small():
    cfg = StudyConfig("chaos", N_list=[16, 32], eps_rule={"kind": "schedule", "value": 0.2},
                      nu=0.1, T=0.02, dt=1e-3, replicas=2, seed=0, params={"grid": 32})
    rep = chaos_study(cfg)
    v = {x.name: x for x in rep.verdicts}
    assert v["triangle inequality audit"].passed
    assert v["sup gap dominates W2(mu^X, mu^Y)"].passed
    with pytest.raises(ConfigError):
        chaos_study(StudyConfig("chaos", N_list=[16], eps_rule=0.1))


def test_chaos_coupling_starts_at_zero_gap():
    cfg = StudyConfig("chaos", N_list=[64], eps_rule={"kind": "schedule", "value": 0.2},
                      nu=0.1, T=0.01, dt=1e-3, replicas=1, seed=0,
                      params={"grid": 32, "record_times": [0.0, 0.01]})
    rep = chaos_study(cfg)
    zero = [p for p in rep.points if p.get("t") == 0.0]
    assert zero and all(p["sup_gap_mean"] == 0.0 for p in zero)


def test_consistency_study_small():
    cfg = StudyConfig("consistency", N_list=[16, 64, 256], eps_rule=0.1, replicas=20, seed=0,
                      params={"grid": 32})
    rep = consistency_study(cfg)
    s = rep.verdicts[0].value
    assert -1.4 < s < -0.6
