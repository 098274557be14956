import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kschaos.errors import SizeMismatch
from kschaos.geometry import Rectangle
from kschaos.kernel import RegularizedKernel
from kschaos.meanfield import DensityGrid, sample_density
from kschaos.metrics import (CouplingReport, EmpiricalMeasure, consistency_error,
                             consistency_terms, coupled_gaps, w2_vs_density, w2_vs_reference,
                             w_p_empirical, w_p_exhaustive, winf_coupled)
from kschaos.rng import stream

SQ = Rectangle([0, 0], [1, 1])


def test_examples():
    a = np.random.default_rng(0).random((6, 2))
    d, plan = w_p_empirical(a, a)
    assert d == 0 and list(plan.assignment) == list(range(6))
    assert w_p_empirical([[0.0, 0.0]], [[1.0, 0.0]])[0] == 1.0
    d, plan = w_p_empirical([[0, 0], [1, 0]], [[0, 1], [1, 1]])
    assert d == 1.0 and list(plan.assignment) == [0, 1]
    assert w_p_exhaustive([[0, 0], [1, 0]], [[0, 1], [1, 1]])[0] == 1.0
    with pytest.raises(SizeMismatch):
        w_p_empirical(np.zeros((2, 2)), np.zeros((3, 2)))
    assert EmpiricalMeasure([[0.0, 1.0]]).M == 1


def test_plan_cost_consistent():
    rng = np.random.default_rng(1)
    a, b = rng.random((30, 2)), rng.random((30, 2))
    for p in (1, 2, 3):
        d, plan = w_p_empirical(a, b, p)
        assert sorted(plan.assignment) == list(range(30))
        cost = np.mean(np.linalg.norm(a - b[plan.assignment], axis=1) ** p) ** (1 / p)
        assert d == pytest.approx(cost, rel=1e-14)


instances = st.tuples(st.integers(1, 7), st.integers(0, 2**32 - 1), st.sampled_from([1.0, 2.0, 3.0]))


@given(instances)
def test_assignment_matches_exhaustive(inst):
    M, seed, p = inst
    rng = np.random.default_rng(seed)
    a, b = rng.random((M, 2)), rng.random((M, 2))
    assert w_p_empirical(a, b, p)[0] == pytest.approx(w_p_exhaustive(a, b, p)[0], abs=1e-12)


@given(instances)
def test_metric_axioms(inst):
    M, seed, p = inst
    rng = np.random.default_rng(seed)
    a, b, c = rng.random((3, M, 2))
    ab = w_p_empirical(a, b, p)[0]
    assert ab == pytest.approx(w_p_empirical(b, a, p)[0], abs=1e-10)
    assert w_p_empirical(a, a[rng.permutation(M)], p)[0] <= 1e-10
    assert ab <= w_p_empirical(a, c, p)[0] + w_p_empirical(c, b, p)[0] + 1e-10


@given(instances)
def test_monotone_in_p(inst):
    M, seed, _ = inst
    rng = np.random.default_rng(seed)
    a, b = rng.random((2, M, 2))
    w1, w2, w3 = (w_p_empirical(a, b, p)[0] for p in (1, 2, 3))
    assert w1 <= w2 + 1e-12 and w2 <= w3 + 1e-12


@given(st.integers(1, 40), st.integers(0, 10**6))
def test_diagonal_coupling_bound(M, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((2, M, 2))
    gaps = coupled_gaps(x, y)
    assert w_p_empirical(x, y)[0] <= winf_coupled(gaps) + 1e-12


def test_winf_examples():
    assert winf_coupled(coupled_gaps(np.ones((3, 2)), np.ones((3, 2)))) == 0
    assert winf_coupled([0.1, 0.3, 0.2]) == 0.3
    assert winf_coupled([0.1, 0.3, 0.2, 0.05]) >= winf_coupled([0.1, 0.3, 0.2])
    assert winf_coupled([]) == 0.0


def test_w2_vs_density_support_and_translation():
    hot = np.zeros((8, 8))
    hot[3, 4] = 64.0
    rho = DensityGrid(SQ, hot)
    centre = np.tile([[3.5 / 8, 4.5 / 8]], (16, 1))
    est = w2_vs_density(centre, rho, 256, stream(0, "ref"))
    assert est.value <= np.sqrt(2) / 16 and est.M_ref == 256 and est.M == 16
    assert est.ref_error_scale == 256 ** -0.25
    shifted = DensityGrid(Rectangle([2, -1], [3, 0]), hot)
    est2 = w2_vs_density(centre + [2, -1], shifted, 256, stream(0, "ref"))
    assert est2.value == pytest.approx(est.value, abs=1e-12)
    with pytest.raises(SizeMismatch):
        w2_vs_density(centre, rho, 100, stream(0, "ref"))


def test_w2_self_sampling_decreases_with_M():
    rho = DensityGrid.uniform(SQ, 8, 8)
    vals = []
    for M in (64, 256, 1024):
        reps = [w2_vs_density(sample_density(rho, M, stream(s, "a")), rho, M, stream(s, "b")).value
                for s in range(4)]
        vals.append(np.mean(reps))
    assert vals[0] > vals[1] > vals[2] and vals[2] < 0.05


def test_w2_vs_reference_replicates():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    ref = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    assert w2_vs_reference(a, ref) == 0.0


def test_consistency_error_point_mass():
    # rho concentrated on one cell whose centre is Y_2: the empirical sum over
    # j != 1 equals the midpoint integral exactly
    hot = np.zeros((16, 16))
    hot[5, 9] = 256.0
    rho = DensityGrid(SQ, hot)
    Y = np.array([[0.1, 0.2], [5.5 / 16, 9.5 / 16]])
    rk = RegularizedKernel(0.1)
    terms = consistency_terms(Y, rho, rk)
    assert terms[0] < 1e-12
    assert consistency_error(Y, rho, rk) == terms.max()


def test_consistency_error_shrinks_with_N():
    rho = DensityGrid.uniform(SQ, 32, 32)
    rk = RegularizedKernel(0.1)
    mean = {}
    for N in (32, 512):
        mean[N] = np.mean([consistency_error(sample_density(rho, N, stream(r, "y")), rho, rk) ** 2
                           for r in range(10)])
    assert mean[512] < mean[32] / 4


def test_coupling_report_serialization():
    rep = CouplingReport()
    rep.add(0.0, 0.0, 0.0)
    rep.add(0.5, 0.3, 0.2, 0.1, 0.01)
    assert rep.check()
    csv_text = rep.to_csv().splitlines()
    assert csv_text[0] == "t,sup_gap,w2_emp,hN_mean,hN_se" and csv_text[2] == "0.5,0.3,0.2,0.1,0.01"
    data = json.loads(rep.to_json())
    assert data["sup_gap"] == [0.0, 0.3] and data["hN_mean"][0] is None
    rep.add(1.0, 0.1, 0.2)
    assert not rep.check()
