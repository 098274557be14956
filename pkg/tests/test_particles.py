import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kschaos.errors import ConfigError
from kschaos.geometry import Disk, Rectangle
from kschaos.kernel import RegularizedKernel
from kschaos.particles import (CollisionEvent, ParticleEnsemble, SimConfig, default_dt,
                               min_pairwise_distance, pairwise_drift, particle_streams,
                               reflected_step, simulate, step)
from kschaos.rng import StreamBank

DISK = Disk([0, 0], 1.0)


def naive_drift(x, rk):
    N = len(x)
    out = np.zeros_like(x)
    for i in range(N):
        for j in range(N):
            if j != i:
                out[i] += rk.force(x[i] - x[j])
    return out / (N - 1)


def disk_points(n, seed):
    return DISK.sample_uniform(n, np.random.default_rng(seed))


def test_drift_coincident_pair_is_zero():
    rk = RegularizedKernel(0.1)
    np.testing.assert_array_equal(pairwise_drift(np.array([[0.2, 0.1], [0.2, 0.1]]), rk), 0.0)


def test_drift_matches_double_loop():
    rk = RegularizedKernel(0.1)
    x = disk_points(3, 0)
    # two terms per particle: addition order cannot matter
    np.testing.assert_array_equal(pairwise_drift(x, rk), naive_drift(x, rk))
    x = disk_points(40, 1)
    np.testing.assert_allclose(pairwise_drift(x, rk), naive_drift(x, rk), rtol=1e-13, atol=1e-13)


@given(st.integers(2, 40), st.integers(0, 10**6), st.sampled_from([0.3, 0.05, 0.01]))
def test_drift_sums_to_zero_and_is_bounded(N, seed, eps):
    rk = RegularizedKernel(eps)
    x = disk_points(N, seed)
    d = pairwise_drift(x, rk)
    assert np.abs(d.sum(axis=0)).max() <= 1e-12 * N * rk.sup_norm
    assert np.linalg.norm(d, axis=1).max() <= rk.sup_norm * (1 + 1e-12)


@given(st.integers(2, 30), st.integers(0, 10**6))
def test_drift_permutation_equivariant(N, seed):
    rk = RegularizedKernel(0.05)
    x = disk_points(N, seed)
    perm = np.random.default_rng(seed).permutation(N)
    np.testing.assert_array_equal(pairwise_drift(x[perm], rk), pairwise_drift(x, rk)[perm])


def test_drift_batched_matches_single():
    rk = RegularizedKernel(0.1)
    xs = np.stack([disk_points(8, s) for s in range(3)])
    batched = pairwise_drift(xs, rk)
    for b in range(3):
        np.testing.assert_array_equal(batched[b], pairwise_drift(xs[b], rk))


def test_unregularized_guard():
    with pytest.raises(CollisionEvent):
        pairwise_drift(np.array([[0.0, 0.0], [0.0, 1e-12]]), None)
    d = pairwise_drift(np.array([[0.0, 0.0], [1.0, 0.0]]), None)
    np.testing.assert_allclose(d, [[1 / (2 * np.pi), 0], [-1 / (2 * np.pi), 0]], rtol=1e-15)


def test_step_examples():
    cfg = SimConfig(N=2, nu=0.0, eps=0.1, dt=0.2, T=1.0, seed=0, domain=DISK)
    ens = ParticleEnsemble(np.array([[0.9, 0.0], [0.0, 0.0]]))
    step(ens, cfg, None, drift=np.array([[1.0, 0.0], [0.0, 0.0]]), noise=np.zeros((2, 2)))
    np.testing.assert_allclose(ens.positions[0], [1.0, 0.0])
    np.testing.assert_array_equal(ens.positions[1], [0.0, 0.0])
    np.testing.assert_allclose(ens.reflection_tv, [0.1, 0.0], rtol=1e-12)
    assert ens.time == pytest.approx(0.2)


def test_reflected_step_no_motion():
    x = np.array([[0.3, 0.2]])
    new, disp = reflected_step(x, np.zeros((1, 2)), 0.1, 0.0, np.ones((1, 2)), DISK)
    np.testing.assert_array_equal(new, x)
    assert disp[0] == 0


def test_interior_run_has_no_reflection():
    cfg = SimConfig(N=10, nu=0.01, eps=0.2, dt=1e-4, T=1e-2, seed=3, domain=DISK)
    traj = simulate(cfg, np.zeros((10, 2)) + np.linspace(-0.01, 0.01, 10)[:, None])
    np.testing.assert_array_equal(traj.reflection_tv, 0.0)


def test_zero_horizon_returns_initial_state():
    x = disk_points(5, 2)
    traj = simulate(SimConfig(N=5, nu=0.1, eps=0.1, dt=1e-3, T=0.0, seed=0, domain=DISK), x)
    np.testing.assert_array_equal(traj.positions[0], x)
    np.testing.assert_array_equal(traj.positions[-1], x)


def test_containment_and_tv_monotone():
    cfg = SimConfig(N=64, nu=0.05, eps=0.2, dt=1e-3, T=0.5, seed=1, domain=DISK,
                    snapshot_times=tuple(np.arange(0, 0.5001, 0.05)))
    traj = simulate(cfg, lambda N, rng: DISK.sample_uniform(N, rng))
    assert DISK.contains(traj.positions.reshape(-1, 2)).all()
    assert len(traj.times) == 11
    assert (traj.reflection_tv >= 0).all()


def test_exchangeability():
    N = 12
    cfg = SimConfig(N=N, nu=0.2, eps=0.1, dt=1e-3, T=0.05, seed=9, domain=DISK)
    x = disk_points(N, 4)
    perm = np.random.default_rng(0).permutation(N)
    a = simulate(cfg, x)
    b = simulate(cfg, x[perm], streams=StreamBank(cfg.seed, "brownian", perm, 2))
    np.testing.assert_array_equal(b.positions, a.positions[:, perm])
    np.testing.assert_array_equal(b.reflection_tv, a.reflection_tv[perm])


def test_center_of_mass_moves_only_by_noise():
    cfg = SimConfig(N=20, nu=0.01, eps=0.1, dt=1e-3, T=0.02, seed=2, domain=Rectangle([-5, -5], [5, 5]))
    rk = cfg.kernel()
    streams = particle_streams(cfg)
    ens = ParticleEnsemble(disk_points(20, 5) * 0.5)
    for k in range(20):
        before = ens.positions.sum(axis=0)
        noise = streams.normals(k)
        step(ens, cfg, rk, noise=noise)
        expected = before + np.sqrt(2 * cfg.nu * cfg.dt) * noise.sum(axis=0)
        np.testing.assert_allclose(ens.positions.sum(axis=0), expected, atol=1e-10)
        assert (ens.reflection_tv == 0).all()


def test_determinism():
    cfg = SimConfig(N=16, nu=0.1, eps=0.1, dt=1e-3, T=0.05, seed=11, domain=DISK)
    init = lambda N, rng: DISK.sample_uniform(N, rng)
    a, b = simulate(cfg, init), simulate(cfg, init)
    assert a.positions.tobytes() == b.positions.tobytes()


def test_config_validation():
    base = dict(N=4, nu=0.1, eps=0.1, dt=1e-3, T=0.1, seed=0, domain=DISK)
    for bad in (dict(N=1), dict(nu=-1), dict(dt=0), dict(dt=1.0), dict(eps=-0.1)):
        with pytest.raises(ConfigError):
            SimConfig(**{**base, **bad})
    with pytest.raises(ConfigError):
        simulate(SimConfig(**base, snapshot_times=(0.0005,)), disk_points(4, 0))
    with pytest.raises(ConfigError):
        simulate(SimConfig(**base), np.full((4, 2), 3.0))
    cfg = SimConfig(**{**base, "domain": {"disk": {"center": [0, 0], "radius": 1}}})
    assert isinstance(cfg.domain, Disk)


def test_default_dt_limits_drift_displacement():
    rk = RegularizedKernel(0.01)
    dt = default_dt(rk)
    assert dt <= 1e-3 and rk.sup_norm * dt <= 0.1 * rk.eps * (1 + 1e-12)


def test_unregularized_run_reports_collision():
    cfg = SimConfig(N=3, nu=0.0, eps=0.0, dt=1e-3, T=1.0, seed=0, domain=DISK)
    traj = simulate(cfg, np.array([[0.1, 0.0], [0.1, 0.0], [-0.5, 0.0]]))
    assert traj.collision_time == 0.0 and sorted(traj.collision_pair) == [0, 1]


def test_unregularized_pair_can_step_past_the_guard():
    # explicit steps jump over the guard radius; the collision study adds a
    # resolution radius and a segment check for this reason
    cfg = SimConfig(N=2, nu=0.0, eps=0.0, dt=1e-3, T=0.05, seed=0, domain=DISK)
    traj = simulate(cfg, np.array([[-0.05, 0.0], [0.05, 0.0]]))
    assert traj.collision_time is None
    # the overshoot ejects the pair far from each other
    assert min_pairwise_distance(traj.positions[-1]) > 0.1


def test_min_pairwise_distance():
    assert min_pairwise_distance(np.array([[0.0, 0.0], [1.0, 0.0]])) == 1.0
    assert min_pairwise_distance(np.array([[0.3, 0.3], [0.3, 0.3], [1, 1]])) == 0.0
    x = disk_points(5, 8)
    brute = min(np.linalg.norm(x[i] - x[j]) for i in range(5) for j in range(i + 1, 5))
    assert min_pairwise_distance(x) == brute
