import numpy as np
import pytest

from kschaos.errors import BlowupDetected, CflViolation, ConfigError
from kschaos.geometry import Rectangle
from kschaos.kernel import RegularizedKernel, convolve_force_density
from kschaos.meanfield import (AliasSampler, DensityGrid, DensityTrajectory, ForceField,
                               GridVelocity, PDEConfig, fv_step, sample_density,
                               simulate_meanfield_sde, solve_linear_pde, solve_pde,
                               velocity_bound)
from kschaos.particles import SimConfig
from kschaos.rng import stream

SQ = Rectangle([0, 0], [1, 1])


def bump(n=32, domain=SQ, w=0.15, c=(0.5, 0.5)):
    return DensityGrid.from_function(
        domain, n, n, lambda x, y: np.exp(-((x - c[0]) ** 2 + (y - c[1]) ** 2) / (2 * w**2)) + 0.1)


def test_grid_basics():
    g = DensityGrid.uniform(Rectangle([0, 0], [2, 1]), 4, 2)
    assert g.cell_area == 0.25 and g.mass() == pytest.approx(1.0)
    np.testing.assert_allclose(g.axes()[0], [0.25, 0.75, 1.25, 1.75])
    with pytest.raises(ConfigError):
        DensityGrid(Rectangle([0, 0, 0], [1, 1, 1]), np.ones((2, 2)))


def test_force_field_matches_direct_sum():
    rk = RegularizedKernel(0.1)
    g = bump(24)
    ff = ForceField(rk, SQ, 24, 24)
    centres = g.centers()
    np.testing.assert_allclose(ff.centers(g.cells), convolve_force_density(rk, g, centres),
                               atol=1e-12)
    ux, uy = ff.faces(g.cells)
    hx = g.h[0]
    xf = np.stack(np.meshgrid(np.arange(25) * hx, g.axes()[1], indexing="ij"), axis=-1)
    np.testing.assert_allclose(ux, convolve_force_density(rk, g, xf)[..., 0], atol=1e-12)
    yf = np.stack(np.meshgrid(g.axes()[0], np.arange(25) * hx, indexing="ij"), axis=-1)
    np.testing.assert_allclose(uy, convolve_force_density(rk, g, yf)[..., 1], atol=1e-12)


def test_uniform_velocity_is_antisymmetric():
    rk = RegularizedKernel(0.1)
    g = DensityGrid.uniform(SQ, 32, 32)
    v = ForceField(rk, SQ, 32, 32).centers(g.cells)
    np.testing.assert_allclose(v[::-1, :, 0], -v[:, :, 0], atol=1e-13)
    np.testing.assert_allclose(v[:, ::-1, 1], -v[:, :, 1], atol=1e-13)
    assert np.abs(v).max() <= velocity_bound(SQ, 1.0)


def test_uniform_with_zero_velocity_is_fixed_point():
    g = DensityGrid.uniform(SQ, 16, 16)
    cfg = PDEConfig(nu=0.1, eps=0.1, dt=1e-4, T=1e-3)
    zero = (np.zeros((17, 16)), np.zeros((16, 17)))
    out = fv_step(g, cfg, velocity=zero)
    np.testing.assert_array_equal(out.cells, g.cells)


def test_step_conserves_mass_and_positivity():
    rk = RegularizedKernel(0.1)
    g = bump(32)
    cfg = PDEConfig(nu=0.1, eps=0.1, dt=1e-4, T=1e-3)
    ff = ForceField(rk, SQ, 32, 32)
    out = g
    for _ in range(20):
        out = fv_step(out, cfg, ff)
        assert abs(out.mass() - 1.0) < 1e-12
        assert out.cells.min() >= 0


def test_zero_horizon():
    g = bump(16)
    traj = solve_pde(g, PDEConfig(nu=0.1, eps=0.1, dt=1e-4, T=0.0), RegularizedKernel(0.1))
    np.testing.assert_array_equal(traj.frames[-1].cells, g.cells)


def test_symmetry_preserved():
    g = bump(32)
    g.cells = 0.5 * (g.cells + g.cells[::-1, :])
    g.cells = 0.5 * (g.cells + g.cells[:, ::-1])
    traj = solve_pde(g, PDEConfig(nu=0.1, eps=0.1, dt=2e-4, T=0.02), RegularizedKernel(0.1))
    c = traj.frames[-1].cells
    np.testing.assert_allclose(c, c[::-1, :], atol=1e-12)
    np.testing.assert_allclose(c, c[:, ::-1], atol=1e-12)


def test_heat_mode_decay():
    n, nu, T = 64, 0.1, 0.1
    g = DensityGrid.from_function(SQ, n, n, lambda x, y: 1 + 0.5 * np.cos(np.pi * x))
    dt = PDEConfig.stable_dt(nu, SQ, (n, n), T)
    traj = solve_pde(g, PDEConfig(nu=nu, eps=0.1, dt=dt, T=T, force=False), None)
    xs = g.axes()[0]
    amp = lambda c: 2 * np.mean((c.mean(axis=1) - 1) * np.cos(np.pi * xs))
    ratio = amp(traj.frames[-1].cells) / amp(g.cells)
    assert ratio == pytest.approx(np.exp(-nu * np.pi**2 * T), rel=0.02)


def test_cfl_violations():
    g = bump(64)
    with pytest.raises(CflViolation):
        solve_pde(g, PDEConfig(nu=1.0, eps=0.1, dt=1e-3, T=1e-2), RegularizedKernel(0.1))
    cfg = PDEConfig(nu=1e-3, eps=0.1, dt=1e-2, T=1e-2)
    fast = (np.full((65, 64), 10.0), np.zeros((64, 65)))
    with pytest.raises(CflViolation):
        fv_step(g, cfg, velocity=fast)


def test_blowup_detected():
    g = bump(32, w=0.05)
    cfg = PDEConfig(nu=1e-3, eps=0.02, dt=2e-3, T=2.0, blowup_factor=1.5)
    with pytest.raises(BlowupDetected):
        solve_pde(g, cfg, RegularizedKernel(0.02))


def test_linear_equation_self_consistent():
    rk = RegularizedKernel(0.1)
    g = bump(24)
    cfg = PDEConfig(nu=0.1, eps=0.1, dt=2e-4, T=4e-3, snapshot_every=1)
    full = solve_pde(g, cfg, rk)
    lin = solve_linear_pde(g, full, cfg, rk)
    for a, b in zip(full.frames, lin.frames):
        np.testing.assert_allclose(a.cells, b.cells, atol=1e-12, rtol=0)


def test_linear_equation_with_zero_density_is_diffusion():
    rk = RegularizedKernel(0.1)
    g = bump(24)
    cfg = PDEConfig(nu=0.1, eps=0.1, dt=2e-4, T=4e-3)
    zero = DensityTrajectory(np.array([0.0]), [g.with_cells(np.zeros_like(g.cells))])
    lin = solve_linear_pde(g, zero, cfg, rk)
    heat = solve_pde(g, PDEConfig(nu=0.1, eps=0.1, dt=2e-4, T=4e-3, force=False), None)
    np.testing.assert_array_equal(lin.frames[-1].cells, heat.frames[-1].cells)


def test_linear_equation_with_uniform_driver():
    rk = RegularizedKernel(0.1)
    g = bump(24)
    u = DensityGrid.uniform(SQ, 24, 24)
    cfg = PDEConfig(nu=0.1, eps=0.1, dt=2e-4, T=2e-3)
    lin = solve_linear_pde(g, DensityTrajectory(np.array([0.0]), [u]), cfg, rk)
    vel = ForceField(rk, SQ, 24, 24).faces(u.cells)
    ref = g
    for _ in range(10):
        ref = fv_step(ref, cfg, velocity=vel)
    np.testing.assert_array_equal(lin.frames[-1].cells, ref.cells)


def test_alias_sampler_frequencies():
    w = np.array([0.1, 0.0, 0.6, 0.3])
    k = AliasSampler(w).sample(200_000, np.random.default_rng(0))
    freq = np.bincount(k, minlength=4) / len(k)
    np.testing.assert_allclose(freq, w, atol=4 * np.sqrt(0.25 / len(k)))
    assert freq[1] == 0
    with pytest.raises(ValueError):
        AliasSampler([0.0, 0.0])


def test_sample_density_examples():
    one = DensityGrid.uniform(Rectangle([0, 0], [2, 3]), 1, 1)
    x = sample_density(one, 1000, stream(0, "t"))
    assert (x >= 0).all() and (x[:, 0] <= 2).all() and (x[:, 1] <= 3).all()
    hot = np.zeros((8, 8))
    hot[2, 5] = 64.0
    x = sample_density(DensityGrid(SQ, hot), 1000, stream(0, "t"))
    assert ((x[:, 0] >= 2 / 8) & (x[:, 0] <= 3 / 8) & (x[:, 1] >= 5 / 8) & (x[:, 1] <= 6 / 8)).all()


def test_sample_density_uniform_mean_clt():
    M = 1_000_000
    x = sample_density(DensityGrid.uniform(SQ, 16, 16), M, stream(1, "t"))
    se = np.sqrt(1 / 12 / M)
    np.testing.assert_array_less(np.abs(x.mean(axis=0) - 0.5), 3 * se)


def test_grid_velocity_bilinear():
    g = DensityGrid.uniform(SQ, 4, 4)
    X, Y = np.moveaxis(g.centers(), -1, 0)
    vals = np.stack([2 * X + 3 * Y, X - Y], axis=-1)
    gv = GridVelocity(g, vals)
    p = np.array([[0.3, 0.4], [0.6, 0.55]])
    np.testing.assert_allclose(gv(p), np.stack([2 * p[:, 0] + 3 * p[:, 1], p[:, 0] - p[:, 1]], 1))
    # clamped outside the outer centres
    np.testing.assert_allclose(gv(np.array([[0.0, 0.0]])), gv(np.array([[0.125, 0.125]])))


def test_meanfield_sde_constant_without_force_or_noise():
    g = bump(16)
    traj = DensityTrajectory(np.array([0.0]), [g])
    cfg = SimConfig(N=2, nu=0.0, eps=0.1, dt=1e-2, T=0.1, seed=0, domain=SQ)

    class Zero:
        def at(self, t):
            return lambda y: np.zeros_like(y)

    t, x, tv = simulate_meanfield_sde(50, traj, cfg, None, drift=Zero())
    np.testing.assert_array_equal(x[0], x[-1])
    np.testing.assert_array_equal(tv, 0.0)


def test_meanfield_sde_shares_particle_streams():
    from kschaos.particles import particle_streams

    g = bump(16)
    traj = DensityTrajectory(np.array([0.0]), [g])
    cfg = SimConfig(N=5, nu=0.1, eps=0.1, dt=1e-2, T=0.05, seed=3, domain=SQ)
    init = np.full((5, 2), 0.5)

    class Zero:
        def at(self, t):
            return lambda y: np.zeros_like(y)

    _, x, _ = simulate_meanfield_sde(5, traj, cfg, None, init=init, drift=Zero())
    bank = particle_streams(cfg)
    expect = init + np.sqrt(2 * 0.1 * 0.01) * sum(bank.normals(k) for k in range(5))
    np.testing.assert_allclose(x[-1], np.clip(expect, 0, 1), atol=1e-14)


def test_pde_config_validation():
    with pytest.raises(ConfigError):
        PDEConfig(nu=0, eps=0.1, dt=1e-3, T=1)
    with pytest.raises(ConfigError):
        PDEConfig(nu=0.1, eps=0, dt=1e-3, T=1)
    PDEConfig(nu=0.1, eps=0, dt=1e-3, T=1, force=False)
    dt = PDEConfig.stable_dt(0.1, SQ, (64, 64), 0.25, umax=2.0)
    assert dt * 2.0 <= 0.5 / 64 and 0.1 * dt * 2 * 64**2 <= 0.25
    assert 0.25 / dt == pytest.approx(round(0.25 / dt))
