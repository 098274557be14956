"""Checks of the finite-volume solver and of the SDE/PDE correspondence."""

from __future__ import annotations

import numpy as np

from ..kernel import RegularizedKernel
from ..meanfield import (DensityGrid, PDEConfig, sample_density, simulate_meanfield_sde,
                         sde_streams, solve_pde, velocity_bound)
from ..metrics import w_p_empirical
from ..particles import SimConfig
from ..rng import stream
from .common import StudyReport
from .lemmas import UNIT_SQUARE, bump_density, calibrate_convolution_constant


def conservation_run(n=128, nu=0.1, eps=0.1, steps=10_000, peak=2.0):
    """Mass drift and positivity over ``steps`` explicit steps from a bump."""
    rho0 = bump_density(peak, n)
    umax = velocity_bound(rho0.domain, 4 * rho0.linf())
    dt = PDEConfig.stable_dt(nu, rho0.domain, (n, n), 0.0, umax)
    cfg = PDEConfig(nu=nu, eps=eps, dt=dt, T=steps * dt, grid=(n, n))
    traj = solve_pde(rho0, cfg, RegularizedKernel(eps, 2))
    m0, m1 = rho0.mass(), traj.frames[-1].mass()
    return {"steps": steps, "dt": dt, "mass0": m0, "mass_T": m1,
            "rel_mass_drift": abs(m1 - m0) / m0, "min_cell": float(traj.frames[-1].cells.min())}


def heat_mode_check(n=128, nu=0.1, t=0.5, amp=0.5):
    """Force-free solver on the unit square from ``1 + amp cos(pi x)``.

    The cosine amplitude (discrete projection onto the mode) must decay like
    ``exp(-nu pi^2 t)``. Returns the relative amplitude error.
    """
    rho0 = DensityGrid.from_function(UNIT_SQUARE, n, n, lambda x, y: 1 + amp * np.cos(np.pi * x),
                                     normalize=False)
    dt = PDEConfig.stable_dt(nu, UNIT_SQUARE, (n, n), t)
    cfg = PDEConfig(nu=nu, eps=0.0, dt=dt, T=t, grid=(n, n), force=False)
    traj = solve_pde(rho0, cfg, None)
    mode = np.cos(np.pi * rho0.centers()[..., 0])

    def amplitude(g):
        return float(((g.cells - g.cells.mean()) * mode).sum() / (mode * mode).sum())

    a0, a1 = amplitude(rho0), amplitude(traj.frames[-1])
    expected = a0 * np.exp(-nu * np.pi**2 * t)
    return {"t": t, "amp0": a0, "amp_t": a1, "expected": expected,
            "rel_err": abs(a1 - expected) / abs(expected)}


def linf_bound_study(peaks=(1.0, 2.0, 4.0), nu=0.1, eps=0.1, n=64):
    """sup_t ||rho_t||_inf against 2 ||rho_0||_inf on ``[0, T*]``,
    ``T* = 3 / (8 C ||rho_0||_inf^2)`` with C calibrated on the same battery."""
    C = calibrate_convolution_constant(eps, n, peaks)
    rk = RegularizedKernel(eps, 2)
    rows = []
    for peak in peaks:
        rho0 = bump_density(peak, n)
        l0 = rho0.linf()
        T_star = 3.0 / (8.0 * C * l0**2)
        umax = velocity_bound(rho0.domain, 2 * l0)
        dt = PDEConfig.stable_dt(nu, rho0.domain, (n, n), T_star, umax)
        traj = solve_pde(rho0, PDEConfig(nu=nu, eps=eps, dt=dt, T=T_star, grid=(n, n)), rk)
        rows.append({"peak": l0, "C": C, "T_star": T_star, "sup_linf": traj.sup_linf,
                     "ratio": traj.sup_linf / l0})
    return rows


def histogram_l1(points, rho, bins=8):
    """L1 distance between the empirical histogram of ``points`` and ``rho``'s mass
    on a ``bins x bins`` partition aligned with the density grid."""
    if rho.nx % bins or rho.ny % bins:
        raise ValueError("bins must divide the grid")
    lo, hi = rho.domain.lo, rho.domain.hi
    H, _, _ = np.histogram2d(points[:, 0], points[:, 1], bins=bins,
                             range=[[lo[0], hi[0]], [lo[1], hi[1]]])
    emp = H / len(points)
    bx, by = rho.nx // bins, rho.ny // bins
    mass = rho.cells.reshape(bins, bx, bins, by).sum(axis=(1, 3)) * rho.cell_area
    return float(np.abs(emp - mass / mass.sum()).sum())


def linkage_check(M=100_000, T=0.25, nu=0.1, eps=0.1, n=64, dt=1e-3, seed=0, M_w2=8192,
                  bins=8, peak=2.0):
    """Mean-field SDE samples against the PDE density at time ``T``."""
    rho0 = bump_density(peak, n)
    rk = RegularizedKernel(eps, 2)
    umax = velocity_bound(rho0.domain, 4 * rho0.linf())
    dt_pde = PDEConfig.stable_dt(nu, rho0.domain, (n, n), dt, umax)
    sub = int(round(dt / dt_pde))
    traj = solve_pde(rho0, PDEConfig(nu=nu, eps=eps, dt=dt / sub, T=T, grid=(n, n),
                                     snapshot_every=sub), rk)
    cfg = SimConfig(N=M, nu=nu, eps=eps, dt=dt, T=T, seed=seed, domain=UNIT_SQUARE)
    _, pos, _ = simulate_meanfield_sde(M, traj, cfg, rk, streams=sde_streams(seed, M))
    yT = pos[-1]
    rhoT = traj.frames[-1]
    l1 = histogram_l1(yT, rhoT, bins)
    ref = sample_density(rhoT, M_w2, stream(seed, "reference"))
    w2 = w_p_empirical(yT[:M_w2], ref, 2)[0]
    # the same estimator between two independent samples of rho_T: the noise floor
    floor = w_p_empirical(sample_density(rhoT, M_w2, stream(seed, "reference", 1)), ref, 2)[0]
    return {"M": M, "T": T, "hist_l1": l1, "bins": bins, "w2": w2, "w2_floor": floor,
            "M_w2": M_w2}


def pde_report(quick=False):
    rep = StudyReport("pde-checks", {"quick": quick})
    c = conservation_run(steps=1000 if quick else 10_000)
    rep.points.append({"check": "conservation", **c})
    rep.verdict("relative mass drift", c["rel_mass_drift"] <= 1e-10, c["rel_mass_drift"],
                "<= 1e-10", c["steps"])
    rep.verdict("positivity", c["min_cell"] >= 0, c["min_cell"], "min cell >= 0", c["steps"])
    h = heat_mode_check()
    rep.points.append({"check": "heat-mode", **h})
    rep.verdict("cos(pi x) mode decay", h["rel_err"] <= 0.02, h["rel_err"], "rel err <= 2%", 1)
    rows = linf_bound_study()
    rep.points += [{"check": "linf-bound", **r} for r in rows]
    worst = max(r["ratio"] for r in rows)
    rep.verdict("sup_t ||rho_t|| <= 2 ||rho_0|| on [0, T*]", worst <= 2.0, worst,
                "ratio <= 2", len(rows))
    return rep
