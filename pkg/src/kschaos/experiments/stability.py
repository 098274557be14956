"""Stability of the mean-field dynamics under translation of the initial density.

``rho0_2 = rho0_1(. - h e1)`` with a compactly supported bump away from the
walls, so ``W_inf(rho0_1, rho0_2) = |h|`` and the coupling ``Y0_2 = Y0_1 + h e1``
realizes it. Both mean-field SDEs share their Brownian increments. The
ensemble sup-gap should vanish as ``h -> 0`` with a log-log slope in (0, 1].
"""

from __future__ import annotations

import functools

import numpy as np

from ..geometry import Rectangle
from ..kernel import RegularizedKernel
from ..meanfield import DensityGrid, MeanFieldDrift, PDEConfig, sample_density, solve_pde
from ..meanfield import velocity_bound
from ..metrics import coupled_gaps
from ..particles import reflected_step, steps_for
from ..rng import StreamBank, stream
from .common import StudyConfig, StudyReport, fit_slope, mean_se, run_replicas

SQUARE = Rectangle([0.0, 0.0], [1.0, 1.0])


def bump(center, radius, grid=64, domain=SQUARE):
    """Smooth compactly supported bump ``exp(-1/(1 - s^2))``, ``s = |x - c| / radius``, unit mass."""
    cx, cy = center

    def f(x, y):
        s2 = ((x - cx) ** 2 + (y - cy) ** 2) / radius**2
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(s2 < 1.0, np.exp(-1.0 / (1.0 - np.minimum(s2, 1 - 1e-300))), 0.0)

    return DensityGrid.from_function(domain, grid, grid, f)


@functools.lru_cache(maxsize=8)
def _pde(h, p_key):
    nu, eps, T, dt, grid, cx, cy, radius = p_key
    rho0 = bump((cx + h, cy), radius, grid)
    rk = RegularizedKernel(eps, 2)
    umax = velocity_bound(rho0.domain, 4 * rho0.linf())
    dt_pde = PDEConfig.stable_dt(nu, rho0.domain, (grid, grid), dt, umax)
    sub = int(round(dt / dt_pde))
    cfg = PDEConfig(nu=nu, eps=eps, dt=dt / sub, T=T, grid=(grid, grid), snapshot_every=sub)
    return rho0, solve_pde(rho0, cfg, rk)


def _replica(task):
    p, h, r = task
    key = p["key"]
    nu, eps, T, dt = key[:4]
    rho1, traj1 = _pde(0.0, key)
    _, traj2 = _pde(h, key)
    rk = RegularizedKernel(eps, 2)
    d1, d2 = MeanFieldDrift(traj1, rk), MeanFieldDrift(traj2, rk)
    M = p["M"]
    y1 = sample_density(rho1, M, stream(p["seed"], "init", r))
    y2 = y1 + [h, 0.0]
    bank = StreamBank(p["seed"], "brownian", [(r, i) for i in range(M)], 2)
    n = steps_for(T, dt, "T")
    sup_t = float(coupled_gaps(y1, y2).max())
    for k in range(n):
        noise = bank.normals(k)
        y1, _ = reflected_step(y1, d1.at(k * dt)(y1), dt, nu, noise, SQUARE)
        y2, _ = reflected_step(y2, d2.at(k * dt)(y2), dt, nu, noise, SQUARE)
        sup_t = max(sup_t, float(coupled_gaps(y1, y2).max()))
    return float(coupled_gaps(y1, y2).max()), sup_t


def stability_study(cfg: StudyConfig) -> StudyReport:
    """Params: ``h_grid`` ((0, 1e-1, 1e-2, 1e-3)), ``center`` ((0.4, 0.5)),
    ``radius`` (0.3), ``grid`` (64). ``N_list[0]`` is the number of coupled paths."""
    hs = tuple(float(h) for h in cfg.get("h_grid", (0.0, 1e-1, 1e-2, 1e-3)))
    cx, cy = cfg.get("center", (0.4, 0.5))
    key = (cfg.nu, cfg.eps_rule.eps(cfg.N_list[0]), cfg.T, cfg.dt, int(cfg.get("grid", 64)),
           float(cx), float(cy), float(cfg.get("radius", 0.3)))
    p = {"key": key, "M": cfg.N_list[0], "seed": cfg.seed}
    tasks = [(p, h, r) for h in hs for r in range(cfg.replicas)]
    res = run_replicas(_replica, tasks, cfg.workers)
    rep = StudyReport("stability-study", cfg.to_dict())
    for k, h in enumerate(hs):
        chunk = res[k * cfg.replicas:(k + 1) * cfg.replicas]
        mT, seT = mean_se([c[0] for c in chunk])
        ms, ses = mean_se([c[1] for c in chunk])
        rep.points.append({"h": h, "R": cfg.replicas, "M": cfg.N_list[0], "gap_T_mean": mT,
                           "gap_T_se": seT, "sup_gap_mean": ms, "sup_gap_se": ses})
    zero = [q for q in rep.points if q["h"] == 0]
    if zero:
        rep.verdict("h = 0 gives zero gap", zero[0]["sup_gap_mean"] == 0.0,
                    zero[0]["sup_gap_mean"], "exactly 0", cfg.replicas)
    pos = sorted((q for q in rep.points if q["h"] > 0), key=lambda q: q["h"])
    if len(pos) >= 2:
        g = [q["gap_T_mean"] for q in pos]
        rep.verdict("terminal gap decreasing as h -> 0", all(a < b for a, b in zip(g, g[1:])),
                    g, "strictly increasing in h", cfg.replicas)
        s, se = fit_slope([q["h"] for q in pos], [q["sup_gap_mean"] for q in pos])
        rep.slopes["sup_gap_vs_h"] = {"slope": s, "se": se}
        ok = s > 0 and s - 2 * (se if np.isfinite(se) else 0.0) <= 1.0
        rep.verdict("log sup-gap vs log h slope in (0, 1]", ok, s,
                    "slope > 0 and slope - 2 SE <= 1", cfg.replicas * len(pos),
                    detail=f"SE {se:.3g}")
    return rep
