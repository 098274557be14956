"""Scaling of the consistency error H_N for i.i.d. samples of a density.

``H_N = max_i |(N-1)^-1 sum_{j != i} F_eps(Y_i - Y_j) - (F_eps * rho)(Y_i)|``
with ``Y_i`` i.i.d. from ``rho`` and eps fixed; ``E[H_N^2]`` should decay
like ``1 / (N - 1)``.
"""

from __future__ import annotations

import functools

import numpy as np

from ..kernel import RegularizedKernel
from ..meanfield import ForceField, GridVelocity, sample_density
from ..metrics import consistency_terms
from ..rng import stream
from .common import StudyConfig, StudyReport, fit_slope, mean_se, run_replicas
from .lemmas import bump_density


@functools.lru_cache(maxsize=4)
def _setup(eps, peak, grid):
    rho = bump_density(peak, grid)
    rk = RegularizedKernel(eps, 2)
    field = GridVelocity(rho, ForceField(rk, rho.domain, grid, grid).centers(rho.cells))
    return rho, rk, field


def _replica(task):
    p, N, r = task
    rho, rk, field = _setup(p["eps"], p["peak"], p["grid"])
    Y = sample_density(rho, N, stream(p["seed"], "consistency", N, r))
    terms = consistency_terms(Y, rho, rk, field_values=field)
    return float(terms.max() ** 2), float(np.mean(terms**2))


def consistency_study(cfg: StudyConfig) -> StudyReport:
    """Params: ``init_peak`` (2) and ``grid`` (128) for the density."""
    eps = cfg.eps_rule.eps(cfg.N_list[0])
    p = {"eps": eps, "peak": float(cfg.get("init_peak", 2.0)), "grid": int(cfg.get("grid", 128)),
         "seed": cfg.seed}
    tasks = [(p, N, r) for N in cfg.N_list for r in range(cfg.replicas)]
    res = run_replicas(_replica, tasks, cfg.workers)
    rep = StudyReport("consistency-study", cfg.to_dict())
    for k, N in enumerate(cfg.N_list):
        chunk = res[k * cfg.replicas:(k + 1) * cfg.replicas]
        m, se = mean_se([c[0] for c in chunk])
        mm, mse = mean_se([c[1] for c in chunk])
        rep.points.append({"N": N, "eps": eps, "R": cfg.replicas, "hN2_mean": m, "hN2_se": se,
                           "term2_mean": mm, "term2_se": mse})
    x = [N - 1 for N in cfg.N_list]
    s, se = fit_slope(x, [q["hN2_mean"] for q in rep.points])
    s2, se2 = fit_slope(x, [q["term2_mean"] for q in rep.points])
    rep.slopes["hN2_vs_N_minus_1"] = {"slope": s, "se": se}
    rep.slopes["mean_term2_vs_N_minus_1"] = {"slope": s2, "se": se2}
    rep.verdict("log E[H_N^2] vs log(N-1) slope", abs(s + 1) <= 0.15, s, "-1 +/- 0.15",
                cfg.replicas * len(cfg.N_list), detail=f"SE {se:.3g}")
    return rep
