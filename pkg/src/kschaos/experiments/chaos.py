"""Propagation of chaos through the synchronous coupling.

For each N the particle system X and N mean-field SDE paths Y are started
from the same i.i.d. sample of rho_0 and driven by the same Brownian
increments. At the recording times the study measures
``sup_i |X_i - Y_i|``, ``W_2(mu^X, mu^Y)``, and ``W_2(mu^X, rho_t)``,
``W_2(mu^Y, rho_t)`` against one shared reference sample of ``rho_t``, so
that the triangle inequality can be audited exactly per replica.
"""

from __future__ import annotations

import functools
import math

from ..errors import BlowupDetected, ConfigError
from ..geometry import Rectangle, domain_from_config
from ..kernel import RegularizedKernel, omega
from ..meanfield import MeanFieldDrift, PDEConfig, sample_density, solve_pde, velocity_bound
from ..metrics import coupled_gaps, w2_vs_reference, w_p_empirical, winf_coupled
from ..particles import pairwise_drift, reflected_step, steps_for
from ..rng import StreamBank, stream
from .common import StudyConfig, StudyReport, fit_slope, mean_se, run_replicas
from .lemmas import bump_density

DEFAULT_DOMAIN = {"rect": {"min": [0.0, 0.0], "max": [1.0, 1.0]}}


def initial_density(params):
    """Initial density from study params: ``init_peak`` (Gaussian bump) on ``domain``."""
    domain = domain_from_config(params.get("domain", DEFAULT_DOMAIN))
    if not isinstance(domain, Rectangle):
        raise ConfigError("chaos and stability studies need a rectangle", "params.domain")
    n = int(params.get("grid", 64))
    return bump_density(float(params.get("init_peak", 2.0)), n, domain)


@functools.lru_cache(maxsize=8)
def reference_pde(nu, eps, T, dt, grid, peak, domain_key):
    """Regularized PDE from the initial bump, with a frame at every particle step."""
    params = {"grid": grid, "init_peak": peak, "domain": _domain_cfg(domain_key)}
    rho0 = initial_density(params)
    rk = RegularizedKernel(eps, 2)
    umax = velocity_bound(rho0.domain, 4 * rho0.linf())
    dt_pde = PDEConfig.stable_dt(nu, rho0.domain, (grid, grid), dt, umax)
    sub = int(round(dt / dt_pde))
    cfg = PDEConfig(nu=nu, eps=eps, dt=dt / sub, T=T, grid=(grid, grid), snapshot_every=sub)
    return rho0, solve_pde(rho0, cfg, rk)


def _domain_key(d):
    return tuple(d["rect"]["min"]) + tuple(d["rect"]["max"])


def _domain_cfg(key):
    return {"rect": {"min": list(key[:2]), "max": list(key[2:])}}


def _pde_for(p, eps):
    dom = p.get("domain", DEFAULT_DOMAIN)
    return reference_pde(p["nu"], eps, p["T"], p["dt"], int(p.get("grid", 64)),
                         float(p.get("init_peak", 2.0)), _domain_key(dom))


def ref_size(N, cap=4096):
    """Reference sample size: 4 N, lowered to a multiple of N no larger than ``cap`` (at least N)."""
    return N * max(1, min(4, cap // N))


def coupled_run(task):
    """One replica at one N: returns per-recording-time metrics."""
    p, N, eps, r = task
    rho0, traj = _pde_for(p, eps)
    domain = rho0.domain
    rk = RegularizedKernel(eps, 2)
    dt, nu = p["dt"], p["nu"]
    rec = sorted({steps_for(t, dt, "record_times") for t in p["record_times"]})
    n = steps_for(p["T"], dt, "T")
    seed = p["seed"]
    x = sample_density(rho0, N, stream(seed, "init", N, r))
    y = x.copy()
    bank = StreamBank(seed, "brownian", [(N, r, i) for i in range(N)], 2)
    drift_y = MeanFieldDrift(traj, rk)
    out = []
    for k in range(n + 1):
        if k in rec:
            t = k * dt
            ref = sample_density(traj.at(t), ref_size(N, p.get("ref_cap", 4096)),
                                 stream(seed, "reference", N, r, k))
            gaps = coupled_gaps(x, y)
            w_xy = w_p_empirical(x, y, 2)[0]
            w_x = w2_vs_reference(x, ref)
            w_y = w2_vs_reference(y, ref)
            out.append({"t": t, "sup_gap": winf_coupled(gaps), "w2_xy": w_xy,
                        "w2_x_rho": w_x, "w2_y_rho": w_y,
                        "triangle_slack": w_xy + w_y - w_x})
        if k == n:
            break
        noise = bank.normals(k)
        bx = pairwise_drift(x, rk)
        by = drift_y.at(k * dt)(y)
        x, _ = reflected_step(x, bx, dt, nu, noise, domain)
        y, _ = reflected_step(y, by, dt, nu, noise, domain)
    return out


def chaos_study(cfg: StudyConfig) -> StudyReport:
    """Coupled particle / mean-field runs over ``cfg.N_list``.

    Params: ``domain`` (unit square), ``grid`` (64), ``init_peak`` (2),
    ``record_times`` (0 and T), ``ref_cap`` (4096).
    """
    if cfg.eps_rule.kind != "schedule" and not cfg.get("allow_fixed_eps", False):
        raise ConfigError("chaos study uses the eps schedule", "eps_rule.kind")
    base = {"nu": cfg.nu, "T": cfg.T, "dt": cfg.dt, "seed": cfg.seed,
            "grid": int(cfg.get("grid", 64)), "init_peak": float(cfg.get("init_peak", 2.0)),
            "domain": cfg.get("domain", DEFAULT_DOMAIN),
            "record_times": tuple(cfg.get("record_times", (0.0, cfg.T))),
            "ref_cap": int(cfg.get("ref_cap", 4096))}
    rep = StudyReport("chaos-study", cfg.to_dict())
    tasks, flagged = [], []
    for N in cfg.N_list:
        eps = cfg.eps_rule.eps(N, 2)
        try:
            _pde_for(base, eps)
        except BlowupDetected as exc:
            flagged.append(N)
            rep.verdict(f"PDE reference at N={N}", False, exc.time, "no blow-up on [0, T]", 1)
            continue
        tasks += [(base, N, eps, r) for r in range(cfg.replicas)]
    results = run_replicas(coupled_run, tasks, cfg.workers)

    by_n = {}
    for (_, N, eps, r), res in zip(tasks, results):
        by_n.setdefault(N, []).append(res)
    violations = 0
    audits = 0
    summary = {}
    for N in sorted(by_n):
        reps = by_n[N]
        eps = cfg.eps_rule.eps(N, 2)
        for j, t in enumerate(r0["t"] for r0 in reps[0]):
            row = {"N": N, "eps": eps, "t": t, "R": len(reps), "ref_M": ref_size(N, base["ref_cap"])}
            for key in ("sup_gap", "w2_xy", "w2_x_rho", "w2_y_rho"):
                m, se = mean_se([rr[j][key] for rr in reps])
                row[f"{key}_mean"], row[f"{key}_se"] = m, se
            slack = [rr[j]["triangle_slack"] for rr in reps]
            violations += sum(s < -1e-12 for s in slack)
            audits += len(slack)
            row["diag_bound_ok"] = all(rr[j]["sup_gap"] + 1e-12 >= rr[j]["w2_xy"] for rr in reps)
            rep.points.append(row)
            summary[(N, t)] = row

    T = cfg.T
    Ns = sorted(by_n)
    if len(Ns) >= 2:
        for key, label in (("w2_x_rho", "E W2(mu^X, rho_T)"), ("sup_gap", "E sup_i |X_i - Y_i|")):
            m = [summary[(N, T)][f"{key}_mean"] for N in Ns]
            se = [summary[(N, T)][f"{key}_se"] for N in Ns]
            ok, worst = _strictly_decreasing(m, se)
            rep.verdict(f"{label} decreasing in N", ok, m,
                        "consecutive means decrease; no rise larger than 1 combined SE",
                        cfg.replicas,
                        detail=f"smallest step in SE units {worst:.3g}")
        w = [omega(math.log(N) ** -0.5) for N in Ns]
        s, se = fit_slope(w, [summary[(N, T)]["w2_x_rho_mean"] for N in Ns])
        rep.slopes["w2_x_rho_vs_omega"] = {"slope": s, "se": se}
    rep.verdict("triangle inequality audit", violations == 0, violations, "zero violations (1e-12)",
                audits)
    rep.verdict("sup gap dominates W2(mu^X, mu^Y)",
                all(p["diag_bound_ok"] for p in rep.points), "all", "every replica and time",
                audits)
    if flagged:
        rep.config["flagged_N"] = flagged
    return rep


def _strictly_decreasing(means, ses):
    """Consecutive means must fall; a rise counts only if it exceeds one combined SE.

    Returns (ok, smallest decrease in units of the combined SE).
    """
    worst = math.inf
    ok = True
    for (m0, s0), (m1, s1) in zip(zip(means, ses), zip(means[1:], ses[1:])):
        se = math.hypot(s0, s1)
        z = (m0 - m1) / se if se > 0 else math.copysign(math.inf, m0 - m1)
        worst = min(worst, z)
        if z <= -1.0:
            ok = False
    return ok, worst
