"""Verifiers for the two Gronwall-type inequalities.

Quadratic: if ``f' = C f^2`` then ``f(t) = f0 / (1 - C f0 t)`` until blow-up.

Log-Lipschitz: the extremal ``R`` of ``f^2 <= C int f omega(f) + C omega(eps) T``
solves ``R' = C R^(1/2) omega(R^(1/2))`` with ``R(0) = C omega(eps) T``; its root
``f = R^(1/2)`` must stay below
``F(s) = exp(1 - e^(-Cs)) omega(eps)^(e^(-Cs) / 2)``.
The comparison ``f <= F`` needs ``R(0)^(1/2) <= F(0) = omega(eps)^(1/2)``,
i.e. ``C T <= 1``; the default grid respects that.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.integrate import solve_ivp

from ..kernel import omega
from .common import StudyReport

GRID_C = (0.5, 1.0, 2.0)
GRID_T = (0.1, 0.25, 0.5)
GRID_EPS = (1e-2, 1e-3, 1e-4)


def quadratic_closed_form(f0, C, t):
    return f0 / (1.0 - C * f0 * np.asarray(t, float))


def quadratic_check(f0=1.0, C=1.0, frac=0.9, n=2001):
    """Max relative gap between integrated ``f' = C f^2`` and the closed form on
    ``[0, frac * t_blowup]``."""
    t_end = frac / (C * f0)
    t = np.linspace(0.0, t_end, n)
    sol = solve_ivp(lambda s, y: C * y * y, (0.0, t_end), [f0], method="DOP853",
                    t_eval=t, rtol=1e-13, atol=1e-15)
    exact = quadratic_closed_form(f0, C, t)
    return float(np.max(np.abs(sol.y[0] - exact) / exact))


def loglip_bound(C, w_eps, s):
    """F(s) = exp(1 - e^(-Cs)) omega(eps)^(e^(-Cs)/2)."""
    decay = np.exp(-C * np.asarray(s, float))
    return np.exp(1.0 - decay) * w_eps ** (0.5 * decay)


def comparison_solution(C, T, w_eps, n=1001):
    """``(s, f)`` with ``f = R^(1/2)``, ``R' = C R^(1/2) omega(R^(1/2))``, ``R(0) = C w T``.

    Integrated in the variable ``f`` itself (``f' = C omega(f) / 2``), which
    is smooth away from ``f = 0``.
    """
    s = np.linspace(0.0, T, n)
    f0 = np.sqrt(C * w_eps * T)
    if f0 == 0.0:
        return s, np.zeros_like(s)
    sol = solve_ivp(lambda _, y: 0.5 * C * omega(max(y[0], 0.0)), (0.0, T), [f0],
                    method="DOP853", t_eval=s, rtol=1e-12, atol=1e-15)
    return s, sol.y[0]


def loglip_check(C, T, eps=None, w_eps=None, n=1001):
    """Largest ``f(s) - F(s)`` over ``[0, T]`` (nonpositive means the bound holds)."""
    w = float(omega(eps)) if w_eps is None else float(w_eps)
    s, f = comparison_solution(C, T, w, n)
    F = loglip_bound(C, w, s)
    return {"C": C, "T": T, "eps": eps, "omega_eps": w, "sup_f": float(f.max()),
            "C_T_bound": float(loglip_bound(C, w, T)), "max_excess": float(np.max(f - F)),
            "violations": int(np.sum(f > F * (1 + 1e-12)))}


def gronwall_check(grid_C=GRID_C, grid_T=GRID_T, grid_eps=GRID_EPS):
    rep = StudyReport("gronwall-check", {"C": list(grid_C), "T": list(grid_T),
                                         "eps": list(grid_eps)})
    quad = []
    for f0, C in ((1.0, 1.0), (0.5, 2.0), (2.0, 0.25)):
        err = quadratic_check(f0, C)
        quad.append(err)
        rep.points.append({"check": "quadratic", "f0": f0, "C": C, "max_rel_err": err})
    rep.verdict("quadratic closed form vs ODE before 0.9 blow-up", max(quad) <= 1e-8,
                max(quad), "rel err <= 1e-8", len(quad))

    rows = [loglip_check(C, T, eps) for C, T, eps in itertools.product(grid_C, grid_T, grid_eps)]
    rep.points += [{"check": "loglip", **r} for r in rows]
    bad = sum(r["violations"] for r in rows)
    rep.verdict("log-Lipschitz bound F(s) dominates comparison ODE", bad == 0, bad,
                "zero violations (grid points x 1001 times)", len(rows))
    return rep
