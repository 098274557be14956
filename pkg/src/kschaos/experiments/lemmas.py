"""Numerical verifiers for the kernel lemmas.

* exactness of the regularized force outside ``B(0, eps)``, domination by
  the bare force, antisymmetry;
* the shell-theorem reduction against direct quadrature of ``J_eps * F``;
* the scalings ``sup|F_eps| ~ eps^(1-d)`` and ``sup|grad F_eps| ~ eps^(-d)``;
* convolution bounds ``sup|F_eps * rho| <= C ||rho||_inf`` (C independent of
  eps) and ``sup|F_eps * rho - F_eps' * rho| <= C eps ||rho||_inf``;
* the quasi-log-Lipschitz estimate
  ``|F_eps * rho1(X1) - F_eps' * rho2(X2)| <= C (omega(eps) + omega(l))``.
"""

from __future__ import annotations

import numpy as np

from ..geometry import Rectangle
from ..kernel import NewtonianKernel, RegularizedKernel, convolve_force_density, omega
from ..meanfield import DensityGrid, ForceField, velocity_bound
from ..rng import stream
from .common import StudyReport, fit_slope

EPS_GRID = (0.4, 0.2, 0.1, 0.05)
UNIT_SQUARE = Rectangle([0.0, 0.0], [1.0, 1.0])


def _random_points(rng, n, rmin, rmax, d=2):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = np.exp(rng.uniform(np.log(rmin), np.log(rmax), n))
    return g * r[:, None]


def kernel_exactness(eps_list=EPS_GRID, n=100_000, seed=0, d=2):
    """Deviation of F_eps from F outside B(0, eps), domination, antisymmetry.

    ``n`` points with ``|x| >= eps`` per eps (log-uniform radius up to 4)
    plus ``n // 4`` points inside the ball for the domination check.
    """
    base = NewtonianKernel(d)
    rows = []
    for k, eps in enumerate(eps_list):
        rng = stream(seed, "kernel-exactness", k)
        rk = RegularizedKernel(eps, d)
        out = _random_points(rng, n, eps, 4.0, d)
        out[0] = [eps] + [0.0] * (d - 1)  # the sphere itself
        fo, Fo = rk.force(out), base.force(out)
        rel = np.linalg.norm(fo - Fo, axis=1) / np.linalg.norm(Fo, axis=1)
        inner = _random_points(rng, n // 4, 1e-6 * eps, eps, d)
        allx = np.concatenate([out, inner])
        fa = rk.force(allx)
        dominated = np.all(np.linalg.norm(fa, axis=1) <= np.linalg.norm(base.force(allx), axis=1))
        antisym = np.array_equal(rk.force(-allx), -fa)
        rows.append({"eps": eps, "n": len(allx), "max_rel_dev": float(rel.max()),
                     "dominated": bool(dominated), "antisymmetric": bool(antisym)})
    return rows


def quadrature_force(eps, x, n_theta=512, n_rho=64):
    """Direct quadrature of ``(J_eps * F)(x)`` in d = 2 (test oracle).

    Polar coordinates centred at ``x``: with ``z = x - y = r e``,
    ``(J_eps * F)(x) = -C_* int_0^{2 pi} e int J_eps(x - r e) dr dtheta``;
    the ``1/r`` of the force cancels against the area element. For each
    direction the radial integral runs over the chord of ``B(x, eps)``
    (Gauss-Legendre); the angular integral is the periodic trapezoid rule.
    Uses only the bump profile, never the enclosed-mass table.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rk = RegularizedKernel(eps, 2)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    e = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    gx, gw = np.polynomial.legendre.leggauss(n_rho)
    out = np.empty_like(x)
    for p, xp in enumerate(x):
        b = e @ xp
        disc = b * b - xp @ xp + eps * eps
        ok = disc > 0
        s = np.sqrt(np.where(ok, disc, 0.0))
        lo, hi = np.maximum(b - s, 0.0), np.maximum(b + s, 0.0)
        half = 0.5 * (hi - lo)
        r = 0.5 * (hi + lo)[:, None] + half[:, None] * gx[None, :]
        pts = xp[None, None, :] - r[..., None] * e[:, None, :]
        radial = (rk.moll.density(pts) * gw).sum(axis=1) * half * ok
        out[p] = -rk.base.C_star * (2 * np.pi / n_theta) * (radial[:, None] * e).sum(axis=0)
    return out


def shell_vs_quadrature(eps_list=(0.2, 0.1), n_points=200, seed=0):
    """Shell-theorem F_eps against :func:`quadrature_force` at points straddling |x| = eps."""
    rows = []
    per = n_points // len(eps_list)
    for k, eps in enumerate(eps_list):
        rng = stream(seed, "shell-quadrature", k)
        x = _random_points(rng, per, 0.3 * eps, 1.7 * eps)
        rk = RegularizedKernel(eps, 2)
        ref = quadrature_force(eps, x)
        got = rk.force(x)
        rel = np.linalg.norm(got - ref, axis=1) / np.linalg.norm(ref, axis=1)
        rows.append({"eps": eps, "n": per, "max_rel_err": float(rel.max())})
    return rows


def _radial_gradient_sup(rk, n=20001):
    # F_eps(x) = g(r) x / r; the Jacobian has eigenvalues g'(r) and g(r)/r.
    r = np.linspace(0.0, 2.0 * rk.eps, n)[1:]
    g = rk.radial_magnitude(r)
    dg = np.gradient(g, r)
    return float(max(np.abs(dg).max(), np.abs(g / r).max()))


def sup_scaling(d, eps_list=EPS_GRID):
    """Fitted exponents of sup|F_eps| and sup|grad F_eps| against eps."""
    sups = [RegularizedKernel(e, d).sup_norm for e in eps_list]
    grads = [_radial_gradient_sup(RegularizedKernel(e, d)) for e in eps_list]
    s_f, se_f = fit_slope(eps_list, sups)
    s_g, se_g = fit_slope(eps_list, grads)
    C_f = [s * e ** (d - 1) for s, e in zip(sups, eps_list)]
    C_g = [g * e**d for g, e in zip(grads, eps_list)]
    return {"d": d, "eps": list(eps_list), "sup_force": sups, "sup_grad": grads,
            "slope_force": s_f, "slope_force_se": se_f, "slope_grad": s_g, "slope_grad_se": se_g,
            "C_force": C_f, "C_grad": C_g}


def uniform_density(n=400, domain=UNIT_SQUARE):
    return DensityGrid.uniform(domain, n, n)


def bump_density(peak, n=128, domain=UNIT_SQUARE, center=(0.5, 0.5)):
    """Normalized Gaussian bump on ``domain`` whose largest cell value is ``peak``.

    ``peak = 1`` on the unit square gives the uniform density. Otherwise the
    width is found by bisection on the discrete maximum.
    """
    uni = DensityGrid.uniform(domain, n, n)
    if abs(peak - uni.linf()) < 1e-12:
        return uni

    def make(w):
        return DensityGrid.from_function(
            domain, n, n, lambda x, y: np.exp(-((x - center[0]) ** 2 + (y - center[1]) ** 2)
                                          / (2 * w * w)))

    lo, hi = 1e-3, 10.0
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if make(mid).linf() > peak:
            lo = mid
        else:
            hi = mid
    return make(hi)


def field_sup(rk, rho, field=None):
    """sup over cell centres of ``|F_eps * rho|`` (FFT evaluation of the midpoint sum)."""
    field = field or ForceField(rk, rho.domain, rho.nx, rho.ny)
    return float(np.linalg.norm(field.centers(rho.cells), axis=-1).max())


def convolution_bound(eps_list, densities):
    """Ratios ``sup|F_eps * rho| / ||rho||_inf`` for every (eps, rho) pair."""
    rows = []
    for eps in eps_list:
        rk = RegularizedKernel(eps, 2)
        for name, rho in densities.items():
            s = field_sup(rk, rho)
            rows.append({"eps": eps, "density": name, "sup": s, "linf": rho.linf(),
                         "ratio": s / rho.linf()})
    return rows


def calibrate_convolution_constant(eps=0.1, n=128, peaks=(1.0, 2.0, 4.0)):
    """Empirical constant ``C = max sup|F_eps * rho| / ||rho||_inf`` over a battery."""
    dens = {f"peak{p:g}": bump_density(p, n) for p in peaks}
    return max(r["ratio"] for r in convolution_bound([eps], dens))


def eps_difference(eps_list=(0.2, 0.1, 0.05, 0.025), n=640, domain=UNIT_SQUARE):
    """``sup_x |F_eps * rho - F_(eps/2) * rho|`` for the uniform density on ``domain``.

    Evaluated at all cell centres of an ``n x n`` grid; the midpoint sum is
    symmetric about each evaluation point, so the quadrature error only
    enters through the boundary.
    """
    rho = DensityGrid.uniform(domain, n, n)
    rows = []
    for eps in eps_list:
        u1 = ForceField(RegularizedKernel(eps, 2), domain, n, n).centers(rho.cells)
        u2 = ForceField(RegularizedKernel(eps / 2, 2), domain, n, n).centers(rho.cells)
        diff = float(np.linalg.norm(u1 - u2, axis=-1).max())
        rows.append({"eps": eps, "sup_diff": diff, "C": diff / (eps * rho.linf())})
    return rows


def _rotate(pts, theta, center):
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return (pts - center) @ R.T + center


def quasi_lipschitz_check(eps_list=(0.2, 0.1, 0.05), gaps=(0.2, 0.1, 0.05, 0.025),
                          n_points=200, n=64, seed=0):
    """Differences ``|F_eps * rho1(X1) - F_(eps/2) * rho2(X2)|`` at controlled sup-gap ``l``.

    Two configurations on the unit square:
    ``translate``: rho1 = rho2 uniform, X2 = X1 + l e1;
    ``rotate``: rho1 an anisotropic bump, rho2 its rotation about the centre
    by theta, X2 the same rotation of X1, with theta chosen so that the
    largest displacement is exactly l.
    """
    c0 = np.array([0.5, 0.5])
    rng = stream(seed, "quasi-lipschitz")
    uni = DensityGrid.uniform(UNIT_SQUARE, n, n)

    def aniso(theta):
        ct, st = np.cos(theta), np.sin(theta)

        def f(x, y):
            u = ct * (x - c0[0]) + st * (y - c0[1])
            v = -st * (x - c0[0]) + ct * (y - c0[1])
            return np.exp(-(u / 0.18) ** 2 / 2 - (v / 0.09) ** 2 / 2)

        return DensityGrid.from_function(UNIT_SQUARE, n, n, f)

    # translate: X1 in [0, 1 - max gap] x [0, 1]; rotate: X1 in the disc of radius 0.3
    X1t = rng.random((n_points, 2)) * [1.0 - max(gaps), 1.0]
    ang = rng.uniform(0, 2 * np.pi, n_points)
    rad = 0.3 * np.sqrt(rng.random(n_points))
    X1r = c0 + rad[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rmax = float(np.linalg.norm(X1r - c0, axis=1).max())
    rho1r = aniso(0.0)

    rows = []
    for eps in eps_list:
        rk1, rk2 = RegularizedKernel(eps, 2), RegularizedKernel(eps / 2, 2)
        a_t = convolve_force_density(rk1, uni, X1t)
        a_r = convolve_force_density(rk1, rho1r, X1r)
        for l in gaps:
            b_t = convolve_force_density(rk2, uni, X1t + [l, 0.0])
            theta = 2 * np.arcsin(l / (2 * rmax))
            X2r = _rotate(X1r, theta, c0)
            b_r = convolve_force_density(rk2, aniso(theta), X2r)
            for kind, a, b in (("translate", a_t, b_t), ("rotate", a_r, b_r)):
                diff = float(np.linalg.norm(a - b, axis=1).max())
                scale = float(omega(eps) + omega(l))
                rows.append({"kind": kind, "eps": eps, "gap": l, "diff": diff,
                             "scale": scale, "ratio": diff / scale})
    return rows


def _fit_and_verify(rows, key_eps, key_gap):
    """Fit C on the coarsest (eps, gap) point, then check all points against 2 C.

    Returns (C_fit, worst ratio / C_fit).
    """
    coarse = [r for r in rows if r["eps"] == key_eps and r["gap"] == key_gap]
    C = max(r["ratio"] for r in coarse)
    worst = max(r["ratio"] for r in rows) / C
    return C, worst


def kernel_lemma_suite(seed=0, quick=False):
    """Run every kernel verifier and return a report with one verdict per property."""
    rep = StudyReport("verify-lemmas", {"seed": seed, "quick": quick})
    n = 20_000 if quick else 100_000

    ex = kernel_exactness(n=n, seed=seed)
    rep.points += [{"check": "exactness", **r} for r in ex]
    worst = max(r["max_rel_dev"] for r in ex)
    total = sum(r["n"] for r in ex)
    rep.verdict("force exact outside B(0,eps)", worst <= 1e-12, worst, "max rel dev <= 1e-12", total)
    rep.verdict("|F_eps| <= |F|", all(r["dominated"] for r in ex), "all", "every sample", total)
    rep.verdict("antisymmetry", all(r["antisymmetric"] for r in ex), "bitwise", "exact", total)

    sq = shell_vs_quadrature(n_points=40 if quick else 200, seed=seed)
    rep.points += [{"check": "shell-vs-quadrature", **r} for r in sq]
    err = max(r["max_rel_err"] for r in sq)
    rep.verdict("shell theorem vs quadrature", err < 1e-3, err, "rel err < 1e-3",
                sum(r["n"] for r in sq))

    for d in (2, 3):
        sc = sup_scaling(d)
        rep.points.append({"check": f"scaling-d{d}", "slope_force": sc["slope_force"],
                           "slope_grad": sc["slope_grad"]})
        rep.verdict(f"sup|F_eps| slope d={d}", abs(sc["slope_force"] + (d - 1)) <= 0.05,
                    sc["slope_force"], f"{-(d - 1)} +/- 0.05", len(sc["eps"]))
        rep.verdict(f"sup|grad F_eps| slope d={d}", abs(sc["slope_grad"] + d) <= 0.05,
                    sc["slope_grad"], f"{-d} +/- 0.05", len(sc["eps"]))

    grid_n = 128 if quick else 256
    dens = {"uniform": DensityGrid.uniform(UNIT_SQUARE, grid_n, grid_n),
            "bump2": bump_density(2.0, grid_n), "bump4": bump_density(4.0, grid_n)}
    cb = convolution_bound((0.2, 0.1, 0.05), dens)
    rep.points += [{"check": "convolution-bound", **r} for r in cb]
    bound = velocity_bound(UNIT_SQUARE, 1.0)
    worst = max(r["ratio"] for r in cb)
    rep.verdict("sup|F_eps*rho| <= C ||rho||_inf with C = sqrt(|D|/pi)", worst <= bound, worst,
                f"ratio <= {bound:.6g}", len(cb))
    spread = max(max(r["ratio"] for r in cb if r["density"] == k)
                 / min(r["ratio"] for r in cb if r["density"] == k) for k in dens)
    rep.verdict("convolution constant independent of eps", spread <= 1.5, spread,
                "per density, max/min ratio over eps <= 1.5", len(cb))

    ed = eps_difference(n=320 if quick else 640)
    rep.points += [{"check": "eps-difference", **r} for r in ed]
    slope, se = fit_slope([r["eps"] for r in ed], [r["sup_diff"] for r in ed])
    rep.slopes["eps_difference"] = {"slope": slope, "se": se}
    rep.verdict("sup|F_eps*rho - F_eps/2*rho| slope", abs(slope - 1) <= 0.1, slope,
                "1 +/- 0.1", len(ed))

    ql = quasi_lipschitz_check(n_points=50 if quick else 200, seed=seed)
    rep.points += [{"check": "quasi-lipschitz", **r} for r in ql]
    C, worst = _fit_and_verify(ql, 0.2, 0.2)
    rep.verdict("quasi-log-Lipschitz, single C", worst <= 2.0, worst,
                "all ratios <= 2 x C fitted at (eps, l) = (0.2, 0.2)", len(ql),
                detail=f"C_fit={C:.4g}")
    return rep
