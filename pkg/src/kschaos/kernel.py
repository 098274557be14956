"""Newtonian potential and force, the bump mollifier, and the regularized force.

The regularized force is ``F_eps = J_eps * F``. For a radial mollifier the
shell theorem reduces this to ``F_eps(x) = F(x) * m(|x| / eps)`` where
``m(r)`` is the mass of ``J`` inside ``B(0, r)``; that is the production
path. Direct quadrature of the convolution lives in the tests and in
:mod:`kschaos.experiments.lemmas` as an oracle.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma

from .errors import SingularAtOrigin

TABLE_SIZE = 4096


def unit_ball_volume(d):
    return math.pi ** (d / 2) / gamma(d / 2 + 1)


def sphere_area(d):
    """Surface area of the unit sphere in R^d."""
    return 2 * math.pi ** (d / 2) / gamma(d / 2)


def omega(r):
    """Log-Lipschitz modulus: ``1`` for r >= 1, ``r (1 - ln r)`` on (0, 1), 0 at 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("omega is defined for r >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = r * (1.0 - np.log(r))
    out = np.where(r >= 1.0, 1.0, np.where(r > 0, mid, 0.0))
    return out[()] if out.ndim == 0 else out


class NewtonianKernel:
    """Potential ``Phi`` and force ``F = -grad Phi`` in dimension ``d``."""

    def __init__(self, d=2):
        if d < 2:
            raise ValueError("dimension must be >= 2")
        self.d = int(d)
        self.alpha_d = unit_ball_volume(d)
        self.C_star = gamma(d / 2) / (2 * math.pi ** (d / 2))
        self.C_d = 1.0 / (d * (d - 2) * self.alpha_d) if d >= 3 else None

    def __repr__(self):
        return f"NewtonianKernel(d={self.d})"

    def _norm(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected {self.d}-dimensional points")
        r = np.linalg.norm(x, axis=-1)
        if np.any(r == 0):
            raise SingularAtOrigin("Newtonian kernel is singular at the origin")
        return x, r

    def potential(self, x):
        _, r = self._norm(x)
        if self.d == 2:
            return np.log(r) / (2 * math.pi)
        return -self.C_d / r ** (self.d - 2)

    def force(self, x):
        x, r = self._norm(x)
        return _bare_force(x, r, self.C_star, self.d)


def _bare_force(x, r, C_star, d):
    # shared by force() and regularized_force() so that they agree bit-for-bit
    return -C_star * x / (r**d)[..., None]


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@functools.lru_cache(maxsize=None)
def _mass_profile(d, n):
    """Normalizer and enclosed-mass table for the bump in dimension d."""
    radial = lambda s: math.exp(-1.0 / (1.0 - s * s)) * s ** (d - 1) if s < 1 else 0.0
    integral, _ = integrate.quad(radial, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    Z = sphere_area(d) * integral

    # cumulative mass per table interval, 8-point Gauss-Legendre on each
    r = np.linspace(0.0, 1.0, n)
    gx, gw = np.polynomial.legendre.leggauss(8)
    a, b = r[:-1, None], r[1:, None]
    nodes = 0.5 * (b - a) * gx + 0.5 * (a + b)
    piece = (0.5 * (b - a) * gw * _bump(nodes) * nodes ** (d - 1)).sum(axis=1)
    m = np.concatenate([[0.0], np.cumsum(piece)]) / integral
    m = np.clip(m, 0.0, 1.0)
    m[-1] = 1.0
    m = np.maximum.accumulate(m)
    return Z, r, m


class Mollifier:
    """Radial bump ``J(x) = exp(-1/(1-|x|^2)) / Z`` on the unit ball, scaled to ``eps``.

    ``mass(r)`` is the enclosed mass of the unscaled bump, interpolated from a
    precomputed table with a monotone cubic; it is exactly 1 for ``r >= 1``.
    """

    def __init__(self, eps, d=2, table_size=TABLE_SIZE):
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.eps = float(eps)
        self.d = int(d)
        self.Z, self.table_r, self.table_m = _mass_profile(self.d, int(table_size))
        self._interp = PchipInterpolator(self.table_r, self.table_m, extrapolate=False)

    def __repr__(self):
        return f"Mollifier(eps={self.eps}, d={self.d})"

    def profile(self, x):
        """Unscaled density J(x)."""
        x = np.asarray(x, dtype=float)
        return _bump(np.linalg.norm(x, axis=-1)) / self.Z

    def density(self, x):
        """Scaled density J_eps(x) = eps^-d J(x / eps)."""
        return self.profile(np.asarray(x, dtype=float) / self.eps) / self.eps**self.d

    def mass(self, r):
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        inner = r < 1.0
        if np.any(inner):
            out[inner] = np.clip(self._interp(r[inner]), 0.0, 1.0)
        return out[()] if out.ndim == 0 else out


class RegularizedKernel:
    """``F_eps = J_eps * F`` evaluated through the shell-theorem reduction."""

    def __init__(self, eps, d=2, table_size=TABLE_SIZE):
        self.base = NewtonianKernel(d)
        self.moll = Mollifier(eps, d, table_size)
        self.d = self.base.d
        self.eps = self.moll.eps
        self._sup = None

    def __repr__(self):
        return f"RegularizedKernel(eps={self.eps}, d={self.d})"

    def force(self, x):
        """F_eps(x); total, with F_eps(0) = 0. Accepts ``(..., d)`` arrays."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        zero = r == 0
        out = _bare_force(x, np.where(zero, 1.0, r), self.base.C_star, self.d)
        out[zero] = 0.0
        near = r < self.eps
        if np.any(near):
            out[near] *= self.moll.mass(r[near] / self.eps)[..., None]
        return out

    __call__ = force

    def radial_magnitude(self, r):
        """|F_eps| as a function of the radius."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.base.C_star * self.moll.mass(r / self.eps) / r ** (self.d - 1)
        return np.where(r > 0, val, 0.0)

    @property
    def sup_norm(self):
        """sup_x |F_eps(x)| (attained inside B(0, eps)); scales like eps^(1-d)."""
        if self._sup is None:
            s = np.linspace(0.0, 1.0, 20001)[1:]
            self._sup = float(np.max(self.radial_magnitude(s * self.eps)))
        return self._sup


def regularized_force(rk, x):
    return rk.force(x)


def convolve_force_density(rk, rho, x, chunk=256):
    """Midpoint-rule ``(F_eps * rho)(x) = sum_c F_eps(x - y_c) rho_c |cell|``.

    ``rho`` is a :class:`kschaos.meanfield.DensityGrid`; ``x`` has shape
    ``(..., 2)``. This is the direct O(cells) sum per point; the PDE solver
    uses an FFT evaluation of the same sum.
    """
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, x.shape[-1])
    centers = rho.centers().reshape(-1, 2)
    w = rho.cells.reshape(-1) * rho.cell_area
    keep = w != 0
    centers, w = centers[keep], w[keep]
    out = np.zeros_like(flat)
    for s in range(0, len(flat), chunk):
        diff = flat[s:s + chunk, None, :] - centers[None, :, :]
        out[s:s + chunk] = np.einsum("pcd,c->pd", rk.force(diff), w)
    return out.reshape(x.shape)
