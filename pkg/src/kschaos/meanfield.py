"""Regularized Keller-Segel PDE on rectangles and the mean-field SDE it drives.

The PDE is discretized with cell-centred finite volumes: central differences
for diffusion, first-order upwinding for the aggregation flux, explicit Euler
in time and zero flux through every boundary face. The velocity
``u = F_eps * rho`` is the midpoint-rule sum over cells, evaluated at face
centres. That sum is a discrete linear convolution and is computed with
zero-padded FFTs against precomputed kernel tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .errors import BlowupDetected, CflViolation, ConfigError
from .geometry import Rectangle
from .particles import SimConfig, reflected_step, steps_for
from .rng import StreamBank, stream


@dataclass
class DensityGrid:
    """Cell averages of a density on an ``nx x ny`` grid over a rectangle.

    ``cells[ix, iy]`` is the average over cell ``(ix, iy)``; ``ix`` runs
    along the first axis.
    """

    domain: Rectangle
    cells: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if not isinstance(self.domain, Rectangle) or self.domain.dim != 2:
            raise ConfigError("density grids live on 2-D rectangles", "domain")
        self.cells = np.array(self.cells, dtype=float)
        if self.cells.ndim != 2:
            raise ConfigError("cells must be a 2-D array", "grid")

    @property
    def nx(self):
        return self.cells.shape[0]

    @property
    def ny(self):
        return self.cells.shape[1]

    @property
    def h(self):
        return self.domain.lengths / np.array([self.nx, self.ny])

    @property
    def cell_area(self):
        hx, hy = self.h
        return hx * hy

    def axes(self):
        hx, hy = self.h
        lo = self.domain.lo
        return (lo[0] + (np.arange(self.nx) + 0.5) * hx,
                lo[1] + (np.arange(self.ny) + 0.5) * hy)

    def centers(self):
        xs, ys = self.axes()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def mass(self):
        return float(self.cells.sum() * self.cell_area)

    def linf(self):
        return float(np.max(np.abs(self.cells)))

    def with_cells(self, cells, time=None):
        return DensityGrid(self.domain, cells, self.time if time is None else time)

    @classmethod
    def from_function(cls, domain, nx, ny, f, normalize=True):
        """Sample ``f(x, y)`` at cell centres; optionally rescale to unit mass."""
        g = cls(domain, np.zeros((nx, ny)))
        X, Y = np.moveaxis(g.centers(), -1, 0)
        vals = np.broadcast_to(np.asarray(f(X, Y), dtype=float), (nx, ny)).copy()
        if normalize:
            vals /= vals.sum() * g.cell_area
        g.cells = vals
        return g

    @classmethod
    def uniform(cls, domain, nx, ny):
        return cls.from_function(domain, nx, ny, lambda x, y: np.ones_like(x))


@dataclass(frozen=True)
class PDEConfig:
    nu: float
    eps: float
    dt: float
    T: float
    grid: tuple = (64, 64)
    snapshot_every: int = 0
    blowup_factor: float = 100.0
    force: bool = True

    def __post_init__(self):
        for name in ("nu", "dt"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be positive", name)
        if self.force and not self.eps > 0:
            raise ConfigError("must be positive", "eps")
        if not self.T >= 0:
            raise ConfigError("must be nonnegative", "T")
        object.__setattr__(self, "grid", tuple(int(n) for n in self.grid))

    def check_diffusive_cfl(self, domain):
        hx, hy = domain.lengths / np.array(self.grid)
        c = self.nu * self.dt * (1 / hx**2 + 1 / hy**2)
        if c > 0.25 * (1 + 1e-12):
            raise CflViolation(f"diffusive CFL number {c:.4g} exceeds 1/4")

    @staticmethod
    def stable_dt(nu, domain, grid, T, umax=0.0, safety=0.9):
        """Largest dt dividing T evenly that satisfies both CFL conditions."""
        hx, hy = domain.lengths / np.array(grid)
        dt = 0.25 / (nu * (1 / hx**2 + 1 / hy**2))
        if umax > 0:
            dt = min(dt, 0.5 * min(hx, hy) / umax)
        dt *= safety
        if T > 0:
            dt = T / np.ceil(T / dt)
        return float(dt)


def velocity_bound(domain, rho_max):
    """A priori bound on |F_eps * rho| over a planar domain, any eps.

    By rearrangement, int_D |x-y|^-1 dy is at most the same integral over a
    disc of equal area, so |F_eps * rho| <= sqrt(|D| / pi) * ||rho||_inf.
    """
    return float(np.sqrt(domain.volume / np.pi) * rho_max)


class ForceField:
    """Evaluates ``F_eps * rho`` on a fixed grid: face centres and cell centres."""

    def __init__(self, rk, domain, nx, ny):
        self.rk = rk
        self.domain = domain
        self.nx, self.ny = nx, ny
        hx, hy = domain.lengths / np.array([nx, ny])
        self.hx, self.hy = hx, hy
        self.shape = sfft.next_fast_len(3 * nx, real=True), sfft.next_fast_len(3 * ny, real=True)
        A = hx * hy
        # offsets (target - source) in cell units, sources at cell centres
        ax = np.arange(-(nx - 1), nx + 1)  # x-faces: a - 1/2
        bx = np.arange(-(ny - 1), ny)
        self._kx = self._table((ax - 0.5) * hx, bx * hy, 0, A)
        self._ky = self._table(ax[:-1] * hx, (np.arange(-(ny - 1), ny + 1) - 0.5) * hy, 1, A)
        self._kcx = self._table(ax[:-1] * hx, bx * hy, 0, A)
        self._kcy = self._table(ax[:-1] * hx, bx * hy, 1, A)

    def _table(self, ox, oy, comp, area):
        X, Y = np.meshgrid(ox, oy, indexing="ij")
        vals = self.rk.force(np.stack([X, Y], axis=-1))[..., comp] * area
        return sfft.rfft2(vals, s=self.shape), vals.shape

    def _conv(self, rho_hat, table, nout):
        khat, _ = table
        full = sfft.irfft2(rho_hat * khat, s=self.shape)
        return full[self.nx - 1:self.nx - 1 + nout[0], self.ny - 1:self.ny - 1 + nout[1]]

    def faces(self, cells):
        """x-velocity on the ``(nx+1, ny)`` x-faces and y-velocity on the ``(nx, ny+1)`` y-faces."""
        rho_hat = sfft.rfft2(cells, s=self.shape)
        ux = self._conv(rho_hat, self._kx, (self.nx + 1, self.ny))
        uy = self._conv(rho_hat, self._ky, (self.nx, self.ny + 1))
        return ux, uy

    def centers(self, cells):
        """Velocity at the cell centres, shape ``(nx, ny, 2)``."""
        rho_hat = sfft.rfft2(cells, s=self.shape)
        return np.stack([self._conv(rho_hat, self._kcx, (self.nx, self.ny)),
                         self._conv(rho_hat, self._kcy, (self.nx, self.ny))], axis=-1)


def _zero_faces(nx, ny):
    return np.zeros((nx + 1, ny)), np.zeros((nx, ny + 1))


def fv_step(rho, cfg, field=None, velocity=None):
    """One explicit finite-volume step; returns a new :class:`DensityGrid`.

    ``velocity`` may be given as ``(ux, uy)`` on faces (frozen field, used by
    the linear equation); otherwise it is computed from ``rho`` by ``field``.
    With ``cfg.force`` false the aggregation term is dropped.
    """
    c = rho.cells
    nx, ny = c.shape
    hx, hy = rho.h
    if not cfg.force:
        ux, uy = _zero_faces(nx, ny)
    elif velocity is not None:
        ux, uy = velocity
    else:
        ux, uy = field.faces(c)
    umax = max(np.abs(ux[1:-1]).max(initial=0.0), np.abs(uy[:, 1:-1]).max(initial=0.0))
    if umax * cfg.dt > 0.5 * min(hx, hy):
        raise CflViolation(f"advective CFL violated: max|u| dt = {umax * cfg.dt:.3g}")

    fx = np.zeros((nx + 1, ny))
    u = ux[1:-1]
    fx[1:-1] = (-cfg.nu * (c[1:] - c[:-1]) / hx
                + np.maximum(u, 0.0) * c[:-1] + np.minimum(u, 0.0) * c[1:])
    fy = np.zeros((nx, ny + 1))
    v = uy[:, 1:-1]
    fy[:, 1:-1] = (-cfg.nu * (c[:, 1:] - c[:, :-1]) / hy
                   + np.maximum(v, 0.0) * c[:, :-1] + np.minimum(v, 0.0) * c[:, 1:])
    new = c - cfg.dt * ((fx[1:] - fx[:-1]) / hx + (fy[:, 1:] - fy[:, :-1]) / hy)
    return rho.with_cells(new, rho.time + cfg.dt)


@dataclass
class DensityTrajectory:
    times: np.ndarray
    frames: list
    sup_linf: float = 0.0
    existence_horizon: float | None = None
    extra: dict = field(default_factory=dict)

    def at(self, t):
        """Snapshot in force at time ``t`` (latest snapshot time <= t)."""
        k = int(np.searchsorted(self.times, t + 1e-12 * max(1.0, abs(t)), side="right")) - 1
        return self.frames[max(k, 0)]


def _march(rho0, cfg, velocity_at):
    cfg.check_diffusive_cfl(rho0.domain)
    n = steps_for(cfg.T, cfg.dt, "T")
    every = cfg.snapshot_every or max(n, 1)
    rho = rho0.with_cells(rho0.cells.copy(), 0.0)
    l0 = rho0.linf()
    frames, times = [rho], [0.0]
    sup = l0
    horizon = None
    for k in range(n):
        rho = fv_step(rho, cfg, velocity=velocity_at(k, rho))
        rho.time = (k + 1) * cfg.dt
        linf = rho.linf()
        sup = max(sup, linf)
        if horizon is None and linf > 4 * l0:
            horizon = rho.time
        if linf > cfg.blowup_factor * l0:
            raise BlowupDetected(f"L-infinity norm {linf:.3g} exceeds "
                                 f"{cfg.blowup_factor} x initial at t={rho.time:.4g}",
                                 time=rho.time, linf=linf)
        if (k + 1) % every == 0 or k + 1 == n:
            frames.append(rho)
            times.append(rho.time)
    return DensityTrajectory(np.array(times), frames, sup, horizon)


def solve_pde(rho0, cfg, rk):
    """Solve the regularized Keller-Segel equation from ``rho0`` up to ``cfg.T``.

    Snapshots every ``cfg.snapshot_every`` steps (0: only start and end).
    Raises :class:`BlowupDetected` when the sup norm leaves the bounded regime.
    """
    field = ForceField(rk, rho0.domain, rho0.nx, rho0.ny) if cfg.force else None

    def velocity(k, rho):
        return field.faces(rho.cells) if field is not None else _zero_faces(rho.nx, rho.ny)

    return _march(rho0, cfg, velocity)


def solve_linear_pde(rho0, g, cfg, rk):
    """Same scheme with the velocity frozen to ``F_eps * g_t`` (piecewise constant in time)."""
    field = ForceField(rk, rho0.domain, rho0.nx, rho0.ny)
    cache = {}

    def velocity(k, rho):
        frame = g.at(k * cfg.dt)
        key = id(frame)
        if key not in cache:
            cache.clear()
            cache[key] = field.faces(frame.cells)
        return cache[key]

    return _march(rho0, cfg, velocity)


class AliasSampler:
    """Walker/Vose alias table over a discrete distribution."""

    def __init__(self, weights):
        p = np.asarray(weights, dtype=float).ravel()
        if np.any(p < 0) or not p.sum() > 0:
            raise ValueError("weights must be nonnegative with positive sum")
        n = len(p)
        q = p * n / p.sum()
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if q[i] < 1.0]
        large = [i for i in range(n) if q[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            prob[s], alias[s] = q[s], l
            q[l] -= 1.0 - q[s]
            (small if q[l] < 1.0 else large).append(l)
        for i in small:  # leftovers are 1 up to rounding
            prob[i] = 1.0
        self.prob, self.alias = prob, alias

    def sample(self, m, rng):
        k = rng.integers(0, len(self.prob), size=m)
        u = rng.random(m)
        return np.where(u < self.prob[k], k, self.alias[k])


def sample_density(rho, M, rng):
    """``M`` i.i.d. points: cell by mass (alias method), then uniform in the cell."""
    cells = AliasSampler(rho.cells).sample(M, rng)
    ix, iy = np.unravel_index(cells, rho.cells.shape)
    hx, hy = rho.h
    u = rng.random((M, 2))
    return np.stack([rho.domain.lo[0] + (ix + u[:, 0]) * hx,
                     rho.domain.lo[1] + (iy + u[:, 1]) * hy], axis=1)


class GridVelocity:
    """Bilinear interpolation of cell-centre velocities; constant beyond the outer centres."""

    def __init__(self, rho, values):
        self.xs, self.ys = rho.axes()
        self.values = values

    def __call__(self, pts):
        xs, ys, v = self.xs, self.ys, self.values
        fx = _frac_index(pts[..., 0], xs)
        fy = _frac_index(pts[..., 1], ys)
        i = np.minimum(np.floor(fx).astype(int), max(len(xs) - 2, 0))
        j = np.minimum(np.floor(fy).astype(int), max(len(ys) - 2, 0))
        tx = (fx - i)[..., None]
        ty = (fy - j)[..., None]
        i1 = np.minimum(i + 1, len(xs) - 1)
        j1 = np.minimum(j + 1, len(ys) - 1)
        return ((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i1, j]
                + (1 - tx) * ty * v[i, j1] + tx * ty * v[i1, j1])


def _frac_index(x, axis):
    if len(axis) == 1:
        return np.zeros_like(x)
    return np.clip((x - axis[0]) / (axis[1] - axis[0]), 0.0, len(axis) - 1.0)


class MeanFieldDrift:
    """Time-dependent drift ``F_eps * rho_t`` built from a density trajectory."""

    def __init__(self, rho_traj, rk):
        first = rho_traj.frames[0]
        self.traj = rho_traj
        self.field = ForceField(rk, first.domain, first.nx, first.ny)
        self._cache = {}

    def at(self, t):
        frame = self.traj.at(t)
        key = id(frame)
        if key not in self._cache:
            self._cache = {key: GridVelocity(frame, self.field.centers(frame.cells))}
        return self._cache[key]


def sde_streams(seed, M, dim=2, tag="brownian"):
    # smaller refill blocks for big ensembles keep the buffer near 32 MB;
    # the draws themselves do not depend on the block size
    chunk = int(min(512, max(8, 2**21 // max(M * dim, 1))))
    return StreamBank(seed, tag, range(M), dim, chunk=chunk)


def simulate_meanfield_sde(M, rho_traj, cfg: SimConfig, rk, init=None, streams=None,
                           snapshot_times=None, drift=None):
    """``M`` projected Euler-Maruyama paths of the mean-field SDE.

    The drift is ``F_eps * rho_s`` from ``rho_traj`` (bilinear in space,
    piecewise constant in time). Initial points default to i.i.d. samples of
    the first frame; Brownian streams default to ``(cfg.seed, "brownian", i)``,
    which is the same assignment the particle system uses. Returns
    ``(times, positions[snapshots, M, 2], reflection_tv)``.
    """
    if init is None:
        init = sample_density(rho_traj.frames[0], M, stream(cfg.seed, "init"))
    y = np.array(init, dtype=float)
    if streams is None:
        streams = sde_streams(cfg.seed, M, y.shape[-1])
    if drift is None:
        drift = MeanFieldDrift(rho_traj, rk)
    times = snapshot_times or (0.0, cfg.T)
    snap = sorted({steps_for(t, cfg.dt) for t in times})
    n = cfg.n_steps
    tv = np.zeros(M)
    out_t, out_x = [], []
    for k in range(n + 1):
        if k in snap:
            out_t.append(k * cfg.dt)
            out_x.append(y.copy())
        if k == n:
            break
        b = drift.at(k * cfg.dt)(y)
        y, disp = reflected_step(y, b, cfg.dt, cfg.nu, streams.normals(k), cfg.domain)
        tv += disp
    return np.array(out_t), np.array(out_x), tv
