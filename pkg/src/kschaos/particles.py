"""Regularized interacting particle system with reflecting boundary.

Time stepping is projected Euler-Maruyama: propose an unconstrained step,
then project onto the closed domain. The projection displacement is added to
each particle's reflection total-variation counter.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericalFailure
from .geometry import ConvexDomain, domain_from_config
from .kernel import NewtonianKernel, RegularizedKernel
from .rng import StreamBank

DELTA_GUARD = 1e-10


class CollisionEvent(NumericalFailure):
    """Two particles of an unregularized run came within the guard distance."""

    def __init__(self, message, pair=None, distance=None):
        self.pair = pair
        self.distance = distance
        super().__init__(message)


@dataclass(frozen=True)
class SimConfig:
    N: int
    nu: float
    eps: float
    dt: float
    T: float
    seed: int
    domain: ConvexDomain
    snapshot_times: tuple = ()
    delta_guard: float = DELTA_GUARD

    def __post_init__(self):
        if isinstance(self.domain, dict):
            object.__setattr__(self, "domain", domain_from_config(self.domain))
        if self.N < 2:
            raise ConfigError("need at least two particles", "N")
        if not self.nu >= 0:
            raise ConfigError("diffusion coefficient must be nonnegative", "nu")
        if not self.eps >= 0:
            raise ConfigError("eps must be nonnegative", "eps")
        if not self.dt > 0:
            raise ConfigError("time step must be positive", "dt")
        if not self.T >= 0:
            raise ConfigError("horizon must be nonnegative", "T")
        if self.T > 0 and self.dt > self.T * (1 + 1e-12):
            raise ConfigError("dt must not exceed T", "dt")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))

    @property
    def n_steps(self):
        return steps_for(self.T, self.dt, "T")

    def kernel(self):
        """Force evaluator; ``None`` marks the unregularized (eps = 0) system."""
        if self.eps == 0:
            return None
        return RegularizedKernel(self.eps, self.domain.dim)


def steps_for(t, dt, name="snapshot_times"):
    """Number of steps reaching ``t``; ``t`` must be a multiple of ``dt``."""
    k = round(t / dt)
    if abs(k * dt - t) > 1e-9 * max(dt, abs(t)):
        raise ConfigError(f"time {t} is not a multiple of dt={dt}", name)
    return int(k)


def default_dt(rk, nu=None, cap=1e-3):
    """dt <= min(cap, 0.1 eps / sup|F_eps|): drift moves a particle <= 0.1 eps per step."""
    return min(cap, 0.1 * rk.eps / rk.sup_norm)


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    time: float = 0.0
    reflection_tv: np.ndarray = None
    step_index: int = 0

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=float)
        if self.reflection_tv is None:
            self.reflection_tv = np.zeros(self.positions.shape[:-1])

    @property
    def N(self):
        return self.positions.shape[-2]

    def copy(self):
        return replace(self, positions=self.positions.copy(),
                       reflection_tv=self.reflection_tv.copy())


def _canonical_sum(contrib, axis):
    # Sorting makes the sum independent of particle labels, so permuting the
    # ensemble permutes the result bit-for-bit.
    return np.sort(contrib, axis=axis).sum(axis=axis)


def pairwise_drift(positions, rk, delta_guard=DELTA_GUARD):
    """``drift[i] = (N-1)^-1 sum_{j != i} F_eps(x_i - x_j)``.

    ``positions`` has shape ``(..., N, d)``; leading axes are independent
    ensembles. With ``rk=None`` the bare Newtonian force is used and a
    :class:`CollisionEvent` is raised if any pair is closer than
    ``delta_guard``.
    """
    x = np.asarray(positions, dtype=float)
    N = x.shape[-2]
    diff = x[..., :, None, :] - x[..., None, :, :]
    if rk is None:
        r = np.linalg.norm(diff, axis=-1)
        idx = np.arange(N)
        r[..., idx, idx] = np.inf
        if np.any(r < delta_guard):
            flat = np.unravel_index(np.argmin(r), r.shape)
            raise CollisionEvent("particles collided", pair=flat[-2:], distance=float(r.min()))
        base = NewtonianKernel(x.shape[-1])
        r[..., idx, idx] = 1.0
        f = -base.C_star * diff / (r ** x.shape[-1])[..., None]
    else:
        f = rk.force(diff)
    return _canonical_sum(f, axis=-2) / (N - 1)


def reflected_step(x, drift, dt, nu, noise, domain):
    """One projected Euler-Maruyama step; returns (new positions, |displacement by projection|)."""
    proposal = x + drift * dt + np.sqrt(2.0 * nu * dt) * noise
    new = domain.project(proposal)
    return new, np.linalg.norm(proposal - new, axis=-1)


def particle_streams(cfg: SimConfig, indices=None, tag="brownian"):
    idx = range(cfg.N) if indices is None else indices
    return StreamBank(cfg.seed, tag, idx, cfg.domain.dim)


def step(ens, cfg, rk, streams=None, drift=None, noise=None):
    """Advance the ensemble by one step of size ``cfg.dt`` in place and return it.

    ``drift`` overrides the interaction drift and ``noise`` the Gaussian draws
    (both ``(N, d)``); otherwise they come from ``rk`` and ``streams``.
    """
    if drift is None:
        drift = pairwise_drift(ens.positions, rk, cfg.delta_guard)
    if noise is None:
        noise = streams.normals(ens.step_index)
    ens.positions, disp = reflected_step(ens.positions, drift, cfg.dt, cfg.nu, noise, cfg.domain)
    ens.reflection_tv = ens.reflection_tv + disp
    ens.step_index += 1
    ens.time = ens.step_index * cfg.dt
    return ens


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray  # (snapshots, N, d)
    reflection_tv: np.ndarray
    collision_time: float | None = None
    collision_pair: tuple | None = None
    extra: dict = field(default_factory=dict)


def _init_points(cfg, init):
    if callable(init):
        from .rng import stream

        init = init(cfg.N, stream(cfg.seed, "init"))
    x = np.array(init, dtype=float)
    if x.shape != (cfg.N, cfg.domain.dim):
        raise ConfigError(f"initial positions must have shape ({cfg.N}, {cfg.domain.dim})", "init")
    if not np.all(cfg.domain.contains(x)):
        raise ConfigError("initial positions must lie in the closed domain", "init")
    return x


def simulate(cfg: SimConfig, init, streams=None, rk=None):
    """Run the particle system on [0, T].

    ``init`` is an ``(N, d)`` array or a callable ``(N, rng) -> array``.
    Snapshots are taken at ``cfg.snapshot_times`` (default: 0 and T); each
    must be a multiple of dt. For eps = 0 a collision stops the run and is
    reported in ``collision_time``.
    """
    times = cfg.snapshot_times or (0.0, cfg.T)
    snap_steps = sorted({steps_for(t, cfg.dt) for t in times})
    n_steps = cfg.n_steps
    if snap_steps and snap_steps[-1] > n_steps:
        raise ConfigError("snapshot beyond horizon", "snapshot_times")
    if rk is None:
        rk = cfg.kernel()
    if streams is None:
        streams = particle_streams(cfg)

    ens = ParticleEnsemble(_init_points(cfg, init))
    snaps, snap_t = [], []
    want = iter(snap_steps)
    nxt = next(want, None)
    collision_time = pair = None
    for k in range(n_steps + 1):
        while nxt == k:
            snaps.append(ens.positions.copy())
            snap_t.append(k * cfg.dt)
            nxt = next(want, None)
        if k == n_steps:
            break
        try:
            step(ens, cfg, rk, streams)
        except CollisionEvent as ev:
            collision_time, pair = ens.time, ev.pair
            break
    return Trajectory(np.array(snap_t), np.array(snaps), ens.reflection_tv.copy(),
                      collision_time, pair)


def min_pairwise_distance(positions):
    """min_{i<j} |x_i - x_j| over the last two axes ``(..., N, d)``."""
    x = np.asarray(positions, dtype=float)
    N = x.shape[-2]
    if N < 2:
        raise ValueError("need at least two particles")
    r = np.linalg.norm(x[..., :, None, :] - x[..., None, :, :], axis=-1)
    iu = np.triu_indices(N, 1)
    return r[..., iu[0], iu[1]].min(axis=-1)
