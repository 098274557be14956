"""Wasserstein distances between empirical measures, coupled-path gaps, and H_N."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import SizeMismatch


@dataclass
class EmpiricalMeasure:
    """Uniform-weight atomic measure on ``points`` (shape ``(M, d)``)."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))

    @property
    def M(self):
        return len(self.points)


@dataclass
class TransportPlan:
    assignment: np.ndarray  # sigma: a[i] -> b[assignment[i]]
    cost: float


def _pts(a):
    return a.points if isinstance(a, EmpiricalMeasure) else np.atleast_2d(np.asarray(a, float))


def _cost_matrix(x, y, p):
    diff = x[:, None, :] - y[None, :, :]
    if p == 2:
        return np.einsum("ijd,ijd->ij", diff, diff)
    return np.linalg.norm(diff, axis=-1) ** p


def w_p_empirical(a, b, p=2.0):
    """Exact ``W_p`` between equal-size uniform empirical measures.

    Solved as a linear assignment problem (shortest augmenting path).
    Returns ``(distance, TransportPlan)``.
    """
    x, y = _pts(a), _pts(b)
    if len(x) != len(y):
        raise SizeMismatch(f"empirical measures differ in size: {len(x)} vs {len(y)}")
    if p < 1:
        raise ValueError("p must be >= 1")
    C = _cost_matrix(x, y, p)
    rows, cols = linear_sum_assignment(C)
    sigma = np.empty(len(x), dtype=int)
    sigma[rows] = cols
    # the row-wise sum is independent of how the solver orders its output
    dist = float(np.mean(C[np.arange(len(x)), sigma]) ** (1.0 / p))
    return dist, TransportPlan(sigma, dist)


def w_p_exhaustive(a, b, p=2.0):
    """Brute-force ``W_p`` over all permutations (test oracle, M <= 8).

    Among cost-equal optima the lexicographically smallest permutation wins.
    """
    x, y = _pts(a), _pts(b)
    if len(x) != len(y):
        raise SizeMismatch("empirical measures differ in size")
    if len(x) > 8:
        raise ValueError("exhaustive search is limited to M <= 8")
    C = _cost_matrix(x, y, p)
    idx = np.arange(len(x))
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(len(x))):
        c = C[idx, perm].sum()
        if c < best:
            best, best_perm = c, perm
    dist = float((best / len(x)) ** (1.0 / p))
    return dist, TransportPlan(np.array(best_perm), dist)


@dataclass
class W2Estimate:
    value: float
    M: int
    M_ref: int
    ref_error_scale: float  # M_ref^(-1/4): Monte Carlo scale of the reference in 2-D

    def __float__(self):
        return self.value


def w2_vs_reference(a, ref):
    """W_2 between ``a`` and a reference sample whose size is a multiple of ``a``'s."""
    x, y = _pts(a), _pts(ref)
    if len(y) % len(x):
        raise SizeMismatch("reference size must be a multiple of the sample size")
    rep = np.repeat(x, len(y) // len(x), axis=0)
    return w_p_empirical(rep, y, 2)[0]


def w2_vs_density(a, rho, M_ref, rng):
    """Estimate ``W_2(a, rho)`` by exact assignment against ``M_ref`` samples of ``rho``.

    ``a``'s points are replicated ``M_ref / M`` times (the same measure) so
    the assignment is square.
    """
    from .meanfield import sample_density

    x = _pts(a)
    if M_ref < len(x) or M_ref % len(x):
        raise SizeMismatch("M_ref must be a multiple of the sample size, >= it")
    ref = sample_density(rho, M_ref, rng)
    return W2Estimate(w2_vs_reference(x, ref), len(x), int(M_ref), float(M_ref) ** -0.25)


def winf_coupled(gaps):
    """Largest pairwise gap of a coupled ensemble.

    A finite-sample lower estimate of the essential sup of ``|X - Y|`` under
    this particular coupling; it upper-bounds W_inf between the two
    empirical measures, not the infimum over all couplings.
    """
    g = np.asarray(gaps, dtype=float)
    return float(g.max()) if g.size else 0.0


def coupled_gaps(x, y):
    return np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1)


def consistency_terms(Y, rho, rk, field_values=None):
    """Per-particle ``|(N-1)^-1 sum_{j!=i} F_eps(Y_i - Y_j) - (F_eps * rho)(Y_i)|``."""
    from .kernel import convolve_force_density
    from .particles import pairwise_drift

    Y = np.asarray(Y, dtype=float)
    if len(Y) < 2:
        raise ValueError("need N >= 2")
    emp = pairwise_drift(Y, rk)
    mean = convolve_force_density(rk, rho, Y) if field_values is None else field_values(Y)
    return np.linalg.norm(emp - mean, axis=-1)


def consistency_error(Y, rho, rk, field_values=None):
    """``H_N = max_i`` of :func:`consistency_terms`.

    ``field_values`` may supply a cheaper evaluator of ``F_eps * rho`` at
    points (e.g. interpolation from a precomputed grid); by default the
    direct midpoint sum is used.
    """
    return float(consistency_terms(Y, rho, rk, field_values).max())


@dataclass
class CouplingReport:
    times: list = field(default_factory=list)
    sup_gap: list = field(default_factory=list)
    w2_emp: list = field(default_factory=list)
    hN_mean: list = field(default_factory=list)
    hN_se: list = field(default_factory=list)

    def add(self, t, sup_gap, w2_emp, hN_mean=float("nan"), hN_se=float("nan")):
        self.times.append(float(t))
        self.sup_gap.append(float(sup_gap))
        self.w2_emp.append(float(w2_emp))
        self.hN_mean.append(float(hN_mean))
        self.hN_se.append(float(hN_se))

    def check(self, tol=1e-12):
        """sup_gap >= w2_emp at every time (the diagonal coupling bound)."""
        return all(g + tol >= w for g, w in zip(self.sup_gap, self.w2_emp))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "sup_gap", "w2_emp", "hN_mean", "hN_se"])
        for row in zip(self.times, self.sup_gap, self.w2_emp, self.hN_mean, self.hN_se):
            w.writerow([repr(v) for v in row])
        return buf.getvalue()

    def to_json(self):
        from .io import dumps_json

        return dumps_json(asdict(self))
