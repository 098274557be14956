"""Bounded convex domains: containment, Euclidean projection, outward normals.

All point arguments may carry leading batch dimensions: an array of shape
``(..., d)`` is treated as a stack of points. Domains are immutable.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NotOnBoundary

BOUNDARY_RTOL = 1e-12


class ConvexDomain:
    """Common interface; concrete shapes are :class:`Disk`, :class:`Rectangle`
    and :class:`ConvexPolygon`."""

    dim: int
    tol: float

    def contains(self, x):
        raise NotImplementedError

    def project(self, x):
        raise NotImplementedError

    def outward_normal(self, x):
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def bounding_radius(self) -> float:
        """Smallest r0 with D contained in B(0, r0)."""
        raise NotImplementedError

    @property
    def volume(self) -> float:
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def sample_uniform(self, n, rng):
        """``n`` i.i.d. uniform points (rejection from the bounding box)."""
        lo, hi = self.bounding_box()
        out = np.empty((0, self.dim))
        while len(out) < n:
            k = max(2 * (n - len(out)), 16)
            cand = lo + (hi - lo) * rng.random((k, self.dim))
            out = np.concatenate([out, cand[self.contains(cand)]])
        return out[:n]

    def _default_tol(self):
        return BOUNDARY_RTOL * self.diameter


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {x.shape}")
    return x


class Disk(ConvexDomain):
    """Closed ball ``|x - center| <= radius`` (any dimension >= 2)."""

    def __init__(self, center, radius, tol=None):
        self.center = np.array(center, dtype=float)
        self.center.setflags(write=False)
        self.radius = float(radius)
        self.dim = self.center.shape[0]
        if self.dim < 2:
            raise ConfigError("disk center must have dimension >= 2", "disk.center")
        if not self.radius > 0:
            raise ConfigError("radius must be positive", "disk.radius")
        self.tol = self._default_tol() if tol is None else float(tol)

    def __repr__(self):
        return f"Disk(center={self.center.tolist()}, radius={self.radius})"

    def contains(self, x):
        x = _points(x, self.dim)
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius + self.tol

    def project(self, x):
        x = _points(x, self.dim)
        v = x - self.center
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        outside = r > self.radius + self.tol
        safe = np.where(outside, r, 1.0)
        return np.where(outside, self.center + self.radius * v / safe, x)

    def outward_normal(self, x):
        x = _points(x, self.dim)
        v = x - self.center
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(np.abs(r - self.radius) > self.tol):
            raise NotOnBoundary("point is not on the disk boundary")
        return v / r

    @property
    def diameter(self):
        return 2.0 * self.radius

    @property
    def bounding_radius(self):
        return float(np.linalg.norm(self.center)) + self.radius

    @property
    def volume(self):
        from scipy.special import gamma

        d = self.dim
        return np.pi ** (d / 2) / gamma(d / 2 + 1) * self.radius**d

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def sample_uniform(self, n, rng):
        # Direction from a normalized Gaussian, radius by inverse CDF r = R U^(1/d).
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        u = rng.random(n) ** (1.0 / self.dim)
        return self.center + self.radius * u[:, None] * g

    def to_config(self):
        return {"disk": {"center": self.center.tolist(), "radius": self.radius}}


class Rectangle(ConvexDomain):
    """Axis-aligned box ``[min, max]`` (any dimension >= 2)."""

    def __init__(self, lo, hi, tol=None):
        self.lo = np.array(lo, dtype=float)
        self.hi = np.array(hi, dtype=float)
        for a in (self.lo, self.hi):
            a.setflags(write=False)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ConfigError("min and max must be points of equal dimension", "rect")
        self.dim = self.lo.shape[0]
        if self.dim < 2:
            raise ConfigError("rectangle must have dimension >= 2", "rect")
        if not np.all(self.lo < self.hi):
            raise ConfigError("need min < max componentwise", "rect")
        self.tol = self._default_tol() if tol is None else float(tol)

    def __repr__(self):
        return f"Rectangle(min={self.lo.tolist()}, max={self.hi.tolist()})"

    @property
    def lengths(self):
        return self.hi - self.lo

    def contains(self, x):
        x = _points(x, self.dim)
        return np.all((x >= self.lo - self.tol) & (x <= self.hi + self.tol), axis=-1)

    def project(self, x):
        return np.clip(_points(x, self.dim), self.lo, self.hi)

    def outward_normal(self, x):
        x = _points(x, self.dim)
        if np.any(~self.contains(x)):
            raise NotOnBoundary("point lies outside the rectangle")
        n = (np.abs(x - self.hi) <= self.tol).astype(float) - (
            np.abs(x - self.lo) <= self.tol
        ).astype(float)
        norm = np.linalg.norm(n, axis=-1, keepdims=True)
        if np.any(norm == 0):
            raise NotOnBoundary("point is interior to the rectangle")
        return n / norm

    @property
    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def bounding_radius(self):
        corners = np.maximum(np.abs(self.lo), np.abs(self.hi))
        return float(np.linalg.norm(corners))

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    def to_config(self):
        return {"rect": {"min": self.lo.tolist(), "max": self.hi.tolist()}}


class ConvexPolygon(ConvexDomain):
    """Strictly convex polygon in the plane, vertices counter-clockwise."""

    def __init__(self, vertices, tol=None):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ConfigError("polygon needs >= 3 planar vertices", "polygon.vertices")
        self.vertices = v
        self.vertices.setflags(write=False)
        self.dim = 2
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if not np.all(cross > 0):
            raise ConfigError(
                "vertices must be strictly convex and counter-clockwise", "polygon.vertices"
            )
        self._edges = e
        self._len = np.linalg.norm(e, axis=1)
        self._normals = np.stack([e[:, 1], -e[:, 0]], axis=1) / self._len[:, None]
        self.tol = self._default_tol() if tol is None else float(tol)

    def __repr__(self):
        return f"ConvexPolygon(vertices={self.vertices.tolist()})"

    def _signed(self, x):
        # (..., K) signed distances to the supporting lines
        return np.einsum("...d,kd->...k", x, self._normals) - np.einsum(
            "kd,kd->k", self.vertices, self._normals
        )

    def contains(self, x):
        x = _points(x, 2)
        return np.all(self._signed(x) <= self.tol, axis=-1)

    def _edge_feet(self, x):
        # closest point on every edge segment, shape (..., K, 2)
        rel = x[..., None, :] - self.vertices
        t = np.einsum("...kd,kd->...k", rel, self._edges) / self._len**2
        t = np.clip(t, 0.0, 1.0)
        return self.vertices + t[..., None] * self._edges

    def project(self, x):
        x = _points(x, 2)
        feet = self._edge_feet(x)
        dist = np.linalg.norm(feet - x[..., None, :], axis=-1)
        k = np.argmin(dist, axis=-1)
        nearest = np.take_along_axis(feet, k[..., None, None], axis=-2)[..., 0, :]
        return np.where(self.contains(x)[..., None], x, nearest)

    def outward_normal(self, x):
        x = _points(x, 2)
        feet = self._edge_feet(x)
        on_edge = np.linalg.norm(feet - x[..., None, :], axis=-1) <= self.tol
        if np.any(~on_edge.any(axis=-1)) or np.any(~self.contains(x)):
            raise NotOnBoundary("point is not on the polygon boundary")
        n = np.einsum("...k,kd->...d", on_edge.astype(float), self._normals)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    @property
    def diameter(self):
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    @property
    def bounding_radius(self):
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    @property
    def volume(self):
        x, y = self.vertices.T
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def to_config(self):
        return {"polygon": {"vertices": self.vertices.tolist()}}


def domain_from_config(cfg) -> ConvexDomain:
    """Build a domain from ``{"disk": ...}``, ``{"rect": ...}`` or ``{"polygon": ...}``."""
    if isinstance(cfg, ConvexDomain):
        return cfg
    if not isinstance(cfg, dict) or len(cfg) != 1:
        raise ConfigError("domain must be an object with exactly one of disk/rect/polygon", "domain")
    (kind, body), = cfg.items()
    try:
        if kind == "disk":
            return Disk(body["center"], body["radius"])
        if kind == "rect":
            return Rectangle(body["min"], body["max"])
        if kind == "polygon":
            return ConvexPolygon(body["vertices"])
    except KeyError as exc:
        raise ConfigError("missing required field", f"domain.{kind}.{exc.args[0]}") from None
    raise ConfigError(f"unknown domain kind {kind!r}", "domain")
