"""File formats: CSV snapshots, the binary density format, JSON reports.

CSV dialect everywhere: UTF-8, ``,`` separator, ``.`` decimal point,
mandatory header row, ``\\n`` line endings, floats written with ``repr``
(shortest round-trip form). See ``docs/formats.md`` for the byte layout of
the binary density file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
import zipfile

import numpy as np

from .geometry import Rectangle
from .meanfield import DensityGrid

DENSITY_MAGIC = b"KSDENS01"
_HEADER = struct.Struct("<8sqq5d")  # magic, nx, ny, xmin, ymin, xmax, ymax, time


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_rows(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def particle_snapshots_csv(times, positions):
    """``t,i,x0,x1[,x2]`` rows, snapshot-major then particle index."""
    positions = np.asarray(positions)
    d = positions.shape[-1]
    header = ["t", "i"] + [f"x{k}" for k in range(d)]
    rows = ((t, i, *positions[s, i]) for s, t in enumerate(times) for i in range(positions.shape[1]))
    return _write_rows(header, rows)


def reflection_csv(reflection_tv):
    return _write_rows(["i", "reflection_tv"], enumerate(np.asarray(reflection_tv)))


def particle_columns(times, positions):
    """Columns t, i, x0, x1[, x2] of the snapshot table as arrays."""
    positions = np.asarray(positions)
    S, N, d = positions.shape
    cols = {"t": np.repeat(np.asarray(times, float), N), "i": np.tile(np.arange(N), S)}
    for k in range(d):
        cols[f"x{k}"] = positions[:, :, k].ravel()
    return cols


def particle_columns_bytes(times, positions):
    """Binary columnar snapshot file (``.npz``) contents.

    Written entry by entry with a fixed timestamp so that equal data give
    equal bytes (``numpy.savez`` stamps entries with the current time).
    """
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in particle_columns(times, positions).items():
            body = io.BytesIO()
            np.lib.format.write_array(body, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)),
                        body.getvalue())
    return buf.getvalue()


def write_particle_columns(path, times, positions):
    with open(path, "wb") as fh:
        fh.write(particle_columns_bytes(times, positions))


def read_particle_columns(path):
    with np.load(path) as z:
        return {k: z[k] for k in z.files}


def density_csv(grids):
    """``t,ix,iy,value`` rows for one or more density grids."""
    if isinstance(grids, DensityGrid):
        grids = [grids]
    rows = ((g.time, ix, iy, g.cells[ix, iy]) for g in grids
            for ix in range(g.nx) for iy in range(g.ny))
    return _write_rows(["t", "ix", "iy", "value"], rows)


def density_to_bytes(grid):
    lo, hi = grid.domain.lo, grid.domain.hi
    head = _HEADER.pack(DENSITY_MAGIC, grid.nx, grid.ny, lo[0], lo[1], hi[0], hi[1], grid.time)
    return head + np.ascontiguousarray(grid.cells, dtype="<f8").tobytes()


def density_from_bytes(buf):
    magic, nx, ny, x0, y0, x1, y1, t = _HEADER.unpack_from(buf, 0)
    if magic != DENSITY_MAGIC:
        raise ValueError("not a density file (bad magic)")
    n = nx * ny
    payload = np.frombuffer(buf, dtype="<f8", count=n, offset=_HEADER.size)
    if payload.size != n:
        raise ValueError("truncated density file")
    return DensityGrid(Rectangle([x0, y0], [x1, y1]), payload.reshape(nx, ny).copy(), t)


def write_density(path, grid):
    with open(path, "wb") as fh:
        fh.write(density_to_bytes(grid))


def read_density(path):
    with open(path, "rb") as fh:
        return density_from_bytes(fh.read())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps_json(obj):
    """Pretty-printed, key-sorted JSON; non-finite floats become null."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def table_csv(header, rows):
    return _write_rows(header, rows)


# Units for every column name the package writes. Lengths are in domain
# units, times in the model's time units, densities per unit area.
COLUMN_UNITS = {
    "t": ("time", "snapshot or recording time"),
    "i": ("index", "particle index"),
    "x0": ("length", "first coordinate"),
    "x1": ("length", "second coordinate"),
    "x2": ("length", "third coordinate"),
    "reflection_tv": ("length", "accumulated projection displacement (reflection total variation)"),
    "ix": ("index", "cell index along the first axis"),
    "iy": ("index", "cell index along the second axis"),
    "value": ("1/length^2", "cell-averaged density"),
    "N": ("count", "number of particles"),
    "M": ("count", "number of sample paths"),
    "R": ("count", "number of replicas"),
    "ref_M": ("count", "reference sample size"),
    "eps": ("length", "regularization length"),
    "h": ("length", "translation of the initial density"),
    "gap": ("length", "controlled sup-gap between coupled samples"),
    "nu": ("length^2/time", "diffusion coefficient"),
    "kappa": ("1", "threshold multiple of the resolution radius"),
    "threshold": ("length", "stopping distance"),
    "r_res": ("length", "resolution radius of the explicit scheme"),
    "mean_tau": ("time", "mean stopping time"),
    "se_tau": ("time", "standard error of the mean stopping time"),
    "ci95_lo": ("time", "lower end of the 95% confidence interval"),
    "ci95_hi": ("time", "upper end of the 95% confidence interval"),
    "censored": ("count", "replicas that reached T_max"),
    "msd0_hat": ("length^2", "mean squared distance of particle 1 to the initial centre of mass"),
    "msd0_se": ("length^2", "its standard error"),
    "bound_empirical": ("time", "collision-time bound with the estimated initial spread"),
    "bound_exact": ("time", "collision-time bound with the exact initial spread"),
    "sup_gap": ("length", "max_i |X_i - Y_i|"),
    "w2_emp": ("length", "W2 between the two coupled empirical measures"),
    "hN_mean": ("length", "mean consistency error"),
    "hN_se": ("length", "standard error of the consistency error"),
    "check": ("label", "which check the row belongs to"),
    "kind": ("label", "configuration variant"),
    "density": ("label", "name of the test density"),
}
_SUFFIX_UNITS = {"_mean": "mean over replicas of ", "_se": "standard error of "}
_STEM_UNITS = {
    "sup_gap": "length", "w2_xy": "length", "w2_x_rho": "length", "w2_y_rho": "length",
    "gap_T": "length", "hN2": "length^2", "term2": "length^2",
}


def column_schema(columns):
    """Sidecar schema: unit and description for each column."""
    out = {}
    for c in columns:
        if c in COLUMN_UNITS:
            unit, desc = COLUMN_UNITS[c]
        else:
            unit, desc = "1", "dimensionless"
            for suf, pre in _SUFFIX_UNITS.items():
                stem = c[: -len(suf)]
                if c.endswith(suf) and stem in _STEM_UNITS:
                    unit, desc = _STEM_UNITS[stem], pre + stem
        out[c] = {"unit": unit, "description": desc}
    return {"columns": [{"name": c, **out[c]} for c in columns]}
