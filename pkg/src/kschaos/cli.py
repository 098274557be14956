"""Command-line entry point.

``kschaos <subcommand> [--config FILE] [--seed N] [--out DIR] [--set a.b=v ...] [--workers K]``

Without ``--config`` the shipped defaults for the subcommand are used. With
``--config`` the file is the whole configuration (no merging), so missing
required fields are reported. ``--set`` overrides individual fields by dotted
path; values are parsed as JSON when possible.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 failed verdict in a verification subcommand.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io as _io
import json
import os
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import io as kio
from .errors import CflViolation, ConfigError, NumericalFailure
from .geometry import Rectangle, domain_from_config
from .kernel import RegularizedKernel
from .rng import stream

SUBCOMMANDS = (
    "simulate-particles", "solve-pde", "meanfield-sde", "chaos-study", "collision-study",
    "stability-study", "verify-lemmas", "gronwall-check", "metrics",
)
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERDICT = 0, 1, 2, 3


class VerdictFailure(Exception):
    pass


# ---------------------------------------------------------------- config


def load_defaults(sub):
    text = resources.files("kschaos").joinpath("defaults", f"{sub}.json").read_text("utf-8")
    return json.loads(text)


def load_config(path):
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key.path=value", "--set")
    path, value = assignment.split("=", 1)
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        nxt = node.get(k)
        if nxt is None:
            nxt = node[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigError("cannot descend into non-object field", ".".join(keys[:-1]))
        node = nxt
    node[keys[-1]] = _parse_value(value)
    return cfg


def canonical_bytes(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def _require(cfg, *fields):
    for f in fields:
        if f not in cfg:
            raise ConfigError("required field is missing", f)


def _num(cfg, field, kind=float):
    try:
        return kind(cfg[field])
    except KeyError:
        raise ConfigError("required field is missing", field) from None
    except (TypeError, ValueError):
        raise ConfigError(f"expected a {kind.__name__}", field) from None


# ---------------------------------------------------------------- outputs


class Outputs:
    """Writes files atomically into the output directory and keeps an inventory."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def write(self, name, data):
        if isinstance(data, str):
            data = data.encode("utf-8")
        path = self.root / name
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
        self.files.append({"path": name, "bytes": len(data),
                           "sha256": hashlib.sha256(data).hexdigest()})
        return path

    def csv(self, name, text):
        self.write(name, text)
        header = next(csv.reader(_io.StringIO(text)))
        schema = name.rsplit(".", 1)[0] + ".schema.json"
        self.write(schema, kio.dumps_json(kio.column_schema(header)))

    def manifest(self, sub, cfg, seed, started):
        doc = {
            "subcommand": sub,
            "config_sha256": hashlib.sha256(canonical_bytes(cfg)).hexdigest(),
            "seed": seed,
            "version": __version__,
            "started": started,
            "finished": _now(),
            "outputs": self.files,
        }
        path = self.root / "manifest.json"
        tmp = path.with_name("manifest.json.tmp")
        tmp.write_text(kio.dumps_json(doc), "utf-8")
        os.replace(tmp, path)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------- subcommands


def _initial_points(cfg, N, domain, seed):
    init = cfg.get("init", {"uniform": {}})
    if "points" in init:
        pts = np.asarray(init["points"], dtype=float)
        if pts.shape != (N, domain.dim):
            raise ConfigError(f"expected {N} points of dimension {domain.dim}", "init.points")
        return pts
    if "uniform" in init:
        return domain.sample_uniform(N, stream(seed, "init"))
    raise ConfigError("unknown initial condition (use 'uniform' or 'points')", "init")


def _initial_density(cfg, domain, grid):
    from .experiments.lemmas import bump_density
    from .meanfield import DensityGrid

    if not isinstance(domain, Rectangle):
        raise ConfigError("the PDE solver needs a rectangular domain", "domain")
    nx, ny = grid
    init = cfg.get("init", {"bump": {"peak": 2.0}})
    if "uniform" in init:
        return DensityGrid.uniform(domain, nx, ny)
    if "bump" in init:
        if nx != ny:
            raise ConfigError("bump initial data needs a square grid", "grid")
        return bump_density(float(init["bump"].get("peak", 2.0)), nx, domain)
    raise ConfigError("unknown initial density (use 'uniform' or 'bump')", "init")


def _grid(cfg):
    g = cfg.get("grid")
    if g is None:
        raise ConfigError("required field is missing", "grid")
    if isinstance(g, int):
        g = [g, g]
    if len(g) != 2 or any(int(n) < 2 for n in g):
        raise ConfigError("expected two cell counts >= 2", "grid")
    return int(g[0]), int(g[1])


def cmd_simulate_particles(cfg, seed, out, workers):
    from .particles import SimConfig, simulate

    _require(cfg, "N", "nu", "eps", "dt", "T", "domain")
    sim = SimConfig(N=_num(cfg, "N", int), nu=_num(cfg, "nu"), eps=_num(cfg, "eps"),
                    dt=_num(cfg, "dt"), T=_num(cfg, "T"), seed=seed,
                    domain=domain_from_config(cfg["domain"]),
                    snapshot_times=tuple(cfg.get("snapshot_times", ())))
    x0 = _initial_points(cfg, sim.N, sim.domain, seed)
    traj = simulate(sim, x0)
    out.csv("snapshots.csv", kio.particle_snapshots_csv(traj.times, traj.positions))
    out.csv("reflection.csv", kio.reflection_csv(traj.reflection_tv))
    if cfg.get("binary", False):
        out.write("snapshots.npz", kio.particle_columns_bytes(traj.times, traj.positions))
    summary = {"N": sim.N, "snapshots": len(traj.times),
               "collision_time": traj.collision_time,
               "collision_pair": list(map(int, traj.collision_pair)) if traj.collision_pair else None}
    out.write("summary.json", kio.dumps_json(summary))


def _pde_config(cfg, rho0, dt_multiple=None):
    from .meanfield import PDEConfig, velocity_bound

    nu, eps, T = _num(cfg, "nu"), _num(cfg, "eps"), _num(cfg, "T")
    grid = (rho0.nx, rho0.ny)
    force = bool(cfg.get("force", True))
    if "pde_dt" in cfg:
        dt = float(cfg["pde_dt"])
    else:
        umax = velocity_bound(rho0.domain, 4 * rho0.linf()) if force else 0.0
        span = dt_multiple if dt_multiple is not None else T
        dt = PDEConfig.stable_dt(nu, rho0.domain, grid, span, umax)
    every = int(cfg.get("snapshot_every", 0))
    if dt_multiple is not None:
        every = int(round(dt_multiple / dt))
    return PDEConfig(nu=nu, eps=eps, dt=dt, T=T, grid=grid, snapshot_every=every, force=force,
                     blowup_factor=float(cfg.get("blowup_factor", 100.0)))


def cmd_solve_pde(cfg, seed, out, workers):
    from .meanfield import solve_pde

    _require(cfg, "nu", "eps", "T", "grid", "domain")
    domain = domain_from_config(cfg["domain"])
    rho0 = _initial_density(cfg, domain, _grid(cfg))
    pcfg = _pde_config(cfg, rho0)
    rk = RegularizedKernel(pcfg.eps, 2) if pcfg.force else None
    traj = solve_pde(rho0, pcfg, rk)
    out.csv("density.csv", kio.density_csv(traj.frames))
    out.write("density_final.ksd", kio.density_to_bytes(traj.frames[-1]))
    summary = {"dt": pcfg.dt, "steps": int(round(pcfg.T / pcfg.dt)),
               "mass_initial": rho0.mass(), "mass_final": traj.frames[-1].mass(),
               "linf_initial": rho0.linf(), "sup_linf": traj.sup_linf,
               "existence_horizon": traj.existence_horizon}
    out.write("summary.json", kio.dumps_json(summary))


def cmd_meanfield_sde(cfg, seed, out, workers):
    from .meanfield import sde_streams, simulate_meanfield_sde, solve_pde
    from .particles import SimConfig

    _require(cfg, "M", "nu", "eps", "dt", "T", "grid", "domain")
    domain = domain_from_config(cfg["domain"])
    rho0 = _initial_density(cfg, domain, _grid(cfg))
    dt = _num(cfg, "dt")
    pcfg = _pde_config(cfg, rho0, dt_multiple=dt)
    rk = RegularizedKernel(pcfg.eps, 2)
    traj = solve_pde(rho0, pcfg, rk)
    M = _num(cfg, "M", int)
    sim = SimConfig(N=M, nu=pcfg.nu, eps=pcfg.eps, dt=dt, T=pcfg.T, seed=seed, domain=domain)
    times = tuple(cfg.get("snapshot_times", (0.0, pcfg.T)))
    t, pos, tv = simulate_meanfield_sde(M, traj, sim, rk, streams=sde_streams(seed, M),
                                        snapshot_times=times)
    out.csv("snapshots.csv", kio.particle_snapshots_csv(t, pos))
    out.csv("reflection.csv", kio.reflection_csv(tv))
    out.write("density_final.ksd", kio.density_to_bytes(traj.frames[-1]))


STUDY_KEYS = {"name", "N_list", "eps_rule", "nu", "T", "dt", "replicas", "seed", "params"}


def study_config(cfg, seed, workers, name, required=("N_list", "nu", "dt", "replicas")):
    from .experiments.common import StudyConfig

    _require(cfg, *required)
    unknown = set(cfg) - STUDY_KEYS
    if unknown:
        raise ConfigError("unknown field", sorted(unknown)[0])
    try:
        return StudyConfig(name=cfg.get("name", name), N_list=tuple(cfg["N_list"]),
                           eps_rule=cfg.get("eps_rule", 0.1), nu=_num(cfg, "nu"),
                           T=float(cfg.get("T", 0.25)), dt=_num(cfg, "dt"),
                           replicas=_num(cfg, "replicas", int), seed=seed, workers=workers,
                           params=dict(cfg.get("params", {})))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _emit_report(out, rep):
    out.write("report.json", rep.to_json())
    if rep.points:
        out.csv("points.csv", rep.to_csv())
    print(rep.summary())


def cmd_chaos_study(cfg, seed, out, workers):
    from .experiments import chaos_study

    _emit_report(out, chaos_study(study_config(cfg, seed, workers, "chaos-study")))


def cmd_collision_study(cfg, seed, out, workers):
    from .experiments import collision_study

    _emit_report(out, collision_study(study_config(cfg, seed, workers, "collision-study")))


def cmd_stability_study(cfg, seed, out, workers):
    from .experiments import stability_study

    _emit_report(out, stability_study(study_config(cfg, seed, workers, "stability-study")))


def cmd_verify_lemmas(cfg, seed, out, workers):
    from .experiments import kernel_lemma_suite

    rep = kernel_lemma_suite(seed=seed, quick=bool(cfg.get("quick", False)))
    _emit_report(out, rep)
    if not rep.passed:
        raise VerdictFailure("some lemma checks failed")


def cmd_gronwall_check(cfg, seed, out, workers):
    from .experiments import gronwall_check
    from .experiments.gronwall import GRID_C, GRID_EPS, GRID_T

    rep = gronwall_check(tuple(cfg.get("C", GRID_C)), tuple(cfg.get("T", GRID_T)),
                         tuple(cfg.get("eps", GRID_EPS)))
    _emit_report(out, rep)
    if not rep.passed:
        raise VerdictFailure("some Gronwall checks failed")


def _read_points(source, field, t=None):
    """Points from inline lists, a snapshot CSV/NPZ (last or chosen time), or a plain x0,x1 CSV."""
    if isinstance(source, list):
        return np.atleast_2d(np.asarray(source, dtype=float))
    if not isinstance(source, str):
        raise ConfigError("expected a file path or a list of points", field)
    try:
        if source.endswith(".npz"):
            cols = kio.read_particle_columns(source)
        else:
            with open(source, newline="", encoding="utf-8") as fh:
                rows = list(csv.DictReader(fh))
            if not rows:
                raise ConfigError("file has no data rows", field)
            cols = {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
    except OSError as exc:
        raise ConfigError(f"cannot read {source}: {exc.strerror}", field) from None
    xs = sorted((k for k in cols if k.startswith("x") and k[1:].isdigit()), key=lambda k: int(k[1:]))
    if not xs:
        raise ConfigError("no coordinate columns x0, x1, ...", field)
    keep = np.ones(len(cols[xs[0]]), dtype=bool)
    if "t" in cols:
        tt = cols["t"]
        target = tt.max() if t is None else float(t)
        keep = np.isclose(tt, target, rtol=0, atol=1e-12)
        if not keep.any():
            raise ConfigError(f"no rows at t={target}", field)
    return np.stack([cols[k][keep] for k in xs], axis=1)


def cmd_metrics(cfg, seed, out, workers):
    from .metrics import w2_vs_density, w_p_empirical

    _require(cfg, "a")
    a = _read_points(cfg["a"], "a", cfg.get("t"))
    p = float(cfg.get("p", 2.0))
    result = {"M": len(a), "p": p}
    if "b" in cfg:
        b = _read_points(cfg["b"], "b", cfg.get("t"))
        dist, plan = w_p_empirical(a, b, p)
        result["w_p"] = dist
        out.csv("assignment.csv", kio.table_csv(["i", "j"], enumerate(plan.assignment)))
    elif "b_density" in cfg:
        try:
            rho = kio.read_density(cfg["b_density"])
        except OSError as exc:
            raise ConfigError(f"cannot read density: {exc.strerror}", "b_density") from None
        M_ref = int(cfg.get("M_ref", len(a) * max(1, 4096 // len(a))))
        est = w2_vs_density(a, rho, M_ref, stream(seed, "reference"))
        result.update({"w2": est.value, "M_ref": est.M_ref, "ref_error_scale": est.ref_error_scale})
    else:
        raise ConfigError("required field is missing", "b")
    out.write("metrics.json", kio.dumps_json(result))
    print(kio.dumps_json(result), end="")


COMMANDS = {
    "simulate-particles": cmd_simulate_particles,
    "solve-pde": cmd_solve_pde,
    "meanfield-sde": cmd_meanfield_sde,
    "chaos-study": cmd_chaos_study,
    "collision-study": cmd_collision_study,
    "stability-study": cmd_stability_study,
    "verify-lemmas": cmd_verify_lemmas,
    "gronwall-check": cmd_gronwall_check,
    "metrics": cmd_metrics,
}


# ---------------------------------------------------------------- driver


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="kschaos", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"kschaos {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = subs.add_parser(name)
        sp.add_argument("--config", help="JSON configuration file (default: shipped defaults)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", default=f"kschaos-{name}", help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field by dotted path (repeatable)")
        sp.add_argument("--workers", type=int, default=1, help="worker processes for replicas")
    return parser


def run(argv=None):
    started = _now()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError(f"a subcommand is required: {', '.join(SUBCOMMANDS)}")
        cfg = load_config(args.config) if args.config else load_defaults(args.command)
        cfg = copy.deepcopy(cfg)
        for item in args.set:
            apply_override(cfg, item)
        if args.seed is not None:
            cfg["seed"] = args.seed
        seed = int(cfg.get("seed", 0))
        cfg["seed"] = seed
        if args.workers < 1:
            raise ConfigError("must be >= 1", "--workers")
        out = Outputs(args.out)
        COMMANDS[args.command](cfg, seed, out, args.workers)
        out.manifest(args.command, cfg, seed, started)
    except ConfigError as exc:
        print(f"kschaos: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, CflViolation) as exc:
        print(f"kschaos: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except VerdictFailure as exc:
        out.manifest(args.command, cfg, seed, started)
        print(f"kschaos: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
