"""Study configuration, reports and verdicts, slope fits, replica execution."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from ..io import dumps_json, table_csv


@dataclass(frozen=True)
class EpsRule:
    """``fixed``: eps = value. ``schedule``: eps = value * (ln N)^(-1/d)."""

    kind: str = "fixed"
    value: float = 0.1

    def __post_init__(self):
        if self.kind not in ("fixed", "schedule"):
            raise ConfigError(f"unknown eps rule {self.kind!r}", "eps_rule.kind")
        if not self.value >= 0:
            raise ConfigError("must be nonnegative", "eps_rule.value")

    def eps(self, N, d=2):
        if self.kind == "fixed":
            return float(self.value)
        return float(self.value * math.log(N) ** (-1.0 / d))

    @classmethod
    def from_config(cls, obj):
        if isinstance(obj, EpsRule):
            return obj
        if isinstance(obj, (int, float)):
            return cls("fixed", float(obj))
        try:
            return cls(obj["kind"], float(obj["value"]))
        except (KeyError, TypeError):
            raise ConfigError("expected {kind, value}", "eps_rule") from None


@dataclass(frozen=True)
class StudyConfig:
    name: str
    N_list: tuple = (64,)
    eps_rule: EpsRule = EpsRule()
    nu: float = 0.1
    T: float = 0.25
    dt: float = 1e-3
    replicas: int = 1
    seed: int = 0
    workers: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "N_list", tuple(int(n) for n in self.N_list))
        object.__setattr__(self, "eps_rule", EpsRule.from_config(self.eps_rule))
        if self.replicas < 1:
            raise ConfigError("need at least one replica", "replicas")
        if not self.dt > 0:
            raise ConfigError("must be positive", "dt")

    def get(self, key, default=None):
        return self.params.get(key, default)

    def to_dict(self):
        """Study parameters; ``workers`` is left out because results do not depend on it."""
        d = asdict(self)
        d["eps_rule"] = asdict(self.eps_rule)
        d.pop("workers")
        return d


@dataclass
class Verdict:
    name: str
    passed: bool
    value: object
    tolerance: str
    sample_size: object = None
    detail: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] {self.name}: value={_short(self.value)} "
                f"tolerance={self.tolerance} n={self.sample_size}")


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


@dataclass
class StudyReport:
    name: str
    config: dict = field(default_factory=dict)
    points: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)

    def verdict(self, name, passed, value, tolerance, sample_size=None, detail=""):
        v = Verdict(name, bool(passed), value, str(tolerance), sample_size, detail)
        self.verdicts.append(v)
        return v

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    def summary(self):
        return "\n".join(v.line() for v in self.verdicts)

    def to_json(self):
        return dumps_json(asdict(self))

    def to_csv(self):
        """The per-parameter-point table; columns are the union of point keys."""
        keys = []
        for p in self.points:
            keys.extend(k for k in p if k not in keys)
        return table_csv(keys, ([p.get(k, float("nan")) for k in keys] for p in self.points))


def fit_slope(x, y):
    """Least-squares slope of log y against log x, with its standard error."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    n = len(lx)
    if n > 2:
        resid = ly - A @ coef
        s2 = resid @ resid / (n - 2)
        se = math.sqrt(s2 / np.sum((lx - lx.mean()) ** 2))
    else:
        se = float("nan")
    return float(coef[0]), se


def mean_se(samples):
    a = np.asarray(samples, float)
    se = a.std(ddof=1) / math.sqrt(len(a)) if len(a) > 1 else float("nan")
    return float(a.mean()), float(se)


def run_replicas(fn, tasks, workers=1):
    """``[fn(t) for t in tasks]``, optionally across processes; order is preserved."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))
