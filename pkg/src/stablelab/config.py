"""Experiment configuration: TOML files plus command-line overrides.

A config file looks like::

    schema_version = 1

    [experiment]
    seed = 7
    N = 100000
    threads = 4

    [stable]
    n = 2
    alpha = 1.0

    [domain]
    kind = "ball"          # ball | slitted | polygon

    [martin]               # one optional table per subcommand
    x = [0.5, 0.0]
    z = [1.0, 0.0]
    depth = 10

Measures are named presets (``"uniform"``, ``"cosine a=0.5 b=0.5"``,
``"arc theta0=0 half_width=0.5"``, ``"atom theta=0"``) or a piecewise-constant
table given as a list of ``[lo, hi, value]`` triples. Perturbations are
``"zero"``, ``"constant-q c=-0.5"`` or ``"relativistic m=1"``.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import measures
from .errors import ConfigError
from .geometry import Domain, FatCharacteristics, PolygonUnion, slitted_rectangle, unit_disk
from .kernels import StableParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
_TOP_LEVEL = {"schema_version", "experiment", "stable", "domain"}
_EXPERIMENT_KEYS = {"seed", "N", "dt", "lambda", "threads"}


@dataclass
class ExperimentConfig:
    subcommand: str = "selftest"
    n: int = 2
    alpha: float = 1.0
    seed: int = 0
    N: int = 10_000
    dt: float = 0.01
    lam: float = 0.5
    threads: int | None = None
    domain: dict = field(default_factory=lambda: {"kind": "ball"})
    options: dict = field(default_factory=dict)  # subcommand block

    @property
    def params(self) -> StableParams:
        try:
            return StableParams(self.n, self.alpha)
        except ValueError as exc:
            raise ConfigError(f"[stable]: {exc}") from None

    def build_domain(self) -> Domain:
        return build_domain(self.domain)

    def echo(self) -> dict:
        """Input echo used in reports (no wall-clock or host data)."""
        return {"subcommand": self.subcommand, "n": self.n, "alpha": self.alpha, "seed": self.seed,
                "N": self.N, "dt": self.dt, "lambda": self.lam, "domain": dict(self.domain),
                "options": {k: _jsonable(v) for k, v in sorted(self.options.items())}}


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def load_file(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError:
        raise
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def from_mapping(data: dict, subcommand: str) -> ExperimentConfig:
    """Validate a parsed config mapping; unknown keys are rejected with their table name."""
    version = data.get("schema_version")
    if version is None:
        raise ConfigError("schema_version: missing (expected 1)")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported value {version!r} (expected {SCHEMA_VERSION})")
    for key in data:
        if key not in _TOP_LEVEL and not isinstance(data[key], dict):
            raise ConfigError(f"{key}: unknown top-level key")
    cfg = ExperimentConfig(subcommand=subcommand)
    exp = data.get("experiment", {})
    for key in exp:
        if key not in _EXPERIMENT_KEYS:
            raise ConfigError(f"experiment.{key}: unknown key")
    cfg.seed = _typed(exp.get("seed", cfg.seed), int, "experiment.seed")
    cfg.N = _typed(exp.get("N", cfg.N), int, "experiment.N")
    cfg.dt = _typed(exp.get("dt", cfg.dt), float, "experiment.dt")
    cfg.lam = _typed(exp.get("lambda", cfg.lam), float, "experiment.lambda")
    if "threads" in exp:
        cfg.threads = _typed(exp["threads"], int, "experiment.threads")
    stable = data.get("stable", {})
    for key in stable:
        if key not in ("n", "alpha"):
            raise ConfigError(f"stable.{key}: unknown key")
    cfg.n = _typed(stable.get("n", cfg.n), int, "stable.n")
    cfg.alpha = _typed(stable.get("alpha", cfg.alpha), float, "stable.alpha")
    if "domain" in data:
        cfg.domain = dict(data["domain"])
    cfg.options = dict(data.get(subcommand, {}))
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if cfg.N < 1:
        raise ConfigError(f"N: must be >= 1, got {cfg.N}")
    if not cfg.dt > 0:
        raise ConfigError(f"dt: must be positive, got {cfg.dt}")
    if not 0 < cfg.lam <= 1:
        raise ConfigError(f"lambda: must lie in (0, 1], got {cfg.lam}")
    if cfg.threads is not None and cfg.threads < 1:
        raise ConfigError(f"threads: must be >= 1, got {cfg.threads}")
    cfg.params  # noqa: B018 - raises ConfigError on bad (n, alpha)


def _typed(value, kind, where):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(f"{where}: expected {kind.__name__}, got {value!r}")
    return value


# ---------------------------------------------------------------- value parsers

def parse_point(value, where: str = "point") -> tuple:
    """``"0.5,0"`` or ``[0.5, 0]`` -> (0.5, 0.0)."""
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        raise ConfigError(f"{where}: expected a point like 0.5,0, got {value!r}")
    try:
        pt = tuple(float(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot parse {value!r} as a point") from None
    if len(pt) < 2 or not all(math.isfinite(c) for c in pt):
        raise ConfigError(f"{where}: need at least two finite coordinates, got {value!r}")
    return pt


def parse_points(value, where: str = "points") -> list[tuple]:
    """``"0.5,0;0,0.5"`` or a list of points."""
    if isinstance(value, str):
        return [parse_point(p, where) for p in value.split(";") if p.strip()]
    if isinstance(value, (list, tuple)) and value and isinstance(value[0], (list, tuple, str)):
        return [parse_point(p, where) for p in value]
    return [parse_point(value, where)]


def _preset_args(text: str, where: str) -> tuple[str, dict]:
    name, *rest = text.split()
    args = {}
    for item in rest:
        if "=" not in item:
            raise ConfigError(f"{where}: expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            args[k] = float(v)
        except ValueError:
            raise ConfigError(f"{where}: {k} must be a number, got {v!r}") from None
    return name, args


def parse_measure(value, where: str = "measure") -> measures.BoundaryMeasure:
    if isinstance(value, (list, tuple)):
        try:
            pieces = [(float(a), float(b), float(c)) for a, b, c in value]
            return measures.piecewise_constant(pieces)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: bad piecewise table ({exc})") from None
    if not isinstance(value, str) or not value.strip():
        raise ConfigError(f"{where}: expected a preset name or a [lo, hi, value] table")
    name, args = _preset_args(value, where)
    builders = {
        "uniform": (measures.uniform, {"mass"}),
        "cosine": (measures.cosine, {"a", "b"}),
        "arc": (measures.arc_indicator, {"theta0", "half_width", "value"}),
        "atom": (measures.atom, {"theta", "mass"}),
    }
    if name not in builders:
        raise ConfigError(f"{where}: unknown measure preset {name!r} (known: {', '.join(builders)})")
    fn, allowed = builders[name]
    extra = set(args) - allowed
    if extra:
        raise ConfigError(f"{where}: preset {name!r} takes {sorted(allowed)}, got {sorted(extra)}")
    if name == "arc":
        args = {"theta0": 0.0, "half_width": 0.5, **args}
    if name == "atom":
        args = {"theta": 0.0, **args}
    try:
        return fn(**args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_perturbation(value, params: StableParams, domain: Domain, where: str = "perturbation"):
    from . import feynman_kac as fk

    if not isinstance(value, str) or not value.strip():
        raise ConfigError(f"{where}: expected 'zero', 'constant-q c=...' or 'relativistic m=...'")
    name, args = _preset_args(value, where)
    if name == "zero" and not args:
        return fk.zero_spec()
    if name == "constant-q" and set(args) == {"c"}:
        return fk.constant_q_spec(args["c"])
    if name == "relativistic" and set(args) == {"m"}:
        if not args["m"] > 0:
            raise ConfigError(f"{where}: m must be positive")
        return fk.relativistic_spec(params, args["m"], domain)
    raise ConfigError(f"{where}: cannot parse perturbation {value!r}")


def build_domain(spec: dict) -> Domain:
    kind = spec.get("kind", "ball")
    try:
        if kind == "ball":
            fat = spec.get("kappa", 0.5), spec.get("R", 1.0)
            return unit_disk(*fat)
        if kind == "slitted":
            kw = {k: spec[k] for k in ("k_max", "kappa", "R") if k in spec}
            if "x0" in spec:
                kw["x0"] = parse_point(spec["x0"], "domain.x0")
            return slitted_rectangle(**kw)
        if kind == "polygon":
            polys = spec.get("polygons")
            if not polys:
                raise ConfigError("domain.polygons: required for kind='polygon'")
            shape = PolygonUnion(tuple(tuple(tuple(map(float, v)) for v in p) for p in polys))
            x0 = parse_point(spec.get("x0", (0.0, 0.0)), "domain.x0")
            return Domain(shape, x0, FatCharacteristics(spec.get("kappa", 0.25), spec.get("R", 0.25)))
    except ConfigError:
        raise
    except Exception as exc:  # geometry errors surface as config diagnostics
        raise ConfigError(f"domain: {exc}") from None
    raise ConfigError(f"domain.kind: unknown value {kind!r} (ball | slitted | polygon)")


def option(cfg: ExperimentConfig, key: str, default: Any = None, parse=None) -> Any:
    value = cfg.options.get(key, default)
    if value is None or parse is None:
        return value
    return parse(value, f"{cfg.subcommand}.{key}")
