"""Experiment configuration: TOML in, validated dataclasses out, TOML echo back.

Parsing is fail-closed: unknown keys are errors, so a typo cannot silently
fall back to a default.
"""
from __future__ import annotations

import dataclasses
import hashlib
import re
from dataclasses import dataclass, field
from typing import Union, get_args, get_origin, get_type_hints

import tomli_w

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .distributions import Disc, ManifoldSpec, default_manifold
from .errors import ConfigError

STUDIES = ("case1d", "case2d", "verify")
SCENARIOS = ("satisfied", "violated")


@dataclass
class GridConfig:
    lower: float = -2.0
    upper: float = 2.0
    cells: int = 400


@dataclass
class Case1dConfig:
    data_mean: float = 0.0
    data_std: float = 0.4
    hidden: list = field(default_factory=lambda: [100, 100])
    latent_dim: int = 1
    steps: int = 5000
    batch: int = 256
    optimizer: str = "adam"
    lr: float = 1e-3
    bandwidth: Union[float, str] = 0.05
    eval_samples: int = 200000
    # 1.0 keeps the counter diagnostic only; tail violations are structural for eps > 0
    max_violation_fraction: float = 1.0
    log_every: int = 1


@dataclass
class DiscConfig:
    center: list = field(default_factory=lambda: [0.0, 0.0])
    radius: float = 0.5
    label: int = 1
    subdomain: int = 1


def _default_discs():
    return [DiscConfig(list(d.center), d.radius, d.label, d.subdomain) for d in default_manifold().discs]


@dataclass
class ManifoldConfig:
    n_classes: int = 2
    discs: list = field(default_factory=_default_discs)

    def build(self) -> ManifoldSpec:
        return ManifoldSpec(
            tuple(Disc(tuple(d.center), d.radius, d.label, d.subdomain) for d in self.discs), self.n_classes
        )


@dataclass
class Case2dConfig:
    scenario: str = "satisfied"
    uncovered: list = field(default_factory=lambda: ["12"])
    replicates: int = 1
    rounds: int = 10000
    batch: int = 256
    optimizer: str = "adam"
    lr: float = 1e-3
    n_d: int = 1
    n_g: int = 1
    latent_dim: int = 2
    feature_dims: list = field(default_factory=lambda: [2, 64, 64])
    generator_hidden: list = field(default_factory=lambda: [64, 64])
    labeled_per_subdomain: int = 6
    unlabeled: int = 500
    non_saturating: bool = False
    checkpoint_every: int = 1000
    snapshot_size: int = 512
    test_resolution: int = 41
    map_cells: int = 100


@dataclass
class VerifyConfig:
    n_pairs: int = 50
    eps: list = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2])
    n_prop1_pairs: int = 10
    n_lemma1_fields: int = 100
    n_classes: int = 3
    corrupt_closed_form: bool = False


@dataclass
class ExperimentConfig:
    study: str = "case1d"
    seed: int = 0
    eps: list = field(default_factory=lambda: [0.0, 0.1, 0.2])
    out: str = ""
    workers: int = 1
    grid: GridConfig = field(default_factory=GridConfig)
    case1d: Case1dConfig = field(default_factory=Case1dConfig)
    case2d: Case2dConfig = field(default_factory=Case2dConfig)
    manifold: ManifoldConfig = field(default_factory=ManifoldConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def validate(self) -> "ExperimentConfig":
        validate(self)
        return self

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()


# -- generic dict -> dataclass -----------------------------------------------------------

_ELEMENT_TYPES = {
    ("Case1dConfig", "hidden"): int,
    ("Case2dConfig", "uncovered"): str,
    ("Case2dConfig", "feature_dims"): int,
    ("Case2dConfig", "generator_hidden"): int,
    ("DiscConfig", "center"): float,
    ("VerifyConfig", "eps"): float,
    ("ExperimentConfig", "eps"): float,
    ("ManifoldConfig", "discs"): DiscConfig,
}


def _coerce(value, typ, path):
    if typ is bool:
        if isinstance(value, bool):
            return value
    elif typ is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif typ is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif typ is str:
        if isinstance(value, str):
            return value
    elif dataclasses.is_dataclass(typ):
        if isinstance(value, dict):
            return _from_dict(typ, value, path)
    elif get_origin(typ) is Union:
        for option in get_args(typ):
            try:
                return _coerce(value, option, path)
            except ConfigError:
                continue
    name = getattr(typ, "__name__", str(typ))
    raise ConfigError(f"{path}: expected {name}, got {type(value).__name__} {value!r}")


def _from_dict(cls, data: dict, path: str):
    hints = get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key {where}{unknown[0]}")
    kwargs = {}
    for name, value in data.items():
        key_path = f"{path}.{name}" if path else name
        typ = hints[name]
        if typ is list:
            if not isinstance(value, list):
                raise ConfigError(f"{key_path}: expected a list, got {type(value).__name__}")
            elem = _ELEMENT_TYPES[(cls.__name__, name)]
            kwargs[name] = [_coerce(v, elem, f"{key_path}[{i}]") for i, v in enumerate(value)]
        else:
            kwargs[name] = _coerce(value, typ, key_path)
    return cls(**kwargs)


def validate(cfg: ExperimentConfig):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.study in STUDIES, f"study must be one of {', '.join(STUDIES)}, got {cfg.study!r}")
    need(cfg.seed >= 0, "seed must be non-negative")
    need(cfg.workers >= 1, "workers must be at least 1")
    need(cfg.study != "case1d" or len(cfg.eps) >= 1, "eps list must not be empty for the case1d study")
    for e in list(cfg.eps) + list(cfg.verify.eps):
        need(0.0 <= e < 1.0, f"eps must lie in [0,1), got {e}")
    need(cfg.grid.lower < cfg.grid.upper, "grid.lower must be below grid.upper")
    need(cfg.grid.cells >= 2, "grid.cells must be at least 2")

    c1 = cfg.case1d
    need(c1.data_std > 0, "case1d.data_std must be positive")
    need(all(h >= 1 for h in c1.hidden), "case1d.hidden sizes must be positive")
    for name in ("latent_dim", "steps", "batch", "eval_samples", "log_every"):
        need(getattr(c1, name) >= 1, f"case1d.{name} must be at least 1")
    need(c1.optimizer in ("adam", "sgd"), "case1d.optimizer must be adam or sgd")
    need(c1.lr > 0, "case1d.lr must be positive")
    need(
        c1.bandwidth == "silverman" if isinstance(c1.bandwidth, str) else c1.bandwidth > 0,
        "case1d.bandwidth must be positive or \"silverman\"",
    )
    need(0.0 <= c1.max_violation_fraction <= 1.0, "case1d.max_violation_fraction must lie in [0,1]")

    c2 = cfg.case2d
    need(c2.scenario in SCENARIOS, f"case2d.scenario must be satisfied or violated, got {c2.scenario!r}")
    for name in ("rounds", "replicates", "latent_dim", "checkpoint_every", "test_resolution", "map_cells"):
        need(getattr(c2, name) >= 1, f"case2d.{name} must be at least 1")
    for name in ("batch", "n_d", "n_g", "labeled_per_subdomain", "unlabeled", "snapshot_size"):
        need(getattr(c2, name) >= 0, f"case2d.{name} must be non-negative")
    need(c2.optimizer in ("adam", "sgd"), "case2d.optimizer must be adam or sgd")
    need(c2.lr > 0, "case2d.lr must be positive")
    need(len(c2.feature_dims) >= 2 and c2.feature_dims[0] == 2, "case2d.feature_dims must start with input dim 2")
    need(all(h >= 1 for h in c2.feature_dims + c2.generator_hidden), "case2d layer sizes must be positive")

    try:
        manifold = cfg.manifold.build()
    except Exception as exc:
        raise ConfigError(f"manifold: {exc}") from exc
    names = {d.name for d in manifold.discs}
    if c2.scenario == "violated":
        need(len(c2.uncovered) >= 1, "case2d.uncovered must name at least one subdomain in the violated scenario")
        for name in c2.uncovered:
            need(name in names, f"case2d.uncovered names unknown subdomain {name!r} (have {sorted(names)})")

    v = cfg.verify
    for name in ("n_pairs", "n_prop1_pairs", "n_lemma1_fields"):
        need(getattr(v, name) >= 1, f"verify.{name} must be at least 1")
    need(v.n_classes >= 1, "verify.n_classes must be at least 1")


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    study = data.get("study")
    if isinstance(study, dict):
        # accept a [study] table carrying the study kind
        if set(study) - {"kind"}:
            raise ConfigError(f"unknown key study.{sorted(set(study) - {'kind'})[0]}")
        if "kind" not in study:
            raise ConfigError("study.kind is required")
        data["study"] = study["kind"]
    if "study" not in data:
        raise ConfigError("study is required")
    cfg = _from_dict(ExperimentConfig, data, "")
    validate(cfg)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = m.group(1) if m else "?"
        raise ConfigError(f"config parse error at line {line}: {exc}") from exc
    return config_from_dict(data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(dataclasses.asdict(cfg))
