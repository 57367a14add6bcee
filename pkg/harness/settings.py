"""
Experiment configuration: a flat key space, read from `key = value` files.

Precedence is profile defaults < file values < command-line overrides. Section
headers only group keys for readers; every key is unique across sections.
"""
import dataclasses
import difflib
import logging
import re
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from core import config as defaults
from core.errors import ConfigError, ContractViolation
from core.models import (
    CostModel, Hyper, Mode, ModelKind, SimConfig, SimilarityKind, Strategy, SyntheticSpec,
)

logger = logging.getLogger(__name__)

_RUN_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}
DATASETS = ("synthetic", "csv")
PARTITIONS = ("iid", "dirichlet", "lognormal")


@dataclass(frozen=True)
class ExperimentConfig:
    # run
    profile: str = defaults.DEFAULT_PROFILE
    run_id: str = defaults.DEFAULT_RUN_ID
    out_dir: str = defaults.DEFAULT_OUT_DIR
    seed: int = 0
    repeats: int = 1
    workers: int = 1
    target_fraction: float = defaults.DEFAULT_TARGET_FRACTION
    dump_replay: bool = False
    # protocol
    strategy: Strategy = Strategy.FEDQS_SGD
    mode: Mode = Mode.SAFL
    num_clients: int = defaults.DEFAULT_NUM_CLIENTS
    k_trigger: int = defaults.DEFAULT_K
    rounds: int = defaults.DEFAULT_ROUNDS
    local_epochs: int = defaults.DEFAULT_LOCAL_EPOCHS
    speed_ratio: float = defaults.DEFAULT_SPEED_RATIO
    activation_count: int = 0   # sync mode; 0 means K
    # hyper
    eta0: float = defaults.DEFAULT_ETA0
    a: float = defaults.DEFAULT_A
    m0: float = defaults.DEFAULT_M0
    k: float = defaults.DEFAULT_K_MOMENTUM
    eta_min: float = defaults.DEFAULT_ETA_MIN
    eta_max: float = defaults.DEFAULT_ETA_MAX
    theta_cap: float = defaults.DEFAULT_THETA_CAP
    grad_clip: float = defaults.DEFAULT_GRAD_CLIP
    spread_threshold: float = defaults.DEFAULT_SPREAD_THRESHOLD
    sim_kind: SimilarityKind = SimilarityKind.COSINE
    momentum_carryover: bool = False
    use_momentum: bool = True
    use_feedback: bool = True
    g_max: float = defaults.DEFAULT_G_MAX
    weight_floor: float = defaults.DEFAULT_WEIGHT_FLOOR
    eta_g: float = defaults.DEFAULT_ETA_G
    # cost
    cost_c0: float = defaults.DEFAULT_COST_C0
    cost_c1: float = defaults.DEFAULT_COST_C1
    # model
    model_kind: ModelKind = ModelKind.LOGREG
    hidden_dim: int = defaults.DEFAULT_HIDDEN_DIM
    # data
    dataset: str = "synthetic"
    num_classes: int = 10
    dim: int = 20
    per_class: int = 200
    class_sep: float = 3.0
    noise_sd: float = 1.0
    test_per_class: int = defaults.DEFAULT_TEST_PER_CLASS
    csv_path: str = ""
    feature_columns: str = ""       # comma separated
    label_column: str = ""
    categorical: str = ""           # col:a|b|c;col2:x|y
    group_column: str = ""
    test_fraction: float = defaults.DEFAULT_TEST_FRACTION
    train_fraction: float = defaults.DEFAULT_TRAIN_FRACTION
    # partition
    partition: str = "dirichlet"
    dirichlet_x: float = defaults.DEFAULT_DIRICHLET_X
    lognormal_sigma: float = defaults.DEFAULT_LOGNORMAL_SIGMA
    clients_per_group: int = 0      # 0 means num_clients / groups

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(self.num_classes, self.dim, self.per_class, self.class_sep, self.noise_sd)

    def test_spec(self) -> SyntheticSpec:
        return SyntheticSpec(self.num_classes, self.dim, self.test_per_class, self.class_sep, self.noise_sd)

    def categorical_map(self) -> Dict[str, List[str]]:
        out: Dict[str, List[str]] = {}
        for chunk in filter(None, (c.strip() for c in self.categorical.split(";"))):
            column, sep, options = chunk.partition(":")
            if not sep or not options:
                raise ConfigError(f"expected column:a|b|..., got '{chunk}'", key="categorical")
            out[column.strip()] = [o.strip() for o in options.split("|")]
        return out

    def feature_list(self) -> List[str]:
        return [c.strip() for c in self.feature_columns.split(",") if c.strip()]


SECTIONS: Dict[str, Tuple[str, ...]] = {
    "run": ("profile", "run_id", "out_dir", "seed", "repeats", "workers", "target_fraction", "dump_replay"),
    "protocol": ("strategy", "mode", "num_clients", "k_trigger", "rounds", "local_epochs",
                 "speed_ratio", "activation_count"),
    "hyper": ("eta0", "a", "m0", "k", "eta_min", "eta_max", "theta_cap", "grad_clip",
              "spread_threshold", "sim_kind", "momentum_carryover", "use_momentum",
              "use_feedback", "g_max", "weight_floor", "eta_g"),
    "cost": ("cost_c0", "cost_c1"),
    "model": ("model_kind", "hidden_dim"),
    "data": ("dataset", "num_classes", "dim", "per_class", "class_sep", "noise_sd",
             "test_per_class", "csv_path", "feature_columns", "label_column", "categorical",
             "group_column", "test_fraction", "train_fraction"),
    "partition": ("partition", "dirichlet_x", "lognormal_sigma", "clients_per_group"),
}

_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
KEYS: Tuple[str, ...] = tuple(_FIELDS)


def profile_defaults(profile: str) -> ExperimentConfig:
    if profile not in defaults.PROFILES:
        raise ConfigError(f"unknown profile '{profile}', expected one of {', '.join(defaults.PROFILES)}", key="profile")
    base = ExperimentConfig(profile=profile)
    if profile == "desk":
        base = dataclasses.replace(base, **defaults.DESK_PROFILE)
    return base


def _check_key(key: str) -> None:
    if key in _FIELDS:
        return
    close = difflib.get_close_matches(key, KEYS, n=1, cutoff=0.5)
    hint = f"; did you mean '{close[0]}'?" if close else ""
    raise ConfigError(f"unknown key{hint}", key=key)


def coerce(key: str, text: str):
    """Convert a raw string to the type of the named key."""
    _check_key(key)
    kind = _FIELDS[key].type
    value = text.strip()
    if kind is bool:
        lowered = value.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"expected a boolean, got '{value}'", key=key)
    if kind is int:
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"expected an integer, got '{value}'", key=key) from None
    if kind is float:
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"expected a number, got '{value}'", key=key) from None
    if isinstance(kind, type) and issubclass(kind, Enum):
        try:
            return kind(value.lower())
        except ValueError:
            options = ", ".join(m.value for m in kind)
            raise ConfigError(f"expected one of {options}, got '{value}'", key=key) from None
    return value


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_pairs(text: str, source: str = "<config>") -> Dict[str, str]:
    """Raw key/value pairs of a config text; keys are checked, values are not."""
    pairs: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                logger.debug("%s:%d: unrecognized section [%s]", source, lineno, section)
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{line}'")
        _check_key(key)
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key", key=key)
        pairs[key] = value.strip()
    return pairs


def apply_overrides(cfg: ExperimentConfig, overrides: Mapping[str, str]) -> ExperimentConfig:
    if not overrides:
        return cfg
    changes = {key: coerce(key, text) for key, text in overrides.items()}
    return validate(dataclasses.replace(cfg, **changes))


def build_config(
    pairs: Mapping[str, str],
    overrides: Optional[Mapping[str, str]] = None,
    profile: Optional[str] = None,
) -> ExperimentConfig:
    overrides = dict(overrides or {})
    chosen = profile or overrides.pop("profile", None) or pairs.get("profile") or defaults.DEFAULT_PROFILE
    overrides.pop("profile", None)
    cfg = profile_defaults(chosen.strip())
    file_values = {key: coerce(key, text) for key, text in pairs.items() if key != "profile"}
    cfg = dataclasses.replace(cfg, **file_values)
    return apply_overrides(validate(cfg), overrides)


def parse_config(text: str, overrides: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Parse a config text; overrides win over the text's values."""
    return build_config(read_pairs(text), overrides)


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, str]] = None,
    profile: Optional[str] = None,
) -> ExperimentConfig:
    pairs: Dict[str, str] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        pairs = read_pairs(text, str(path))
    cfg = build_config(pairs, overrides, profile)
    logger.debug("config %s: profile=%s strategy=%s mode=%s", path, cfg.profile, cfg.strategy.value, cfg.mode.value)
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {format_value(getattr(cfg, key))}" for key in keys)
        lines.append("")
    return "\n".join(lines)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Cross-key checks; returns cfg unchanged when valid."""
    if not _RUN_ID.match(cfg.run_id):
        raise ConfigError(f"'{cfg.run_id}' is not a filesystem-safe name", key="run_id")
    if cfg.seed < 0:
        raise ConfigError("must be nonnegative", key="seed")
    if cfg.repeats < 1:
        raise ConfigError("must be >= 1", key="repeats")
    if cfg.workers < 1:
        raise ConfigError("must be >= 1", key="workers")
    if not 0 < cfg.target_fraction <= 1:
        raise ConfigError("must lie in (0, 1]", key="target_fraction")
    if cfg.dataset not in DATASETS:
        raise ConfigError(f"expected one of {', '.join(DATASETS)}", key="dataset")
    if cfg.partition not in PARTITIONS:
        raise ConfigError(f"expected one of {', '.join(PARTITIONS)}", key="partition")
    if cfg.mode == Mode.SYNC and cfg.strategy.is_fedqs:
        raise ConfigError("sync mode runs fedsgd or fedavg only", key="strategy")
    if cfg.dataset == "csv":
        for key in ("csv_path", "feature_columns", "label_column"):
            if not getattr(cfg, key):
                raise ConfigError("required when dataset = csv", key=key)
    if not 0 < cfg.train_fraction < 1:
        raise ConfigError("must lie in (0, 1)", key="train_fraction")
    if not 0 < cfg.test_fraction < 1:
        raise ConfigError("must lie in (0, 1)", key="test_fraction")
    if cfg.clients_per_group < 0:
        raise ConfigError("must be nonnegative", key="clients_per_group")
    cfg.categorical_map()
    to_sim_config(cfg, cfg.seed)
    return cfg


def to_sim_config(cfg: ExperimentConfig, seed: int) -> SimConfig:
    """Engine configuration for one repeat."""
    try:
        hyper = Hyper(
            eta0=cfg.eta0, a=cfg.a, m0=cfg.m0, k=cfg.k, eta_min=cfg.eta_min, eta_max=cfg.eta_max,
            theta_cap=cfg.theta_cap, grad_clip=cfg.grad_clip, spread_threshold=cfg.spread_threshold,
            sim_kind=cfg.sim_kind, momentum_carryover=cfg.momentum_carryover,
            use_momentum=cfg.use_momentum, use_feedback=cfg.use_feedback, g_max=cfg.g_max,
            weight_floor=cfg.weight_floor, eta_g=cfg.eta_g,
        )
        return SimConfig(
            num_clients=cfg.num_clients,
            k_trigger=cfg.k_trigger,
            rounds=cfg.rounds,
            local_epochs=cfg.local_epochs,
            strategy=cfg.strategy,
            mode=cfg.mode,
            speed_ratio=cfg.speed_ratio,
            hyper=hyper,
            cost=CostModel(cfg.cost_c0, cfg.cost_c1),
            seed=seed,
            model_kind=cfg.model_kind,
            hidden_dim=cfg.hidden_dim,
            activation_count=cfg.activation_count or None,
            keep_updates=cfg.dump_replay,
        )
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from exc
