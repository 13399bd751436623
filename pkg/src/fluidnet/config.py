"""Scenario configuration, unit helpers and the seeded randomness service.

Config documents are YAML. Keys are the ``ScenarioConfig`` field names; they
may sit at the top level or inside any number of named sections, e.g.::

    physical:
      num_cells: 7
      tx_power_max: 40
    learner:
      alpha: 0.1
    run:
      master_seed: 3
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np
import yaml

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0


class ConfigError(ValueError):
    """Raised for unparseable documents, unknown keys and broken invariants."""


@dataclass(frozen=True)
class ScenarioConfig:
    # network / radio
    num_cells: int = 7
    inter_site_distance: float = 500.0
    carrier_frequency: float = 3.5e9
    bandwidth: float = 10e6
    tx_power_max: float = 40.0
    noise_figure: float = 9.0
    pathloss_ref: float = 30.0
    pathloss_exponent: float = 3.5
    min_link_distance: float = 10.0
    shadowing_enabled: bool = False
    shadowing_sigma: float = 8.0
    # fluid antenna
    num_ports: int = 16
    track_length: float = 3.0
    array_gain_elements: int = 4
    latency_slots_per_port: int = 1
    # users
    users_per_cell: int = 10
    user_speed: tuple[float, float] = (1.0, 3.0)
    # timing
    slot_duration: float = 1e-3
    fading_epoch: int = 10
    control_interval: int = 50
    # learner
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon_start: float = 0.3
    epsilon_end: float = 0.02
    epsilon_decay_fraction: float = 0.6
    reward_interference_weight: float = 0.5
    # run
    warmup_slots: int = 1_000
    training_slots: int = 100_000
    eval_slots: int = 20_000
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "user_speed", tuple(float(v) for v in self.user_speed))
        validate(self)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def noise_power_dbm(self) -> float:
        return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(self.bandwidth) + self.noise_figure

    @property
    def noise_power_w(self) -> float:
        return dbm_to_watts(self.noise_power_dbm)

    @property
    def epoch_seconds(self) -> float:
        return self.fading_epoch * self.slot_duration

    @property
    def num_users(self) -> int:
        return self.num_cells * self.users_per_cell

    @property
    def training_decisions(self) -> int:
        return math.ceil(self.training_slots / self.control_interval)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["user_speed"] = list(self.user_speed)
        return out


def _check(cond: bool, name: str) -> None:
    if not cond:
        raise ConfigError(f"constraint violated: {name}")


def validate(cfg: ScenarioConfig) -> None:
    _check(cfg.num_ports >= 2, "num_ports ≥ 2")
    _check(cfg.track_length > 0, "track_length > 0")
    _check(cfg.fading_epoch >= 1, "fading_epoch ≥ 1")
    _check(cfg.control_interval >= cfg.fading_epoch, "control_interval ≥ fading_epoch")
    _check(cfg.epsilon_end <= cfg.epsilon_start, "epsilon_end ≤ epsilon_start")
    _check(0.0 <= cfg.epsilon_end and cfg.epsilon_start <= 1.0, "0 ≤ epsilon ≤ 1")
    _check(0.0 < cfg.alpha <= 1.0, "0 < alpha ≤ 1")
    _check(0.0 <= cfg.gamma < 1.0, "0 ≤ gamma < 1")
    _check(0.0 <= cfg.epsilon_decay_fraction <= 1.0, "0 ≤ epsilon_decay_fraction ≤ 1")
    _check(cfg.tx_power_max > 0, "tx_power_max > 0")
    _check(cfg.bandwidth > 0, "bandwidth > 0")
    _check(cfg.inter_site_distance > 0, "inter_site_distance > 0")
    _check(cfg.carrier_frequency > 0, "carrier_frequency > 0")
    _check(cfg.slot_duration > 0, "slot_duration > 0")
    _check(cfg.num_cells >= 1, "num_cells ≥ 1")
    _check(cfg.users_per_cell >= 0, "users_per_cell ≥ 0")
    _check(cfg.array_gain_elements >= 1, "array_gain_elements ≥ 1")
    _check(cfg.latency_slots_per_port >= 0, "latency_slots_per_port ≥ 0")
    _check(cfg.min_link_distance > 0, "min_link_distance > 0")
    _check(cfg.shadowing_sigma >= 0, "shadowing_sigma ≥ 0")
    _check(len(cfg.user_speed) == 2 and 0 <= cfg.user_speed[0] <= cfg.user_speed[1],
           "user_speed = [min, max] with 0 ≤ min ≤ max")
    _check(cfg.reward_interference_weight >= 0, "reward_interference_weight ≥ 0")
    for name in ("warmup_slots", "training_slots", "eval_slots"):
        _check(getattr(cfg, name) >= 0, f"{name} ≥ 0")


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _coerce(key: str, value: Any, line: int | None) -> Any:
    where = f"key '{key}'" + (f" (line {line})" if line is not None else "")
    default = getattr(ScenarioConfig, key, None) if key != "user_speed" else (1.0, 3.0)
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError("expected true/false")
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError("expected an integer")
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError("expected a number")
            return float(value)
        if key == "user_speed":
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return (float(value), float(value))
            lo, hi = value
            return (float(lo), float(hi))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad value {value!r}: {exc}") from None
    return value


class _LineLoader(yaml.SafeLoader):
    """SafeLoader that remembers the source line of every mapping key."""


def _construct_mapping(loader, node, deep=False):
    pairs = []
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        value = loader.construct_object(value_node, deep=True)
        pairs.append((key, value, key_node.start_mark.line + 1))
    return _Mapping(pairs)


class _Mapping(list):
    pass


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _flatten(mapping: _Mapping, out: dict, lines: dict, prefix: str = "") -> None:
    for key, value, line in mapping:
        if not isinstance(key, str):
            raise ConfigError(f"line {line}: keys must be strings, got {key!r}")
        if isinstance(value, _Mapping):
            _flatten(value, out, lines, prefix=f"{prefix}{key}.")
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {line}: unknown key '{prefix}{key}'")
        if key in out:
            raise ConfigError(f"line {line}: duplicate key '{key}' (first at line {lines[key]})")
        out[key] = value
        lines[key] = line


def load_config(text: str) -> ScenarioConfig:
    """Parse a YAML document into a validated config; absent keys keep defaults."""
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        ctx = getattr(exc, "context_mark", None)
        # unclosed brackets are only detected at end of stream; point at the opener too
        opened = f" (opened at line {ctx.line + 1}, column {ctx.column + 1})" if ctx else ""
        raise ConfigError(f"{loc}parse error: {getattr(exc, 'problem', exc)}{opened}") from None
    if doc is None:
        return ScenarioConfig()
    if not isinstance(doc, _Mapping):
        raise ConfigError("config document must be a mapping")
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    _flatten(doc, values, lines)
    kwargs = {k: _coerce(k, v, lines.get(k)) for k, v in values.items()}
    return ScenarioConfig(**kwargs)


def load_config_file(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read())


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# --- units -----------------------------------------------------------------

def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


# --- randomness ------------------------------------------------------------

def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


@dataclass
class RngStream:
    """A labelled, independently seeded generator.

    The underlying PCG64 state is seeded from ``SeedSequence(master_seed,
    spawn_key=(hash(label), index))``, so distinct labels or indices never
    share state and any stream can be rebuilt from its three coordinates.
    """

    master_seed: int
    label: str
    index: int
    gen: np.random.Generator = field(repr=False)

    def state(self) -> dict:
        return self.gen.bit_generator.state


def derive_stream(master_seed: int, label: str, index: int = 0) -> RngStream:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(_label_key(label), int(index)))
    return RngStream(master_seed, label, index, np.random.Generator(np.random.PCG64(seq)))
