"""Run configuration: one JSON file drives every command.

Parsing is strict — unknown keys anywhere in the tree are rejected with the
offending key path — and every field has a documented default (the
dataclasses below are the schema).  The single ``master_seed`` governs all
randomness of a run.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import types
import typing
from dataclasses import dataclass, field
from typing import Optional

from .engine import ConfigError
from .infoset import Determinization
from .pipeline import BotSpec, LearningConfig


def parse_into(cls, data, path: str = "config"):
    """Build a dataclass tree from plain JSON data, rejecting unknown keys
    and reporting the full path of any offending field."""
    if dataclasses.is_dataclass(cls):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected an object for {cls.__name__}")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(fields)
        if unknown:
            raise ConfigError(f"{path}: unknown key {sorted(unknown)[0]!r} "
                              f"(known: {sorted(fields)})")
        kwargs = {}
        for name, value in data.items():
            kwargs[name] = _parse_value(fields[name].type, value, f"{path}.{name}", cls)
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}: {cls} is not a config section")


def _resolve(tp, owner):
    if isinstance(tp, str):
        hints = typing.get_type_hints(owner)
        return hints.get(tp, tp)
    return tp


def _parse_value(tp, value, path: str, owner):
    tp = _resolve(tp, owner)
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _parse_value(args[0], value, path, owner)
    if dataclasses.is_dataclass(tp):
        return parse_into(tp, value, path)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            raise ConfigError(f"{path}: {value!r} is not one of "
                              f"{[e.value for e in tp]}") from None
    if origin in (list, typing.List):
        (item_tp,) = typing.get_args(tp) or (typing.Any,)
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return [_parse_value(item_tp, v, f"{path}[{i}]", owner) for i, v in enumerate(value)]
    if origin in (tuple, typing.Tuple):
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            args = (args[0],) * len(value)
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} elements")
        return tuple(_parse_value(a, v, f"{path}[{i}]", owner)
                     for i, (a, v) in enumerate(zip(args, value)))
    if tp is float and isinstance(value, int):
        return float(value)
    if tp in (int, float, str, bool) and not isinstance(value, tp):
        raise ConfigError(f"{path}: expected {tp.__name__}, got {type(value).__name__}")
    if tp is int and isinstance(value, bool):
        raise ConfigError(f"{path}: expected int, got bool")
    return value


@dataclass
class PairingConfig:
    """One row of a match experiment."""

    p1: BotSpec = field(default_factory=lambda: BotSpec(preset="mcts"))
    p2: BotSpec = field(default_factory=lambda: BotSpec(preset="mcts"))
    games: int = 500


@dataclass
class MatchConfig:
    pairings: list[PairingConfig] = field(default_factory=list)
    output: str = "match_table"  # writes <output>.txt and <output>.json


@dataclass
class SelfplayConfig:
    p1: BotSpec = field(default_factory=lambda: BotSpec(
        preset="mcts", determinization=Determinization.CHEATER))
    p2: BotSpec = field(default_factory=lambda: BotSpec(
        preset="mcts", determinization=Determinization.CHEATER))
    games: int = 100
    sample_p: float = 0.5
    output: str = "selfplay.cfds"


@dataclass
class RateConfig:
    bundles: list[str] = field(default_factory=list)
    matches_per_pair: int = 100
    iterations: int = 300
    period: int = 50
    preset: str = "mctsV"
    output: str = "ratings.json"


@dataclass
class RunConfig:
    """Top-level schema of the JSON config file."""

    master_seed: int = 1
    output_dir: str = "runs"
    workers: Optional[int] = None
    deck_names: tuple[str, str] = ("aggro", "control")
    learning: LearningConfig = field(default_factory=LearningConfig)
    selfplay: SelfplayConfig = field(default_factory=SelfplayConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    rate: RateConfig = field(default_factory=RateConfig)


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_into(RunConfig, data)
