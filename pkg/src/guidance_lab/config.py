"""Run configuration: one JSON file, every field validated before any work."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .guidance import GuidanceConfig
from .sampler import SamplerConfig
from .schedule import Schedule
from .trainer import TrainConfig
from .world import GmmWorld

TOP_LEVEL_KEYS = {"world", "schedule", "train", "sampler", "guidance", "output_dir", "seed"}


def default_world() -> GmmWorld:
    return GmmWorld.triangle(radius=1.0, std=0.4)


@dataclass(frozen=True)
class RunConfig:
    world: GmmWorld = field(default_factory=default_world)
    schedule: Schedule = field(default_factory=Schedule)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    output_dir: str = "out"
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "world": self.world.to_dict(),
            "schedule": self.schedule.to_dict(),
            "train": self.train.to_dict(),
            "sampler": self.sampler.to_dict(),
            "guidance": self.guidance.to_dict(),
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def _section(d, key):
    value = d.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError("must be a JSON object", key)
    return value


def _wrap(field_name, fn, *args):
    try:
        return fn(*args)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field_name) from exc


def parse_config(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("top level must be a JSON object", "config")
    unknown = set(d) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "config")
    world = _wrap("world", GmmWorld.from_dict, d["world"]) if "world" in d else default_world()
    schedule = _wrap("schedule", Schedule.from_dict, _section(d, "schedule"))
    train = _wrap("train", TrainConfig.from_dict, _section(d, "train"))
    s = _section(d, "sampler")
    sampler = _wrap("sampler", lambda: SamplerConfig(int(s.get("T", 1024)), float(s.get("v", 0.3)), schedule))
    guidance = _wrap("guidance", GuidanceConfig.from_dict, _section(d, "guidance"))
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"must be a non-negative integer, got {seed!r}", "seed")
    out = d.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("must be a non-empty string", "output_dir")
    return RunConfig(world, schedule, train, sampler, guidance, out, seed)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path} ({exc.strerror})", "config") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON ({exc})", "config") from exc
    return parse_config(d)
