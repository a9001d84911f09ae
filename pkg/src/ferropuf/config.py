"""Experiment configuration: TOML file with one table per subsystem.

Every key has a default, so an empty file (or no file) is a valid
configuration.  Unknown tables or keys and out-of-range values raise
:class:`ConfigError` before any computation starts; messages name the
offending key and, when it can be located, its line in the file.
"""
from __future__ import annotations

import dataclasses
import json
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .attack import FEATURE_KINDS, RpropConfig
from .device import SIZE_PROFILES, DeviceParams
from .errors import ConfigError
from .puf import PufSetup, WriteConfig
from .rng import MAX_SEED

ENV_SEED = "FERROPUF_SEED"
ENV_OUT = "FERROPUF_OUT"


@dataclass
class DeviceSection:
    vth_erased: float = 1.6
    vth_programmed: float = 0.2
    weak_mean_base: float = 0.7
    amplitude_slope: float = 0.375
    temp_slope: float = 0.002
    sigma_d2d: float = 0.20
    sigma_c2c: float = 0.05
    read_slope: float = 0.1
    weak_range: list = field(default_factory=lambda: [2.8, 3.6])
    pulse_amplitude: float = 2.8
    temperature: float = 25.0
    size_profile: str = "500x500"


@dataclass
class ArraySection:
    n: int = 27
    m: int = 1
    sigma_c: float = 0.01
    offset_rel: float = 0.005
    vdd: float = 0.5
    read_gate: float = 0.9


@dataclass
class ExperimentSection:
    challenges: int = 100
    registrations: int = 100
    register_runs: int = 10
    reconfigurations: int = 10
    repeats: int = 1000
    instances: int = 100
    flip_challenges: int = 1000


@dataclass
class SweepSection:
    pulses: list = field(default_factory=lambda: [2.8, 3.2, 3.6])
    temperatures: list = field(default_factory=lambda: [25.0, 55.0, 85.0])
    sizes: list = field(default_factory=lambda: ["500x500", "200x200", "200x100"])
    sigma_cs: list = field(default_factory=lambda: [0.0, 0.01, 0.02, 0.05])
    challenge_lengths: list = field(default_factory=lambda: [17, 27, 41, 65])


@dataclass
class AttackSection:
    targets: list = field(default_factory=lambda: ["proposed", "arbiter"])
    n: int = 27
    ks: list = field(default_factory=lambda: [1, 2, 3])
    train_sizes: list = field(default_factory=lambda: [50, 100, 200, 400, 800, 1600, 3200, 6400])
    trials: int = 2
    test_size: int = 10_000
    lengths: list = field(default_factory=list)
    workers: int = 1
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    delta_init: float = 0.1
    delta_min: float = 1e-6
    delta_max: float = 50.0
    max_epochs: int = 2000
    patience: int = 50
    restarts: int = 10


@dataclass
class CrpsSection:
    kind: str = "proposed"
    n: int = 27
    k: int = 1
    count: int = 10_000


SECTIONS = {
    "device": DeviceSection,
    "array": ArraySection,
    "experiment": ExperimentSection,
    "sweep": SweepSection,
    "attack": AttackSection,
    "crps": CrpsSection,
}


@dataclass
class ExperimentConfig:
    seed: int = 1
    device: DeviceSection = field(default_factory=DeviceSection)
    array: ArraySection = field(default_factory=ArraySection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    attack: AttackSection = field(default_factory=AttackSection)
    crps: CrpsSection = field(default_factory=CrpsSection)

    # --- derived objects -------------------------------------------------
    def device_params(self) -> DeviceParams:
        d = self.device
        params = DeviceParams(
            vth_erased=d.vth_erased,
            vth_programmed=d.vth_programmed,
            weak_mean_base=d.weak_mean_base,
            amplitude_slope=d.amplitude_slope,
            temp_slope=d.temp_slope,
            sigma_d2d=d.sigma_d2d,
            sigma_c2c=d.sigma_c2c,
            read_slope=d.read_slope,
            weak_range=tuple(d.weak_range),
        )
        return params.with_size_profile(d.size_profile)

    def puf_setup(self) -> PufSetup:
        a = self.array
        return PufSetup(
            params=self.device_params(),
            write=WriteConfig(self.device.pulse_amplitude, self.device.temperature),
            sigma_c=a.sigma_c,
            offset_rel=a.offset_rel,
            vdd=a.vdd,
            read_gate=a.read_gate,
        )

    def rprop(self) -> RpropConfig:
        a = self.attack
        return RpropConfig(a.eta_plus, a.eta_minus, a.delta_init, a.delta_min, a.delta_max,
                           a.max_epochs, a.patience, a.restarts)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        """Copy with some keys of one section changed (revalidated)."""
        new = from_dict(self.to_dict())
        setattr(new, section, dataclasses.replace(getattr(new, section), **changes))
        validate(new)
        return new


# ------------------------------------------------------------------ loading


def _locate(text: str | None, section: str | None, key: str) -> str:
    if not text:
        return ""
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        head = re.match(r"^\s*\[\s*([^\]]+?)\s*\]", line)
        if head:
            current = head[1]
            if section and key == section and current == section:
                return f" (line {lineno})"
            continue
        if current == section and re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return f" (line {lineno})"
    return ""


def _coerce(value, default, where: str):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{where}: expected {type(default).__name__}, got {value!r}")
    return value


def from_dict(data: dict, text: str | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for name, value in data.items():
        if name == "seed":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"seed: expected integer, got {value!r}{_locate(text, None, 'seed')}")
            cfg.seed = value
            continue
        if name not in SECTIONS:
            raise ConfigError(f"unknown section or key {name!r}{_locate(text, name, name)}")
        if not isinstance(value, dict):
            raise ConfigError(f"{name!r} must be a table")
        section = getattr(cfg, name)
        known = {f.name: f for f in dataclasses.fields(section)}
        for key, v in value.items():
            where = f"{name}.{key}{_locate(text, name, key)}"
            if key not in known:
                raise ConfigError(f"unknown key {where}")
            setattr(section, key, _coerce(v, getattr(section, key), where))
    validate(cfg, text)
    return cfg


def _check(cond: bool, section: str, key: str, msg: str, text=None) -> None:
    if not cond:
        raise ConfigError(f"{section}.{key}{_locate(text, section, key)}: {msg}")


def validate(cfg: ExperimentConfig, text: str | None = None) -> None:
    c = lambda cond, sec, key, msg: _check(cond, sec, key, msg, text)  # noqa: E731
    c(0 <= cfg.seed <= MAX_SEED, "config", "seed", "must be an unsigned 64-bit integer")
    d = cfg.device
    c(d.size_profile in SIZE_PROFILES, "device", "size_profile",
      f"must be one of {sorted(SIZE_PROFILES)}")
    c(len(d.weak_range) == 2, "device", "weak_range", "must be [low, high]")
    try:
        params = cfg.device_params()
    except ConfigError as exc:
        raise ConfigError(f"device: {exc}") from None
    lo, hi = params.weak_range
    c(lo <= d.pulse_amplitude <= hi, "device", "pulse_amplitude", f"must lie in [{lo}, {hi}] V")
    a = cfg.array
    c(a.n >= 1, "array", "n", "must be >= 1")
    c(a.m >= 1, "array", "m", "must be >= 1")
    c(a.sigma_c >= 0, "array", "sigma_c", "must be >= 0")
    c(a.offset_rel >= 0, "array", "offset_rel", "must be >= 0")
    c(a.vdd > 0, "array", "vdd", "must be > 0")
    e = cfg.experiment
    c(e.challenges >= 1, "experiment", "challenges", "must be >= 1")
    c(e.registrations >= 2, "experiment", "registrations", "must be >= 2")
    c(e.register_runs >= 1, "experiment", "register_runs", "must be >= 1")
    c(e.reconfigurations >= 2, "experiment", "reconfigurations", "must be >= 2")
    c(e.repeats >= 1, "experiment", "repeats", "must be >= 1")
    c(e.instances >= 2, "experiment", "instances", "must be >= 2")
    c(e.flip_challenges >= 1, "experiment", "flip_challenges", "must be >= 1")
    s = cfg.sweep
    for key in ("pulses", "temperatures", "sizes", "sigma_cs", "challenge_lengths"):
        c(len(getattr(s, key)) > 0, "sweep", key, "must be nonempty")
    c(all(lo <= p <= hi for p in s.pulses), "sweep", "pulses", f"values must lie in [{lo}, {hi}] V")
    c(all(z in SIZE_PROFILES for z in s.sizes), "sweep", "sizes",
      f"values must be in {sorted(SIZE_PROFILES)}")
    c(all(x >= 0 for x in s.sigma_cs), "sweep", "sigma_cs", "values must be >= 0")
    c(all(isinstance(x, int) and x >= 1 for x in s.challenge_lengths), "sweep",
      "challenge_lengths", "values must be integers >= 1")
    t = cfg.attack
    c(len(t.targets) > 0 and all(x in FEATURE_KINDS for x in t.targets), "attack", "targets",
      f"must be a nonempty subset of {list(FEATURE_KINDS)}")
    c(t.n >= 1, "attack", "n", "must be >= 1")
    c(len(t.ks) > 0 and all(isinstance(k, int) and k >= 1 for k in t.ks), "attack", "ks",
      "must be a nonempty list of integers >= 1")
    c(len(t.train_sizes) > 0 and all(isinstance(x, int) and x >= 1 for x in t.train_sizes),
      "attack", "train_sizes", "must be a nonempty list of integers >= 1")
    c(all(isinstance(x, int) and x >= 1 for x in t.lengths), "attack", "lengths",
      "values must be integers >= 1")
    c(t.trials >= 1, "attack", "trials", "must be >= 1")
    c(t.test_size >= 1, "attack", "test_size", "must be >= 1")
    c(t.workers >= 1, "attack", "workers", "must be >= 1")
    try:
        cfg.rprop()
    except ConfigError as exc:
        raise ConfigError(f"attack: {exc}") from None
    r = cfg.crps
    c(r.kind in FEATURE_KINDS, "crps", "kind", f"must be one of {list(FEATURE_KINDS)}")
    c(r.n >= 1, "crps", "n", "must be >= 1")
    c(r.k >= 1, "crps", "k", "must be >= 1")
    c(r.count >= 1, "crps", "count", "must be >= 1")


def loads(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error: {exc}") from None
    return from_dict(data, text)


def _load_manifest(text: str) -> ExperimentConfig:
    # a run manifest embeds the full config snapshot (seed included)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest syntax error: {exc}") from None
    if not isinstance(data, dict) or not isinstance(data.get("config"), dict):
        raise ConfigError("JSON config must be a run manifest with a 'config' object")
    return from_dict(data["config"])


def load(path) -> ExperimentConfig:
    """Load a TOML config, or the config snapshot of a ``manifest.json``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            return _load_manifest(text)
        return loads(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def resolve_seed(cfg: ExperimentConfig, cli_seed: int | None) -> int:
    """CLI flag, then the environment, then the config file."""
    if cli_seed is not None:
        seed = cli_seed
    elif os.environ.get(ENV_SEED):
        try:
            seed = int(os.environ[ENV_SEED])
        except ValueError:
            raise ConfigError(f"{ENV_SEED} must be an integer") from None
    else:
        seed = cfg.seed
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def resolve_out(cli_out: str | None) -> Path:
    return Path(cli_out or os.environ.get(ENV_OUT) or "ferropuf-out")
