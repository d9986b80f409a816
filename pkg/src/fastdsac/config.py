"""Run configuration: sectioned JSON files, ``--set`` overrides, canonical dumps.

A config file is a JSON object with optional sections::

    {
      "env":    {"name": "pendulum", "max_episode_steps": 200},
      "run":    {"out_dir": "runs/pendulum"},
      "train":  {"total_steps": 25000, "lr_actor": 0.001},
      "dem":    {"tau": 1.0},
      "critic": {"kind": "continuous"}
    }

Keys other than ``env.name`` inside ``env`` are parameters of that
environment.  Override keys are either dotted (``train.batch_size``) or bare
field names that resolve to exactly one section (``batch_size``), plus a few
aliases for the ablation switches.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .actor import DEMConfig
from .critic import CriticConfig
from .envs import config_dict, env_config
from .errors import ConfigError
from .trainer import TrainConfig

SEED_ENV_VAR = "MAXENT_DSPI_SEED"

SECTIONS = ("env", "run", "train", "dem", "critic")

ALIASES = {
    "env": "env.name",
    "env_name": "env.name",
    "out_dir": "run.out_dir",
    "seed": "train.seed",
    "critic_kind": "critic.kind",
    "actor_kind": "train.actor_kind",
    "dem_enabled": "dem.dem_enabled",
}

_SECTION_TYPES = {"train": TrainConfig, "dem": DEMConfig, "critic": CriticConfig}


@dataclass(frozen=True)
class RunConfig:
    env: str = "pendulum"
    env_params: dict = field(default_factory=dict)
    out_dir: str = "runs/default"
    train: TrainConfig = field(default_factory=TrainConfig)
    dem: DEMConfig = field(default_factory=DEMConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)

    def env_config(self):
        return env_config(self.env, self.env_params)

    def to_dict(self) -> dict:
        env = {"name": self.env, **config_dict(self.env_config())}
        return {
            "env": env,
            "run": {"out_dir": self.out_dir},
            "train": _jsonable(asdict(self.train)),
            "dem": asdict(self.dem),
            "critic": asdict(self.critic),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def config_hash(self) -> str:
        return config_hash(self.to_dict())


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def parse_value(text: str):
    """JSON literal if it parses (numbers, booleans, lists), otherwise the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _field_index() -> dict[str, list[str]]:
    index: dict[str, list[str]] = {}
    for section, cls in _SECTION_TYPES.items():
        for f in fields(cls):
            index.setdefault(f.name, []).append(section)
    index.setdefault("out_dir", []).append("run")
    return index


def resolve_key(key: str) -> tuple[str, str]:
    """Map an override key to ``(section, field)``."""
    key = ALIASES.get(key, key)
    if "." in key:
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r} in key {key!r}")
        return section, name
    owners = _field_index().get(key, [])
    if not owners:
        raise ConfigError(f"unknown config key {key!r}")
    if len(owners) > 1:
        raise ConfigError(f"ambiguous key {key!r}; qualify it with one of {owners}")
    return owners[0], key


def parse_overrides(pairs) -> list[tuple[str, str, object]]:
    out = []
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, text = pair.split("=", 1)
        section, name = resolve_key(key.strip())
        out.append((section, name, parse_value(text.strip())))
    return out


def _check_section_keys(section: str, keys) -> None:
    if section in _SECTION_TYPES:
        known = {f.name for f in fields(_SECTION_TYPES[section])}
    elif section == "run":
        known = {"out_dir"}
    else:
        return  # env keys are checked once the env name is known
    unknown = set(keys) - known
    if unknown:
        raise ConfigError(f"unknown keys in section {section!r}: {sorted(unknown)}")


def build_config(raw: dict | None = None, overrides=(), environ=None) -> RunConfig:
    """Validate ``raw`` sections, apply the seed variable, then ``--set`` pairs.

    Precedence (highest first): overrides, ``MAXENT_DSPI_SEED``, file values.
    """
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for s in SECTIONS:
        value = raw.get(s, {})
        if not isinstance(value, dict):
            raise ConfigError(f"section {s!r} must be an object")
        _check_section_keys(s, value)
        sections[s] = dict(value)

    environ = os.environ if environ is None else environ
    if environ.get(SEED_ENV_VAR, "") != "":
        try:
            sections["train"]["seed"] = int(environ[SEED_ENV_VAR])
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from None

    for section, name, value in parse_overrides(overrides):
        _check_section_keys(section, [name])
        sections[section][name] = value

    env = dict(sections["env"])
    name = env.pop("name", "pendulum")
    try:
        train = TrainConfig(**sections["train"])
        dem = DEMConfig(**sections["dem"])
        critic = CriticConfig(**sections["critic"])
        env_cfg = env_config(name, env)
    except TypeError as exc:  # wrong value types reach the dataclass constructors
        raise ConfigError(str(exc)) from None
    # the two ablation switches describe the same thing; keep them consistent
    if train.actor_kind == "standard" or not dem.dem_enabled:
        train = replace(train, actor_kind="standard")
        dem = replace(dem, dem_enabled=False)
    out_dir = str(Path(sections["run"].get("out_dir", "runs/default")).expanduser().resolve())
    return RunConfig(name, config_dict(env_cfg), out_dir, train, dem, critic)


def load_config(path=None, overrides=(), environ=None) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return build_config(raw, overrides, environ)


def from_dict(cfg: dict) -> RunConfig:
    """Rebuild a RunConfig from :meth:`RunConfig.to_dict` output (no env var lookup)."""
    return build_config(cfg, (), environ={})
