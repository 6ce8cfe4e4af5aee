"""TOML experiment configs: parsing, validation, overrides, and builders.

A config is strict: it must declare ``schema = 1``, and unknown sections or
keys are rejected rather than ignored, so typos fail loudly. Maps referenced
by bare name resolve to files bundled with the package; anything with a path
separator or a ``.map`` suffix is read from the filesystem relative to the
config file.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python 3.10
    import tomli as tomllib

from .env import MonitorEnv, RewardConfig
from .errors import ConfigError, GridPatrolError
from .gridworld import GridMap, load_map
from .qnet import NetArch
from .trainer import TrainConfig
from .uncertainty import SCENARIOS

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EnvSettings:
    scenario: str = "staleness"
    n_agents: int = 2
    alpha: float = 0.01
    sense_radius: float = 90.0
    sync_period: int = 4
    init_mode: str = "random"  # "blank" starts with no events / all clocks at 0


@dataclass(frozen=True)
class EvalSettings:
    episodes: int = 1  # episodes per held-out seed
    steps: int = 300
    n_seeds: int = 20
    seed_base: int = 10_000  # held-out seeds start here, clear of training seeds


@dataclass
class ExperimentConfig:
    map_name: str
    grid: GridMap
    env: EnvSettings
    reward: RewardConfig
    arch: NetArch
    train: TrainConfig
    eval: EvalSettings

    def make_env(self, seed: int, **replace_env) -> MonitorEnv:
        s = self.env
        kwargs = dict(
            scenario=s.scenario,
            n_agents=s.n_agents,
            alpha=s.alpha,
            sense_radius=s.sense_radius,
            sync_period=s.sync_period,
            init_mode=s.init_mode,
        )
        kwargs.update(replace_env)
        return MonitorEnv(self.grid, reward=self.reward, seed=seed, **kwargs)

    def eval_seeds(self) -> list[int]:
        return [self.eval.seed_base + i for i in range(self.eval.n_seeds)]


def resolve_map(name: str, base_dir: str = ".") -> tuple[str, str]:
    """Return (map name, map text). Bare names come from the bundled set."""
    if os.sep in name or name.endswith(".map"):
        path = name if os.path.isabs(name) else os.path.join(base_dir, name)
        if not os.path.exists(path):
            raise ConfigError(f"map file not found: {path}")
        with open(path) as fh:
            return os.path.basename(path), fh.read()
    try:
        text = (resources.files("gridpatrol") / "maps" / f"{name}.map").read_text()
    except FileNotFoundError:
        raise ConfigError(f"no bundled map named {name!r}") from None
    return name, text


def parse_override(spec: str) -> tuple[list[str], object]:
    """``section.key=value`` with the value parsed as a TOML literal."""
    if "=" not in spec:
        raise ConfigError(f"override {spec!r} is not of the form key=value")
    path, _, raw = spec.partition("=")
    keys = [k.strip() for k in path.split(".")]
    if not all(keys):
        raise ConfigError(f"override {spec!r} has an empty key component")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw  # bare string
    return keys, value


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    for spec in overrides:
        keys, value = parse_override(spec)
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {spec!r} descends into a non-table")
        node[keys[-1]] = value
    return data


def _section(data: dict, name: str, allowed: set[str]) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = sorted(set(sec) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(unknown)}")
    return sec


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def config_from_dict(data: dict, base_dir: str = ".") -> ExperimentConfig:
    top_allowed = {"schema", "map", "env", "reward", "net", "train", "eval"}
    unknown = sorted(set(data) - top_allowed)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    _expect("schema" in data, "config must declare schema")
    _expect(data["schema"] == SCHEMA_VERSION,
            f"unsupported schema {data['schema']!r}, expected {SCHEMA_VERSION}")

    map_sec = _section(data, "map", {"file"})
    _expect("file" in map_sec, "[map] must name a file")
    map_name, map_text = resolve_map(str(map_sec["file"]), base_dir)
    try:
        grid = load_map(map_text)
    except GridPatrolError as exc:
        raise ConfigError(f"bad map {map_name}: {exc}") from exc

    env_sec = _section(
        data, "env",
        {"scenario", "n_agents", "alpha", "sense_radius", "sync_period",
         "init_mode"},
    )
    env = EnvSettings(
        scenario=str(env_sec.get("scenario", "staleness")),
        n_agents=int(env_sec.get("n_agents", 2)),
        alpha=float(env_sec.get("alpha", 0.01)),
        sense_radius=float(env_sec.get("sense_radius", 90.0)),
        sync_period=int(env_sec.get("sync_period", 4)),
        init_mode=str(env_sec.get("init_mode", "random")),
    )
    _expect(env.scenario in SCENARIOS, f"scenario must be one of {SCENARIOS}")
    _expect(env.n_agents >= 1, "env.n_agents must be at least 1")
    _expect(env.alpha >= 0, "env.alpha must be non-negative")
    _expect(env.sense_radius > 0, "env.sense_radius must be positive")
    _expect(env.sync_period >= 1, "env.sync_period must be at least 1")
    _expect(env.init_mode in ("random", "blank"),
            "env.init_mode must be 'random' or 'blank'")

    rew_sec = _section(data, "reward", {"r_collision", "r_novel", "lam"})
    reward = RewardConfig(
        r_collision=float(rew_sec.get("r_collision", -20.0)),
        r_novel=float(rew_sec.get("r_novel", 1.0)),
        lam=float(rew_sec.get("lam", 5.0)),
    )

    net_sec = _section(data, "net", {"conv", "fc_hidden"})
    conv_raw = net_sec.get("conv", [[16, 4, 2], [32, 4, 2]])
    _expect(
        isinstance(conv_raw, list)
        and all(isinstance(l, list) and len(l) == 3 for l in conv_raw),
        "net.conv must be a list of [channels, kernel, stride] triples",
    )
    arch = NetArch(
        in_channels=3,
        in_size=grid.size,
        conv=tuple(tuple(int(v) for v in layer) for layer in conv_raw),
        fc_hidden=int(net_sec.get("fc_hidden", 64)),
    )
    try:
        arch.conv_dims()
    except GridPatrolError as exc:
        raise ConfigError(f"net does not fit the map: {exc}") from exc

    train_sec = _section(
        data, "train",
        {"episodes", "steps_per_episode", "batch_size", "gamma", "lr",
         "replay_capacity", "target_refresh", "eps_start", "eps_end"},
    )
    train = TrainConfig(
        episodes=int(train_sec.get("episodes", 500)),
        steps_per_episode=int(train_sec.get("steps_per_episode", 1000)),
        batch_size=int(train_sec.get("batch_size", 128)),
        gamma=float(train_sec.get("gamma", 0.99)),
        lr=float(train_sec.get("lr", 1e-3)),
        replay_capacity=int(train_sec.get("replay_capacity", 100_000)),
        target_refresh=int(train_sec.get("target_refresh", 5)),
        eps_start=float(train_sec.get("eps_start", 0.5)),
        eps_end=float(train_sec.get("eps_end", 0.05)),
    )
    try:
        train.validate()
    except GridPatrolError as exc:
        raise ConfigError(f"bad [train] section: {exc}") from exc

    eval_sec = _section(data, "eval", {"episodes", "steps", "n_seeds", "seed_base"})
    ev = EvalSettings(
        episodes=int(eval_sec.get("episodes", 1)),
        steps=int(eval_sec.get("steps", 300)),
        n_seeds=int(eval_sec.get("n_seeds", 20)),
        seed_base=int(eval_sec.get("seed_base", 10_000)),
    )
    _expect(ev.episodes >= 1 and ev.steps >= 1 and ev.n_seeds >= 1,
            "[eval] counts must be positive")

    return ExperimentConfig(
        map_name=map_name, grid=grid, env=env, reward=reward,
        arch=arch, train=train, eval=ev,
    )


def load_config(path: str, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))
