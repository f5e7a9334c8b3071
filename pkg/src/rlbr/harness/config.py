"""Experiment configuration: YAML in, validated dataclass out; unknown keys are errors."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .. import envlab as el
from ..agent import LoopConfig, SacConfig
from ..baselines import RedistributorKind
from ..rbt import RBTConfig

TRAJECTORY_ALIAS = 9999
LEARNERS = ("qlearning", "sac")
QLEARNING_KEYS = {"lr", "gamma", "eps_start", "eps_end", "eps_fraction"}


class ConfigError(ValueError):
    pass


def parse_regime(value) -> dict:
    """Bag regime from an int (fixed length), "trajectory"/9999, or a mapping with ``kind``."""
    if isinstance(value, bool):
        raise ConfigError(f"invalid bag regime {value!r}")
    if isinstance(value, int) or (isinstance(value, str) and value.strip().isdigit()):
        n = int(value)
        if n == TRAJECTORY_ALIAS:
            return {"kind": "trajectory"}
        if n < 1:
            raise ConfigError("bag length must be >= 1")
        return {"kind": "fixed", "length": n}
    if value == "trajectory":
        return {"kind": "trajectory"}
    if not isinstance(value, dict):
        raise ConfigError(f"invalid bag regime {value!r}")
    kind = value.get("kind")
    allowed = {"fixed": {"kind", "length"}, "trajectory": {"kind"},
               "arbitrary": {"kind", "len_range", "interval_range"}}
    if kind not in allowed:
        raise ConfigError(f"unknown bag regime kind {kind!r}")
    extra = set(value) - allowed[kind]
    if extra:
        raise ConfigError(f"unknown keys for {kind} regime: {sorted(extra)}")
    missing = allowed[kind] - set(value)
    if missing:
        raise ConfigError(f"missing keys for {kind} regime: {sorted(missing)}")
    if kind == "fixed":
        return parse_regime(int(value["length"]))
    if kind == "arbitrary":
        lr, ir = list(value["len_range"]), list(value["interval_range"])
        if len(lr) != 2 or len(ir) != 2 or not 1 <= lr[0] <= lr[1] or not 1 <= ir[0] <= ir[1]:
            raise ConfigError("len_range and interval_range must be [lo, hi] with 1 <= lo <= hi")
        return {"kind": "arbitrary", "len_range": lr, "interval_range": ir}
    return {"kind": "trajectory"}


def regime_label(regime: dict) -> str:
    if regime["kind"] == "fixed":
        return str(regime["length"])
    if regime["kind"] == "trajectory":
        return str(TRAJECTORY_ALIAS)
    return "arbitrary"


def _check_keys(section: str, given: dict, allowed) -> None:
    extra = set(given) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {section}: {sorted(extra)}")


def _field_names(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


@dataclass
class ExperimentConfig:
    env: str = "gridworld"
    horizon: int | None = None
    regime: dict = field(default_factory=lambda: {"kind": "fixed", "length": 25})
    redistributor: str = "rbt"
    learner: str | None = None
    rbt: dict = field(default_factory=dict)
    loop: dict = field(default_factory=dict)
    learner_params: dict = field(default_factory=dict)
    rrd_k: int | None = None
    seeds: list = field(default_factory=lambda: [0])
    total_steps: int = 30_000
    eval_interval: int = 5_000
    eval_episodes: int = 1
    output_dir: str = "runs"
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    # -------------------------------------------------------------- validation

    def validate(self) -> None:
        try:
            env = el.make_env(self.env, self.horizon)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.regime = parse_regime(self.regime)
        try:
            RedistributorKind.parse(self.redistributor)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.learner is None:
            self.learner = "qlearning" if env.discrete else "sac"
        if self.learner not in LEARNERS:
            raise ConfigError(f"unknown learner {self.learner!r}; expected one of {LEARNERS}")
        if (self.learner == "qlearning") != bool(env.discrete):
            raise ConfigError(f"learner {self.learner} does not match env {self.env}")
        _check_keys("rbt", self.rbt, _field_names(RBTConfig))
        _check_keys("loop", self.loop, _field_names(LoopConfig) - {"total_steps", "eval_interval", "eval_episodes"})
        allowed = QLEARNING_KEYS if self.learner == "qlearning" else _field_names(SacConfig)
        _check_keys("learner_params", self.learner_params, allowed)
        if not self.seeds or not all(isinstance(s, int) and s >= 0 for s in self.seeds):
            raise ConfigError("seeds must be a nonempty list of non-negative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        for name in ("total_steps", "eval_interval", "eval_episodes"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.rrd_k is not None and self.rrd_k < 1:
            raise ConfigError("rrd_k must be >= 1")
        _check_keys("sweep", self.sweep, {"lengths", "methods"})
        for name in ("lengths", "methods"):
            if name in self.sweep and not self.sweep[name]:
                raise ConfigError(f"sweep.{name} must be nonempty")
        # constructing these surfaces their own range checks before any run starts
        try:
            self.rbt_config()
            self.loop_config()
            if self.learner == "sac":
                SacConfig(**self.learner_params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    # -------------------------------------------------------------- derived objects

    def make_env(self):
        return el.make_env(self.env, self.horizon)

    def rbt_config(self) -> RBTConfig:
        """Desk reward-model settings plus overrides; windows and relabel chunks are widened
        to hold one bag when the fixed bag length exceeds them."""
        cfg = RBTConfig.desk(**self.rbt)
        if self.regime["kind"] == "fixed":
            need = self.regime["length"]
        elif self.regime["kind"] == "trajectory":
            need = self.make_env().horizon
        else:
            need = self.regime["len_range"][1]
        if need > cfg.seq_len and "seq_len" not in self.rbt:
            cfg = cfg.replace(seq_len=need)
        if need > cfg.relabel_len and "relabel_len" not in self.rbt:
            cfg = cfg.replace(relabel_len=need)
        return cfg

    def loop_config(self) -> LoopConfig:
        base = dict(DESK_LOOP)
        base.update(self.loop)
        return LoopConfig(total_steps=self.total_steps, eval_interval=self.eval_interval,
                          eval_episodes=self.eval_episodes, **base)

    def learner_kwargs(self) -> dict:
        base = dict(DESK_QLEARNING) if self.learner == "qlearning" else {}
        base.update(self.learner_params)
        return base

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# Reward-model rounds need at least this many new steps and are capped in size, which keeps
# the cost proportional to steps rather than to the number of (possibly very short) episodes.
DESK_LOOP = {"round_min_steps": 2500, "max_iters_per_round": 150}
# A smaller discount keeps small relabeling errors from being amplified into reward loops.
DESK_QLEARNING = {"gamma": 0.9}


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    return config_from_dict(data or {}, source=str(path))


def config_from_dict(data: dict, source: str = "<dict>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    _check_keys(source, data, _field_names(ExperimentConfig))
    data = dict(data)
    if "regime" in data:
        data["regime"] = parse_regime(data["regime"])
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
