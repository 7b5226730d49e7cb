"""Experiment configuration files (TOML) for the command-line runner."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
import sys

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import nets, problems
from .train import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class EvalSpec:
    grid: int = 101
    reference_nx: int | None = None
    r_values: list = field(default_factory=list)
    probe_points: list = field(default_factory=list)
    radial_points: int = 200

    def validate(self):
        if self.grid < 2:
            raise ConfigError("eval.grid", "need at least 2 points per side")
        if self.reference_nx is not None and (self.reference_nx < 65 or self.reference_nx % 2 == 0):
            raise ConfigError("eval.reference_nx", "must be odd and at least 65")
        for i, p in enumerate(self.probe_points):
            if len(p) != 2:
                raise ConfigError(f"eval.probe_points[{i}]", "probe points are (x1, x2) pairs")


@dataclass
class OutputSpec:
    dir: str = "runs/experiment"
    checkpoint_every: int = 0
    wall_clock: bool = True

    def validate(self):
        if self.checkpoint_every < 0:
            raise ConfigError("output.checkpoint_every", "must be >= 0 (0 disables)")


@dataclass
class ExperimentConfig:
    problem: str
    problem_params: dict
    network: dict
    train: TrainConfig
    eval: EvalSpec = field(default_factory=EvalSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    @property
    def seed(self):
        return self.train.seed

    # --- construction -------------------------------------------------
    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"seed", "problem", "network", "train", "eval", "output"}
        for key in d:
            if key not in known:
                raise ConfigError(key, f"unknown section or key; expected one of {sorted(known)}")

        prob = dict(d.get("problem") or {})
        name = prob.pop("name", None)
        if name is None:
            raise ConfigError("problem.name", "missing problem name")
        if name not in problems.PROBLEMS:
            raise ConfigError("problem.name", f"unknown problem {name!r}; "
                                              f"choose from {sorted(problems.PROBLEMS)}")
        allowed = problems.problem_parameters(name)
        for key in prob:
            if key not in allowed:
                raise ConfigError(f"problem.{key}", f"not a parameter of {name!r}; "
                                                    f"expected one of {sorted(allowed)}")

        train_d = dict(d.get("train") or {})
        if "seed" in d:
            if "seed" in train_d and train_d["seed"] != d["seed"]:
                raise ConfigError("seed", "conflicts with train.seed")
            train_d["seed"] = d["seed"]
        try:
            train = TrainConfig.from_dict(train_d)
        except (ValueError, TypeError) as exc:
            raise ConfigError("train", str(exc)) from None

        ev = _section(EvalSpec, d.get("eval") or {}, "eval")
        ev.validate()
        out = _section(OutputSpec, d.get("output") or {}, "output")
        out.validate()

        cfg = cls(name, prob, dict(d.get("network") or {}), train, ev, out)
        cfg.build_network()
        cfg._check_problem()
        return cfg

    def _check_problem(self):
        try:
            prob = self.build_problem()
        except (ValueError, TypeError) as exc:
            raise ConfigError("problem", str(exc)) from None
        spec = self.build_network()
        if spec.encoding != prob.encoding:
            raise ConfigError("network.encoding",
                              f"problem {self.problem!r} needs {prob.encoding!r} input encoding, "
                              f"network has {spec.encoding!r}")
        if prob.param_range is not None:
            lo, hi = prob.param_range
            for r in self.eval.r_values:
                if not lo <= r <= hi:
                    raise ConfigError("eval.r_values", f"{r} outside [{lo}, {hi}]")

    def build_problem(self):
        params = dict(self.problem_params)
        if self.problem == "interface":
            params.setdefault("dt", self.train.dt)
        return problems.make_problem(self.problem, **params)

    def build_network(self) -> nets.NetworkSpec:
        d = dict(self.network)
        preset = d.pop("preset", None)
        if preset is not None:
            if preset not in nets.PRESETS:
                raise ConfigError("network.preset", f"unknown preset {preset!r}; "
                                                    f"choose from {sorted(nets.PRESETS)}")
            base = nets.PRESETS[preset]().to_dict()
        else:
            if "kind" not in d or "dims" not in d:
                raise ConfigError("network", "give a preset or both kind and dims")
            base = {}
        explicit_in = "in_dim" in d
        base.update(d)
        if base.get("kind") == "resnet" and not explicit_in:
            base["in_dim"] = base.get("coord_dim", 2) + {"coords": 0, "onehot": 2, "param": 1}.get(
                base.get("encoding", "coords"), 0)
        try:
            return nets.NetworkSpec.from_dict(base)
        except (ValueError, TypeError) as exc:
            raise ConfigError("network", str(exc)) from None

    # --- serialization ------------------------------------------------
    def to_dict(self):
        train = self.train.to_dict()
        seed = train.pop("seed")
        ev = {f.name: getattr(self.eval, f.name) for f in fields(EvalSpec)}
        if ev["reference_nx"] is None:
            del ev["reference_nx"]
        return {
            "seed": seed,
            "problem": {"name": self.problem, **self.problem_params},
            "network": dict(self.network),
            "train": train,
            "eval": ev,
            "output": {f.name: getattr(self.output, f.name) for f in fields(OutputSpec)},
        }

    def dumps(self):
        return tomli_w.dumps(self.to_dict())


def _section(cls, d, prefix):
    names = {f.name for f in fields(cls)}
    for key in d:
        if key not in names:
            raise ConfigError(f"{prefix}.{key}", f"unknown key; expected one of {sorted(names)}")
    return cls(**d)


def loads(text):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"not valid TOML: {exc}") from None
    return ExperimentConfig.from_dict(data)


def load(path):
    with open(path, "rb") as f:
        raw = f.read()
    return loads(raw.decode("utf-8"))
