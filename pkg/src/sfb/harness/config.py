"""Experiment configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..envs import make_env
from ..errors import ContractViolation
from ..fb.train import TrainConfig
from ..inference import MEASURE_KINDS, SearchConfig
from ..mdp import MAX_SA_PAIRS
from ..objectives import objective_from_spec

ALGORITHMS = ("fb_hard", "sfb_soft")
REGIMES = ("exact", "learned")


@dataclass(frozen=True)
class DatasetConfig:
    n_steps: int = 100_000
    episode_len: int = 4

    def __post_init__(self):
        if self.n_steps < 1 or self.episode_len < 1:
            raise ContractViolation("dataset n_steps and episode_len must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one results table.

    ``train`` holds :class:`TrainConfig` overrides; its ``mode`` and ``seed``
    are set from ``algorithm`` and each entry of ``seeds``.
    """

    env: str
    algorithm: str
    regime: str
    objectives: tuple
    measure_kind: str
    seeds: tuple
    out_dir: str
    search: SearchConfig = field(default_factory=SearchConfig)
    dim: int = 8
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(self.objectives))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.algorithm not in ALGORITHMS:
            raise ContractViolation(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.regime not in REGIMES:
            raise ContractViolation(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.measure_kind not in MEASURE_KINDS:
            raise ContractViolation(f"measure_kind must be one of {MEASURE_KINDS}")
        if not self.seeds:
            raise ContractViolation("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ContractViolation("seeds must be distinct")
        if not self.objectives:
            raise ContractViolation("objectives must be nonempty")
        if self.dim < 1 or self.workers < 1:
            raise ContractViolation("dim and workers must be positive")
        env = make_env(self.env)
        for spec in self.objectives:
            objective_from_spec(spec, env)
        if self.regime == "exact" and env.mdp.n_pairs > MAX_SA_PAIRS:
            raise ContractViolation(f"exact regime needs at most {MAX_SA_PAIRS} state-action pairs; "
                                    f"{self.env} has {env.mdp.n_pairs}")
        self.train_config(0)

    @property
    def mode(self) -> str:
        return "hard" if self.algorithm == "fb_hard" else "soft"

    @property
    def sampler(self) -> str:
        return "sphere_uniform" if self.algorithm == "fb_hard" else "ball_uniform"

    def train_config(self, seed: int) -> TrainConfig:
        known = {f.name for f in fields(TrainConfig)} - {"mode", "seed"}
        unknown = set(self.train) - known
        if unknown:
            raise ContractViolation(f"unknown train settings: {sorted(unknown)}")
        return TrainConfig(**self.train, mode=self.mode, seed=seed)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["objectives"] = list(self.objectives)
        out["seeds"] = list(self.seeds)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ContractViolation(f"unknown config keys: {sorted(unknown)}")
        try:
            if "search" in data:
                data["search"] = SearchConfig(**data["search"])
            if "dataset" in data:
                data["dataset"] = DatasetConfig(**data["dataset"])
            return cls(**data)
        except TypeError as exc:
            raise ContractViolation(f"invalid config: {exc}") from None


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ContractViolation(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_dict(data)
