"""Federated averaging: broadcast, local updates, uniform parameter mean."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import models
from .datagen import Dataset
from .errors import AggregationError, ConfigError, ParticipantError, SessionError
from .models import OptimizerConfig, ParamVector

AgentId = tuple[int, int]


@dataclass(frozen=True)
class FederationConfig:
    """How agents train locally within one communication round.

    ``literal=True`` replaces the local optimizer by a single full-batch
    gradient step ``w - lr * grad``.
    """

    opt: OptimizerConfig = field(default_factory=OptimizerConfig)
    local_epochs: int = 1
    literal: bool = False
    baseline_epochs: int = 10
    track_agents: bool = False
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.local_epochs < 0:
            raise ConfigError(f"local_epochs must be >= 0, got {self.local_epochs}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def local_optimizer(self) -> OptimizerConfig:
        if self.literal:
            return OptimizerConfig(kind="sgd", lr=self.opt.lr, batch_size=None)
        return self.opt

    def local_epoch_count(self) -> int:
        return 1 if self.literal else self.local_epochs

    def to_dict(self) -> dict:
        return {"opt": self.opt.to_dict(), "local_epochs": self.local_epochs, "literal": self.literal,
                "baseline_epochs": self.baseline_epochs, "track_agents": self.track_agents,
                "workers": self.workers, "seed": self.seed}


@dataclass(frozen=True)
class ParticipantSet:
    """Agents of one session with the indices each trains on."""

    data: Dataset
    members: tuple  # of (agent id, index array)

    def __post_init__(self):
        members = tuple((tuple(a), np.asarray(idx, dtype=np.int64)) for a, idx in self.members)
        ids = [a for a, _ in members]
        if any(a >= b for a, b in zip(ids, ids[1:])):
            raise ConfigError("participants must be strictly ordered by (level, agent) with no duplicates")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_mapping(cls, data: Dataset, mapping: Mapping) -> "ParticipantSet":
        return cls(data, tuple(sorted(mapping.items())))

    def __len__(self) -> int:
        return len(self.members)

    @property
    def ids(self) -> list[AgentId]:
        return [a for a, _ in self.members]

    def local(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.members[k][1]
        return self.data.features[idx], self.data.labels[idx]

    @property
    def data_count(self) -> int:
        return sum(len(idx) for _, idx in self.members)


@dataclass
class RoundMetrics:
    round: int
    agent_losses: dict
    accuracy: float
    duration: float
    agent_accuracies: dict | None = None

    def to_record(self, level: int | None = None) -> dict:
        rec = {"round": self.round, "accuracy": self.accuracy,
               "agent_losses": self.agent_losses, "duration": self.duration}
        if level is not None:
            rec = {"level": level, **rec}
        if self.agent_accuracies is not None:
            rec["agent_accuracies"] = self.agent_accuracies
        return rec


def agent_seed(run_seed: int, round_index: int, level: int, agent: AgentId) -> np.random.SeedSequence:
    """Per-agent seed, a pure function of its coordinates in the run."""
    return np.random.SeedSequence([int(run_seed), int(round_index), int(level), int(agent[0]), int(agent[1])])


def _agent_key(agent: AgentId) -> str:
    return f"{agent[0]},{agent[1]}"


def agent_update(w: ParamVector, x, y, epochs: int, opt: OptimizerConfig, seed) -> ParamVector:
    """Local training from the broadcast parameters ``w``."""
    return _local_update(w, x, y, epochs, opt, seed)[0]


def _local_update(w, x, y, epochs, opt, seed):
    if len(y) == 0:
        raise ParticipantError("agent has no local data")
    if epochs == 0:
        return w, float("nan")
    rng = np.random.default_rng(seed)
    out, history = models.train(w, x, y, epochs, opt, rng)
    return out, history[-1]


def aggregate(updates) -> ParamVector:
    """Coordinate-wise mean of parameter vectors.

    ``updates`` is a mapping from agent id to vector, or a plain sequence.
    Summation runs in ascending agent order (or ascending byte order for a
    plain sequence) so the result does not depend on input order.
    """
    if isinstance(updates, Mapping):
        ordered = [updates[k] for k in sorted(updates)]
    else:
        ordered = sorted(updates, key=lambda p: p.values.tobytes())
    if not ordered:
        raise AggregationError("nothing to aggregate")
    arch = ordered[0].arch
    for p in ordered[1:]:
        if p.arch != arch:
            raise AggregationError(f"cannot average {arch.name} with {p.arch.name}")
    first = ordered[0].values
    if all(np.array_equal(p.values, first) for p in ordered[1:]):
        # n * x / n can differ from x in the last bit; identical inputs stay put
        return ParamVector(first, arch)
    total = np.zeros(arch.n_params)
    for p in ordered:
        total += p.values
    return ParamVector(total / len(ordered), arch)


def _run_round(w, participants, cfg, t, level, pool):
    opt = cfg.local_optimizer()
    epochs = cfg.local_epoch_count()

    def work(k):
        agent = participants.members[k][0]
        x, y = participants.local(k)
        try:
            return _local_update(w, x, y, epochs, opt, agent_seed(cfg.seed, t, level, agent))
        except Exception as exc:
            raise ParticipantError(f"agent {agent}: {exc}") from exc

    ks = range(len(participants))
    results = list(pool.map(work, ks)) if pool else [work(k) for k in ks]
    return {participants.members[k][0]: r for k, r in zip(ks, results)}


def run_federation(init: ParamVector, participants: ParticipantSet, rounds: int, test: Dataset,
                   cfg: FederationConfig | None = None, level: int = 0,
                   on_round: Callable[[RoundMetrics], None] | None = None
                   ) -> tuple[ParamVector, list[RoundMetrics]]:
    """Run ``rounds`` communication rounds starting from ``init``."""
    cfg = cfg or FederationConfig()
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}")
    if len(participants) == 0:
        raise ConfigError("no participants")
    w = init
    metrics = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for t in range(1, rounds + 1):
            start = time.perf_counter()
            try:
                results = _run_round(w, participants, cfg, t, level, pool)
                w = aggregate({a: r[0] for a, r in results.items()})
            except (ParticipantError, AggregationError) as exc:
                raise SessionError(f"round {t}: {exc}", round_index=t, level=level) from exc
            agent_acc = None
            if cfg.track_agents:
                agent_acc = {_agent_key(a): models.score(r[0], test) for a, r in results.items()}
            m = RoundMetrics(
                round=t,
                agent_losses={_agent_key(a): r[1] for a, r in results.items()},
                accuracy=models.score(w, test),
                duration=time.perf_counter() - start,
                agent_accuracies=agent_acc,
            )
            metrics.append(m)
            if on_round is not None:
                on_round(m)
    finally:
        if pool is not None:
            pool.shutdown()
    return w, metrics


def local_baseline(participants: ParticipantSet, init: ParamVector, cfg: FederationConfig,
                   test: Dataset, level: int = 0) -> dict:
    """Accuracy of each agent training alone from ``init`` (no federation)."""
    out = {}
    for k, (agent, _) in enumerate(participants.members):
        x, y = participants.local(k)
        p = agent_update(init, x, y, cfg.baseline_epochs, cfg.opt, agent_seed(cfg.seed, 0, level, agent))
        out[agent] = models.score(p, test)
    return out


def write_round_records(path, metrics: Sequence[RoundMetrics], level: int | None = None) -> None:
    """Append one JSON object per round to a newline-delimited file."""
    with open(path, "a") as f:
        for m in metrics:
            f.write(json.dumps(m.to_record(level), sort_keys=True) + "\n")
