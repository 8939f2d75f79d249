"""Hierarchically fair federated learning.

One federation session per contribution level, run from the lowest level up.
The level-``l`` session is warm-started from the level ``l - 1`` model and
involves every agent at level ``l`` or above, each training on its
``m_l``-sized subset.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import models
from .datagen import Dataset, LevelSubsample, Partition
from .errors import ConfigError, HfflError, PromotionError, SessionError
from .federation import FederationConfig, ParticipantSet, RoundMetrics, run_federation
from .levels import LevelConfig
from .models import ArchSpec, ParamVector

log = logging.getLogger(__name__)

__all__ = [
    "LevelConfig", "LevelReport", "HfflPlusReport", "participants_for_level",
    "run_hffl", "run_hffl_plus", "promote", "write_checkpoints",
]


@dataclass
class LevelReport:
    level: int
    params: ParamVector
    score: float
    active_data: int
    cumulative_data: int
    warm_start_from: int
    rounds: list[RoundMetrics]
    initial: ParamVector

    def summary(self) -> dict:
        return {"level": self.level, "score": self.score, "active_data": self.active_data,
                "cumulative_data": self.cumulative_data, "warm_start_from": self.warm_start_from,
                "arch": self.params.arch.name}


def participants_for_level(data: Dataset, levels: LevelConfig, subs: LevelSubsample,
                           level: int) -> ParticipantSet:
    members = [(a, subs.get(a, level)) for a in levels.participants(level)]
    return ParticipantSet(data, tuple(members))


def init_seed(run_seed: int) -> list[int]:
    return [int(run_seed), 0x0F0]


def _check_inputs(levels: LevelConfig, part: Partition, subs: LevelSubsample):
    expected = set(levels.all_agents())
    if set(part.assignments) != expected:
        raise ConfigError("partition agents do not match the level configuration")
    if set(subs.subsets) != expected:
        raise ConfigError("level subsamples do not match the level configuration")
    for agent in expected:
        for lvl in range(1, agent[0] + 1):
            if len(subs.get(agent, lvl)) != levels.quota(lvl):
                raise ConfigError(f"agent {agent} level-{lvl} subset is not of size m_{lvl}")


def run_hffl(data: Dataset, levels: LevelConfig, part: Partition, subs: LevelSubsample,
             arch: ArchSpec, rounds: int, test: Dataset, cfg: FederationConfig | None = None,
             on_round: Callable[[int, RoundMetrics], None] | None = None) -> list[LevelReport]:
    """Train one model per level, warm-starting each from the level below.

    Returns one ``LevelReport`` per level, in level order.
    """
    cfg = cfg or FederationConfig()
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}")
    _check_inputs(levels, part, subs)
    current = models.init_params(arch, init_seed(cfg.seed))
    reports = []
    for lvl in levels.levels():
        participants = participants_for_level(data, levels, subs, lvl)
        hook = None if on_round is None else (lambda m, lvl=lvl: on_round(lvl, m))
        start = current
        current, metrics = run_federation(start, participants, rounds, test, cfg, level=lvl, on_round=hook)
        reports.append(LevelReport(
            level=lvl,
            params=current,
            score=models.score(current, test),
            active_data=participants.data_count,
            cumulative_data=levels.cumulative_data(lvl),
            warm_start_from=lvl - 1,
            rounds=metrics,
            initial=start,
        ))
        log.debug("level %d: %s score %.4f", lvl, arch.name, reports[-1].score)
    return reports


@dataclass
class HfflPlusReport:
    family: list[ArchSpec]
    scores: dict  # level -> {arch name: score}
    winners: dict  # level -> ArchSpec
    runs: dict = field(default_factory=dict)  # arch name -> list[LevelReport]
    failures: dict = field(default_factory=dict)  # arch name -> message

    def winner_score(self, level: int) -> float:
        return self.scores[level][self.winners[level].name]

    def to_json(self) -> str:
        doc = {
            "family": [a.to_dict() | {"name": a.name} for a in self.family],
            "levels": [
                {"level": lvl, "winner": self.winners[lvl].name, "winner_score": self.winner_score(lvl),
                 "scores": self.scores[lvl]}
                for lvl in sorted(self.scores)
            ],
            "failures": self.failures,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "arch", "score"])
        for lvl in sorted(self.scores):
            for arch in self.family:
                if arch.name in self.scores[lvl]:
                    w.writerow([lvl, arch.name, repr(self.scores[lvl][arch.name])])
        return buf.getvalue()


def family_seed(run_seed: int, position: int) -> int:
    return int(np.random.SeedSequence([int(run_seed), 0x9A, position]).generate_state(1)[0])


def run_hffl_plus(data: Dataset, levels: LevelConfig, part: Partition, subs: LevelSubsample,
                  family: Sequence[ArchSpec], rounds: int, test: Dataset,
                  cfg: FederationConfig | None = None) -> HfflPlusReport:
    """Run HFFL once per architecture and keep the best scorer at each level.

    Ties go to the architecture listed first. A member whose run fails is
    recorded in ``failures`` and left out of the selection.
    """
    cfg = cfg or FederationConfig()
    family = list(family)
    if not family:
        raise ConfigError("model family is empty")
    names = [a.name for a in family]
    if len(set(names)) != len(names):
        raise ConfigError(f"model family has duplicate architectures: {names}")
    runs, failures = {}, {}
    for k, arch in enumerate(family):
        try:
            runs[arch.name] = run_hffl(data, levels, part, subs, arch, rounds, test,
                                       replace(cfg, seed=family_seed(cfg.seed, k)))
        except (SessionError, HfflError, ValueError) as exc:
            log.warning("family member %s failed: %s", arch.name, exc)
            failures[arch.name] = str(exc)
    if not runs:
        raise SessionError(f"every family member failed: {failures}", round_index=0)
    scores, winners = {}, {}
    for lvl in levels.levels():
        scores[lvl] = {a.name: runs[a.name][lvl - 1].score for a in family if a.name in runs}
        best = None
        for arch in family:
            if arch.name in runs and (best is None or scores[lvl][arch.name] > scores[lvl][best.name]):
                best = arch
        winners[lvl] = best
    return HfflPlusReport(family, scores, winners, runs, failures)


def promote(levels: LevelConfig, agent: tuple[int, int], to_level: int, available: int,
            approved: bool = True) -> LevelConfig:
    """Move one agent from its level to ``to_level`` (bookkeeping only).

    ``available`` is the amount of data the agent can contribute; it must meet
    the target quota. ``approved`` stands for the higher-level agents'
    consent, which is negotiated outside this library.
    """
    level, j = agent
    if not 1 <= level <= levels.n_levels or not 1 <= j <= levels.n_agents(level):
        raise PromotionError(f"no agent {agent} in this configuration")
    if not level < to_level <= levels.n_levels:
        raise PromotionError(f"cannot promote from level {level} to level {to_level}")
    if available < levels.quota(to_level):
        raise PromotionError(
            f"agent {agent} holds {available} examples, level {to_level} requires {levels.quota(to_level)}"
        )
    if not approved:
        raise PromotionError(f"promotion of {agent} to level {to_level} was not approved")
    if levels.n_agents(level) == 1:
        raise PromotionError(f"level {level} would be left without agents")
    agents = list(levels.agents)
    agents[level - 1] -= 1
    agents[to_level - 1] += 1
    return LevelConfig(tuple(agents), levels.quotas)


def write_checkpoints(reports: Sequence[LevelReport], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in reports:
        path = directory / f"f_{r.level}.ckpt"
        models.save_checkpoint(r.params, path)
        paths.append(path)
    return paths
