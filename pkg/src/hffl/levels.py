"""Contribution-level configuration: how many agents sit at each level and
how much data each of them contributes."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class LevelConfig:
    """Declared contribution hierarchy.

    Levels and agents are numbered from 1, so ``agents[0]`` is ``N_1`` and
    ``quotas[0]`` is ``m_1``.
    """

    agents: tuple[int, ...]
    quotas: tuple[int, ...]

    def __post_init__(self):
        agents = tuple(int(n) for n in self.agents)
        quotas = tuple(int(m) for m in self.quotas)
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "quotas", quotas)
        if len(agents) == 0:
            raise ConfigError("at least one level is required")
        if len(agents) != len(quotas):
            raise ConfigError(
                f"agents has {len(agents)} levels but quotas has {len(quotas)}"
            )
        if any(n < 1 for n in agents):
            raise ConfigError(f"every level needs at least one agent, got {agents}")
        if any(m < 1 for m in quotas):
            raise ConfigError(f"quotas must be positive, got {quotas}")
        if any(a >= b for a, b in zip(quotas, quotas[1:])):
            raise ConfigError(f"quotas must be strictly increasing, got {quotas}")

    @property
    def n_levels(self) -> int:
        return len(self.agents)

    def levels(self) -> range:
        return range(1, self.n_levels + 1)

    def n_agents(self, level: int) -> int:
        return self.agents[level - 1]

    def quota(self, level: int) -> int:
        return self.quotas[level - 1]

    def agent_ids(self, level: int) -> list[tuple[int, int]]:
        return [(level, j) for j in range(1, self.n_agents(level) + 1)]

    def all_agents(self) -> list[tuple[int, int]]:
        return [a for lvl in self.levels() for a in self.agent_ids(lvl)]

    def participants(self, level: int) -> list[tuple[int, int]]:
        """Agents taking part in the level-``level`` session (levels >= level)."""
        return [a for lvl in range(level, self.n_levels + 1) for a in self.agent_ids(lvl)]

    @property
    def total_data(self) -> int:
        return sum(n * m for n, m in zip(self.agents, self.quotas))

    def active_data(self, level: int) -> int:
        """Examples trained on during the level session: (N_l + ... + N_L) * m_l."""
        return sum(self.agents[level - 1 :]) * self.quota(level)

    def cumulative_data(self, level: int) -> int:
        """Active data plus what reaches the model only through warm starts."""
        below = sum(n * m for n, m in zip(self.agents[: level - 1], self.quotas[: level - 1]))
        return below + self.active_data(level)

    def to_dict(self) -> dict:
        return {"agents": list(self.agents), "quotas": list(self.quotas)}
