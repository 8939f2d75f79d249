"""Data valuation: exact and sampled Shapley values, leave-one-out.

Players are agents. A coalition is encoded as a bitmask over the player
list, bit ``k`` standing for ``players[k]``; ``V(S)`` is the test accuracy of
a deterministic learner trained on the union of the coalition's examples.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .datagen import Dataset
from .errors import CapacityError, ConfigError

MAX_EXACT_PLAYERS = 20


class CoalitionGame:
    """Cooperative game with a cached characteristic function.

    ``value`` receives a tuple of player positions and must be deterministic.
    """

    def __init__(self, players: Sequence, value: Callable[[tuple[int, ...]], float]):
        self.players = list(players)
        self._value = value
        self._table: np.ndarray | None = None

    @classmethod
    def from_table(cls, players: Sequence, table) -> "CoalitionGame":
        table = np.asarray(table, dtype=np.float64)
        if table.shape != (2 ** len(players),):
            raise ConfigError(f"table needs {2 ** len(players)} entries, got {table.shape}")
        game = cls(players, lambda members: float(table[sum(1 << k for k in members)]))
        game._table = table.copy()
        return game

    @property
    def n(self) -> int:
        return len(self.players)

    def value(self, mask: int) -> float:
        if self._table is not None:
            return float(self._table[mask])
        return float(self._value(tuple(k for k in range(self.n) if mask >> k & 1)))

    def table(self) -> np.ndarray:
        """V over all 2^n coalitions, indexed by bitmask; computed once."""
        if self._table is None:
            if self.n > MAX_EXACT_PLAYERS:
                raise CapacityError(
                    f"{self.n} players means 2^{self.n} coalitions; use shapley_sampled instead",
                    required=self.n, available=MAX_EXACT_PLAYERS,
                )
            self._table = np.array([self.value(mask) for mask in range(2 ** self.n)])
        return self._table


@dataclass
class ShapleyReport:
    players: list
    values: np.ndarray
    learner: str
    scale: float
    v_empty: float
    v_full: float
    stderr: np.ndarray | None = None
    permutations: int | None = None

    def as_dict(self) -> dict:
        return dict(zip(self.players, (float(v) for v in self.values)))

    def ranking(self) -> list:
        """Players from highest to lowest value (stable on ties)."""
        order = sorted(range(len(self.players)), key=lambda k: -self.values[k])
        return [self.players[k] for k in order]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent", "phi", "learner", "C", "V_empty", "V_full"])
        for p, v in zip(self.players, self.values):
            w.writerow([p, repr(float(v)), self.learner, repr(self.scale), repr(self.v_empty), repr(self.v_full)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"learner": self.learner, "C": self.scale, "V_empty": self.v_empty, "V_full": self.v_full,
               "values": [{"agent": _jsonable(p), "phi": float(v)} for p, v in zip(self.players, self.values)]}
        if self.stderr is not None:
            doc["stderr"] = [float(s) for s in self.stderr]
            doc["permutations"] = self.permutations
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _jsonable(x):
    return x.item() if isinstance(x, np.generic) else x


def _popcounts(n: int) -> np.ndarray:
    counts = np.zeros(2 ** n, dtype=np.int64)
    masks = np.arange(2 ** n)
    for k in range(n):
        counts += (masks >> k) & 1
    return counts


def shapley_exact(game: CoalitionGame, learner: str = "") -> ShapleyReport:
    """Shapley values by summing over every coalition.

    phi_i = (1/n) * sum over S not containing i of
    (V(S + i) - V(S)) / binom(n - 1, |S|).
    """
    n = game.n
    if n == 0:
        raise ConfigError("game has no players")
    if n > MAX_EXACT_PLAYERS:
        raise CapacityError(
            f"exact Shapley over {n} players needs 2^{n} evaluations; use shapley_sampled",
            required=n, available=MAX_EXACT_PLAYERS,
        )
    table = game.table()
    masks = np.arange(2 ** n)
    sizes = _popcounts(n)
    weights = np.array([1.0 / math.comb(n - 1, s) if s < n else 0.0 for s in range(n + 1)])
    values = np.empty(n)
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        marginal = table[without | bit] - table[without]
        values[i] = np.dot(marginal, weights[sizes[without]]) / n
    return ShapleyReport(list(game.players), values, learner, 1.0 / n, float(table[0]), float(table[-1]))


def shapley_sampled(game: CoalitionGame, permutations: int, seed: int = 0,
                    exhaustive: bool = False, learner: str = "") -> ShapleyReport:
    """Permutation-sampling estimate with per-player standard errors.

    With ``exhaustive=True`` every one of the n! orderings is visited once
    and ``permutations`` is ignored; the result is then exact.
    """
    n = game.n
    if n == 0:
        raise ConfigError("game has no players")
    cache: dict[int, float] = {}

    def v(mask):
        if mask not in cache:
            cache[mask] = game.value(mask)
        return cache[mask]

    if exhaustive:
        orders = itertools.permutations(range(n))
        count = math.factorial(n)
    else:
        if permutations < 1:
            raise ConfigError(f"permutations must be >= 1, got {permutations}")
        rng = np.random.default_rng(seed)
        orders = (rng.permutation(n) for _ in range(permutations))
        count = permutations
    total = np.zeros(n)
    total_sq = np.zeros(n)
    for order in orders:
        mask = 0
        prev = v(0)
        for k in order:
            mask |= 1 << int(k)
            cur = v(mask)
            d = cur - prev
            total[k] += d
            total_sq[k] += d * d
            prev = cur
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    stderr = np.zeros(n) if exhaustive else np.sqrt(var / max(count - 1, 1))
    return ShapleyReport(list(game.players), mean, learner, 1.0 / n, v(0), v((1 << n) - 1),
                         stderr=stderr, permutations=count)


# -- learners ----------------------------------------------------------------

@dataclass(frozen=True)
class LearnerSpec:
    """A deterministic learner: training is a pure function of the subset."""

    kind: str
    iterations: int = 300
    lr: float = 0.5
    reg: float = 0.01

    KINDS = ("one_nearest_neighbor", "decision_stump", "logistic_regression", "linear_svm")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown learner {self.kind!r}; choose from {self.KINDS}")

    @property
    def name(self) -> str:
        return self.kind

    def fit(self, x: np.ndarray, y: np.ndarray, n_classes: int) -> Callable[[np.ndarray], np.ndarray]:
        """Train on (x, y) and return a prediction function."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(y) == 0:
            return lambda q: np.zeros(len(q), dtype=np.int64)
        present = np.unique(y)
        if len(present) == 1:
            c = int(present[0])
            return lambda q: np.full(len(q), c, dtype=np.int64)
        fit = {
            "one_nearest_neighbor": _fit_1nn,
            "decision_stump": _fit_stump,
            "logistic_regression": self._fit_logistic,
            "linear_svm": self._fit_svm,
        }[self.kind]
        return fit(x, y, n_classes)

    def _fit_logistic(self, x, y, k):
        xb = np.hstack([x, np.ones((len(x), 1))])
        w = np.zeros((xb.shape[1], k))
        onehot = np.eye(k)[y]
        for _ in range(self.iterations):
            z = xb @ w
            e = np.exp(z - z.max(axis=1, keepdims=True))
            p = e / e.sum(axis=1, keepdims=True)
            w -= self.lr * (xb.T @ (p - onehot) / len(y))
        return lambda q: np.argmax(np.hstack([q, np.ones((len(q), 1))]) @ w, axis=1)

    def _fit_svm(self, x, y, k):
        # one-vs-rest hinge loss, full-batch subgradient descent from zero
        xb = np.hstack([x, np.ones((len(x), 1))])
        w = np.zeros((xb.shape[1], k))
        target = np.where(np.eye(k, dtype=bool)[y], 1.0, -1.0)
        for _ in range(self.iterations):
            margin = target * (xb @ w)
            active = (margin < 1.0) * target
            grad = -(xb.T @ active) / len(y)
            grad[:-1] += self.reg * w[:-1]
            w -= self.lr * grad
        return lambda q: np.argmax(np.hstack([q, np.ones((len(q), 1))]) @ w, axis=1)


def _fit_1nn(x, y, k):
    def predict(q):
        d = ((q[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
        return y[np.argmin(d, axis=1)]
    return predict


def _majority(y, k):
    counts = np.bincount(y, minlength=k)
    return int(np.argmax(counts))


def _fit_stump(x, y, k):
    """Exhaustive single-split search; the first optimum found wins."""
    best = (np.inf, 0, -np.inf, _majority(y, k), _majority(y, k))
    for f in range(x.shape[1]):
        values = np.unique(x[:, f])
        cuts = (values[:-1] + values[1:]) / 2.0
        for t in cuts:
            left = y[x[:, f] <= t]
            right = y[x[:, f] > t]
            cl, cr = _majority(left, k), _majority(right, k)
            err = np.sum(left != cl) + np.sum(right != cr)
            if err < best[0]:
                best = (err, f, t, cl, cr)
    _, f, t, cl, cr = best
    return lambda q: np.where(q[:, f] <= t, cl, cr).astype(np.int64)


def learner_game(dataset: Dataset, ownership, learner: LearnerSpec, test: Dataset) -> CoalitionGame:
    """Game whose players are the distinct owners in ``ownership``."""
    ownership = np.asarray(ownership)
    if len(ownership) != len(dataset):
        raise ConfigError(f"{len(dataset)} examples but {len(ownership)} ownership entries")
    players = sorted(set(ownership.tolist()))
    rows = [np.flatnonzero(ownership == p) for p in players]
    k = max(dataset.n_classes, test.n_classes)

    def value(members):
        idx = np.concatenate([rows[m] for m in members]) if members else np.array([], dtype=np.int64)
        idx = np.sort(idx)
        predict = learner.fit(dataset.features[idx], dataset.labels[idx], k)
        return float(np.mean(predict(test.features) == test.labels))

    return CoalitionGame(players, value)


def agent_contribution(dataset: Dataset, ownership, learner: LearnerSpec, test: Dataset) -> ShapleyReport:
    """Exact Shapley value of each agent under ``learner``."""
    game = learner_game(dataset, ownership, learner, test)
    if game.n > MAX_EXACT_PLAYERS:
        raise CapacityError(f"{game.n} agents is too many for exact valuation; use shapley_sampled",
                            required=game.n, available=MAX_EXACT_PLAYERS)
    return shapley_exact(game, learner=learner.name)


def loo_value(dataset: Dataset, ownership, learner: LearnerSpec, test: Dataset) -> dict:
    """V(all) - V(all without agent i) for every agent."""
    game = learner_game(dataset, ownership, learner, test)
    full = (1 << game.n) - 1
    v_full = game.value(full)
    return {p: v_full - game.value(full & ~(1 << k)) for k, p in enumerate(game.players)}
