"""Hoeffding plus union bound for a finite model family.

For a family F of models and a loss bounded in [a, b], the probability that
some f in F has |L_D(f) - L_S(f)| > eps on an i.i.d. sample of size m is at
most ``delta = 2 |F| exp(-2 m eps^2 / (b - a)^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import models
from .datagen import Dataset
from .errors import ConfigError, DomainError
from .models import ArchSpec, OptimizerConfig


@dataclass(frozen=True)
class BoundQuery:
    m: int
    epsilon: float
    family_size: int = 1
    loss_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        a, b = self.loss_range
        if self.m < 0:
            raise DomainError(f"m must be nonnegative, got {self.m}")
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if self.family_size < 1:
            raise DomainError(f"family size must be >= 1, got {self.family_size}")
        if not b > a:
            raise DomainError(f"loss range needs b > a, got ({a}, {b})")


def raw_delta(q: BoundQuery) -> float:
    a, b = q.loss_range
    return 2.0 * q.family_size * math.exp(-2.0 * q.m * q.epsilon ** 2 / (b - a) ** 2)


def delta_for(q: BoundQuery) -> float:
    """Failure probability of the bound, clamped to [0, 1]."""
    return min(1.0, raw_delta(q))


def epsilon_for(m: int, delta: float, family_size: int = 1, loss_range=(0.0, 1.0)) -> float:
    """Smallest eps whose bound equals ``delta``."""
    a, b = loss_range
    if not b > a:
        raise DomainError(f"loss range needs b > a, got ({a}, {b})")
    if family_size < 1:
        raise DomainError(f"family size must be >= 1, got {family_size}")
    if not 0 < delta < 2 * family_size:
        raise DomainError(f"delta must lie in (0, {2 * family_size}), got {delta}")
    if m <= 0:
        raise DomainError(f"m must be positive, got {m}")
    return (b - a) * math.sqrt(math.log(2 * family_size / delta) / (2 * m))


def bound_table(ms: Sequence[int], epsilons: Sequence[float], family_size: int,
                loss_range=(0.0, 1.0)) -> list[dict]:
    return [
        {"m": m, "epsilon": eps, "family_size": family_size,
         "delta": delta_for(BoundQuery(m, eps, family_size, tuple(loss_range)))}
        for m in ms for eps in epsilons
    ]


# -- Monte-Carlo check -------------------------------------------------------

@dataclass
class GapResult:
    gaps: np.ndarray  # per trial, max over the family
    per_model: np.ndarray  # trials x family
    m: int
    family_size: int
    loss_range: tuple[float, float]
    epsilon: float | None = None

    @property
    def violation_rate(self) -> float | None:
        if self.epsilon is None:
            return None
        return float(np.mean(self.gaps > self.epsilon))

    @property
    def delta(self) -> float | None:
        if self.epsilon is None:
            return None
        return delta_for(BoundQuery(self.m, self.epsilon, self.family_size, self.loss_range))


def _risk(p, x, y, loss):
    if loss == "zero_one":
        return np.mean(models.predict(p, x) != y)
    return np.mean(models.per_example_loss(p, x, y))


def empirical_gap(train: Dataset, test: Dataset, family: Sequence[ArchSpec], trials: int, seed: int,
                  m: int | None = None, epsilon: float | None = None, loss: str = "zero_one",
                  epochs: int = 20, opt: OptimizerConfig | None = None, fit_once: bool = False,
                  check_size: bool = True) -> GapResult:
    """Measure max_f |L_S(f) - L_test(f)| over repeated samples S of size m.

    The held-out ``test`` set stands in for the true distribution. By default
    every model is trained on the sample it is evaluated on. With
    ``fit_once=True`` the models are trained once on data disjoint from all
    samples, which is the setting in which the bound holds as stated.
    """
    if loss not in ("zero_one", "cross_entropy"):
        raise ConfigError(f"unknown loss {loss!r}")
    family = list(family)
    if not family:
        raise ConfigError("model family is empty")
    opt = opt or OptimizerConfig()
    m = len(train) if m is None else int(m)
    if check_size and len(test) < 10 * m:
        raise ConfigError(f"held-out set of {len(test)} is smaller than 10 x m = {10 * m}")
    if loss == "zero_one":
        loss_range = (0.0, 1.0)
    else:
        loss_range = (0.0, max(models.loss_bounds(a)[1] for a in family))

    rng = np.random.default_rng(seed)
    pool = np.arange(len(train))
    fixed = None
    if fit_once:
        order = rng.permutation(len(train))
        fit_idx, pool = order[:len(train) // 2], order[len(train) // 2:]
        fixed = [models.train(models.init_params(a, [seed, k]), train.features[fit_idx],
                              train.labels[fit_idx], epochs, opt, np.random.default_rng([seed, k]))[0]
                 for k, a in enumerate(family)]
    if m > len(pool):
        raise ConfigError(f"sample size {m} exceeds the {len(pool)} available examples")

    per_model = np.empty((trials, len(family)))
    for t in range(trials):
        idx = pool if m == len(pool) else rng.choice(pool, size=m, replace=False)
        xs, ys = train.features[idx], train.labels[idx]
        for k, arch in enumerate(family):
            if fixed is not None:
                p = fixed[k]
            else:
                trial_rng = np.random.default_rng([seed, t, k])
                p = models.train(models.init_params(arch, [seed, t, k]), xs, ys, epochs, opt, trial_rng)[0]
            per_model[t, k] = abs(_risk(p, xs, ys, loss) - _risk(p, test.features, test.labels, loss))
    return GapResult(per_model.max(axis=1), per_model, m, len(family), loss_range, epsilon)
