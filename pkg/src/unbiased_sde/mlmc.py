"""Multilevel Monte Carlo baseline (Giles 2008, refinement factor 2).

Level-l samples Y_l = k(X_{2^-l}) - k(X_{2^-(l-1)}) (Y_0 = k(X_1)) come from the
same refined Brownian path as the unbiased estimator's level differences, so
the two estimators share one coupling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .models import Problem, level_values, simulate_level_terminals
from .streams import RandomStream, stream_key

LEVEL_SHIFT = 34  # sample index bits inside one level's substream block
MAX_LEVEL_CAP = 25


class MlmcLevelCapError(RuntimeError):
    pass


@njit(cache=True, nogil=True)
def level_batch(master_seed, first_id, count, level, horizon, family, p, x0, scheme, fcode, fp, out):
    ks = np.empty(level + 1)
    work = 0
    for i in range(count):
        key = stream_key(master_seed, first_id + i)
        work += level_values(key, 0, level, horizon, family, p, x0, scheme, fcode, fp, ks)
        out[i] = ks[level] - ks[level - 1] if level > 0 else ks[0]
    return work


def coupled_level_sample(level: int, problem: Problem, stream: RandomStream):
    """One Y_level and the Gaussian draws it consumed."""
    if level < 0:
        raise ValueError("level must be >= 0")
    ks, work = simulate_level_terminals(stream, problem, level)
    y = ks[level] - ks[level - 1] if level > 0 else ks[0]
    return float(y), work


def optimal_level_sizes(variances, steps, epsilon: float) -> np.ndarray:
    """N_l = ceil(2 eps^-2 sqrt(V_l h_l) sum_k sqrt(V_k / h_k)), at least 1."""
    v = np.asarray(variances, dtype=float)
    h = np.asarray(steps, dtype=float)
    if np.any(v < 0) or np.any(h <= 0) or not epsilon > 0:
        raise ValueError("need V >= 0, h > 0, epsilon > 0")
    total = np.sum(np.sqrt(v / h))
    n = np.ceil(2.0 * epsilon ** -2 * np.sqrt(v * h) * total)
    return np.maximum(n, 1).astype(np.int64)


@dataclass
class MlmcConfig:
    epsilon: float
    initial_samples: int = 100
    max_level: int = MAX_LEVEL_CAP
    min_level: int = 2

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.initial_samples < 2:
            raise ValueError("initial_samples must be >= 2")


@dataclass
class MlmcResult:
    estimate: float
    counts: np.ndarray
    variances: np.ndarray
    means: np.ndarray
    work: int
    levels: int = field(init=False)

    def __post_init__(self):
        self.levels = len(self.counts) - 1


class _LevelSums:
    def __init__(self):
        self.n = 0
        self.s1 = 0.0
        self.s2 = 0.0

    def add(self, y: np.ndarray):
        self.n += y.size
        self.s1 += float(np.sum(y))
        self.s2 += float(np.sum(y * y))

    @property
    def mean(self) -> float:
        return self.s1 / self.n

    @property
    def variance(self) -> float:
        if self.n < 2:
            return 0.0
        return max(self.s2 / self.n - self.mean ** 2, 0.0) * self.n / (self.n - 1)


def mlmc_estimate(problem: Problem, config: MlmcConfig, master_seed: int, block: int = 0) -> MlmcResult:
    """Adaptive MLMC targeting RMSE ``config.epsilon``.

    Sample i of level l uses substream ``(block << 40) | (l << 34) | i``.
    """
    seed = np.uint64(int(master_seed) & ((1 << 64) - 1))
    args = problem.kernel_args()
    eps = config.epsilon
    sums: list[_LevelSums] = []
    pending: list[int] = []
    work = 0

    def draw(level: int, count: int):
        nonlocal work
        out = np.empty(count)
        first = (block << 40) | (level << LEVEL_SHIFT) | sums[level].n
        work += int(level_batch(seed, first, count, level, *args, out))
        sums[level].add(out)

    for _ in range(config.min_level + 1):
        sums.append(_LevelSums())
        pending.append(config.initial_samples)

    while True:
        for level, count in enumerate(pending):
            if count > 0:
                draw(level, count)
        L = len(sums) - 1
        v = np.array([s.variance for s in sums])
        h = problem.horizon * 2.0 ** -np.arange(L + 1)
        target = optimal_level_sizes(v, h, eps)
        extra = [max(0, int(t) - s.n) for t, s in zip(target, sums)]
        for level, count in enumerate(extra):
            if count > 0:
                draw(level, count)
        means = np.array([s.mean for s in sums])
        if max(abs(means[L - 1]) / 2.0, abs(means[L])) < eps / math.sqrt(2.0):
            break
        if L + 1 > config.max_level:
            raise MlmcLevelCapError(
                f"MLMC bias test not met by level cap max_level={config.max_level}")
        sums.append(_LevelSums())
        pending = [0] * L + [config.initial_samples]

    means = np.array([s.mean for s in sums])
    return MlmcResult(float(np.sum(means)), np.array([s.n for s in sums]),
                      np.array([s.variance for s in sums]), means, work)
