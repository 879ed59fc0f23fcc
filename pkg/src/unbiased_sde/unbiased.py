"""Randomized-truncation unbiased estimator Z for E k(X).

Z = k(X_1) + sum_{n=1}^{N} (k(X_{2^-n}) - k(X_{2^-(n-1)})) / P(N >= n)

with N independent of the Brownian path and P(N >= i) = 2**(-gamma (i-1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .models import Problem, level_values, simulate_level_terminals
from .streams import RandomStream, stream_key, uniform_at

LN2 = math.log(2.0)
DEFAULT_GAMMA = 1.5
# No sane tail law gets near this; a guard against 2**N sized allocations.
MAX_LEVEL = 40


class DivergentWorkError(ValueError):
    """Expected work per replication is infinite (gamma <= 1)."""


@njit(cache=True, nogil=True)
def tail_probability(gamma, i):
    return 2.0 ** (-gamma * (i - 1))


@njit(cache=True, nogil=True)
def level_count_from_uniform(u, gamma):
    n = 1 + int(math.floor(math.log(u) / (-gamma * LN2)))
    return min(n, MAX_LEVEL)


@njit(cache=True, nogil=True)
def assemble_z(ks, n_levels, gamma):
    value = ks[0]
    for n in range(1, n_levels + 1):
        value += (ks[n] - ks[n - 1]) / tail_probability(gamma, n)
    return value


@njit(cache=True, nogil=True)
def z_batch(master_seed, first_id, count, gamma, horizon, family, p, x0, scheme, fcode, fp,
            values, levels, works):
    ks = np.empty(MAX_LEVEL + 1)
    for i in range(count):
        key = stream_key(master_seed, first_id + i)
        n_levels = level_count_from_uniform(uniform_at(key, 0), gamma)
        used = level_values(key, 0, n_levels, horizon, family, p, x0, scheme, fcode, fp, ks)
        values[i] = assemble_z(ks, n_levels, gamma)
        levels[i] = n_levels
        works[i] = used


@dataclass(frozen=True)
class LevelDistribution:
    """Law of the truncation level N on {1, 2, ...}."""

    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")

    def tail_prob(self, i: int) -> float:
        if i < 1:
            raise ValueError(f"tail_prob needs i >= 1, got {i}")
        return tail_probability(float(self.gamma), int(i))

    @staticmethod
    def work_increment(i: int) -> int:
        """Gaussian draws added going from level i-1 to level i (t_0 = 1)."""
        return 1 if i == 0 else 1 << (i - 1)

    def expected_work(self) -> float:
        """sum_i t_i P(N >= i), in Gaussian draws."""
        if self.gamma <= 1:
            raise DivergentWorkError(
                f"gamma = {self.gamma} <= 1 gives infinite expected work per replication")
        return 1.0 + 1.0 / (1.0 - 2.0 ** (1.0 - self.gamma))


def sample_level_count(dist: LevelDistribution, stream: RandomStream) -> int:
    return level_count_from_uniform(stream.next_uniform(), float(dist.gamma))


@dataclass
class ZSample:
    value: float
    level_count: int
    deltas: np.ndarray
    work: int
    base: float = field(repr=False, default=0.0)

    def recompute(self, dist: LevelDistribution) -> float:
        """Fold the stored deltas back into Z in the order the sampler used."""
        value = self.base
        for n, d in enumerate(self.deltas, start=1):
            value += float(d) / dist.tail_prob(n)
        return value


def sample_Z(problem: Problem, dist: LevelDistribution, stream: RandomStream) -> ZSample:
    n_levels = sample_level_count(dist, stream)
    ks, work = simulate_level_terminals(stream, problem, n_levels)
    value = assemble_z(ks, n_levels, float(dist.gamma))
    return ZSample(value, n_levels, ks[1:] - ks[:-1], work, base=float(ks[0]))


class UnbiasedSampler:
    """Replication source: replication i is Z on substream ``first_id + i``."""

    def __init__(self, problem: Problem, dist: LevelDistribution, master_seed: int, first_id: int = 0):
        self.problem = problem
        self.dist = dist
        self.master_seed = np.uint64(int(master_seed) & ((1 << 64) - 1))
        self.first_id = int(first_id)

    def batch(self, start: int, count: int):
        values = np.empty(count)
        levels = np.empty(count, dtype=np.int64)
        works = np.empty(count, dtype=np.int64)
        z_batch(self.master_seed, self.first_id + start, count, float(self.dist.gamma),
                *self.problem.kernel_args(), values, levels, works)
        return values, levels, works

    def __call__(self, start: int, count: int):
        values, _, works = self.batch(start, count)
        return values, works


@dataclass(frozen=True)
class GammaCheck:
    ok: bool
    violations: tuple[str, ...]
    default_gamma: float


def validate_gamma(gamma: float, strong_order: float) -> GammaCheck:
    """Finite work needs gamma > 1, finite variance needs gamma < 2r."""
    if not strong_order > 0:
        raise ValueError("strong order must be positive")
    violations = []
    if not gamma > 1:
        violations.append(f"gamma = {gamma} <= 1: expected work per replication is infinite")
    if not gamma < 2 * strong_order:
        violations.append(f"gamma = {gamma} >= 2r = {2 * strong_order}: variance of Z is infinite")
    return GammaCheck(not violations, tuple(violations), (1 + 2 * strong_order) / 2)


@njit(cache=True, nogil=True)
def level_matrix(master_seed, first_id, reps, max_level, horizon, family, p, x0, scheme, fcode, fp, out):
    for i in range(reps):
        key = stream_key(master_seed, first_id + i)
        level_values(key, 0, max_level, horizon, family, p, x0, scheme, fcode, fp, out[i])


def level_terminal_matrix(problem: Problem, max_level: int, reps: int, master_seed: int, first_id: int = 0):
    """(reps, max_level + 1) array of k-values, row i on substream first_id + i."""
    out = np.empty((reps, max_level + 1))
    level_matrix(np.uint64(int(master_seed) & ((1 << 64) - 1)), int(first_id), reps, max_level,
                 *problem.kernel_args(), out)
    return out


@dataclass
class StrongOrderEstimate:
    levels: np.ndarray
    mean_sq_deltas: np.ndarray
    estimable: bool
    slope: float = math.nan
    intercept: float = math.nan
    order: float = math.nan

    def describe(self) -> str:
        if not self.estimable:
            return "order unbounded / not estimable (zero level differences)"
        return f"r_hat = {self.order:.4f} (log2 slope {self.slope:.4f})"


def estimate_strong_order(problem: Problem, levels=range(1, 7), reps: int = 10_000,
                          master_seed: int = 0, first_id: int = 0) -> StrongOrderEstimate:
    """Regress log2 E[delta_n^2] on n; r_hat = -slope / 2."""
    levels = np.asarray(list(levels), dtype=np.int64)
    if levels.size < 4 or levels.min() < 1:
        raise ValueError("need at least 4 levels, all >= 1")
    if reps < 1000:
        raise ValueError("need reps >= 1000")
    ks = level_terminal_matrix(problem, int(levels.max()), reps, master_seed, first_id)
    deltas = ks[:, levels] - ks[:, levels - 1]
    msq = np.mean(deltas ** 2, axis=0)
    if np.any(msq <= 0):
        return StrongOrderEstimate(levels, msq, False)
    slope, intercept = np.polyfit(levels.astype(float), np.log2(msq), 1)
    return StrongOrderEstimate(levels, msq, True, float(slope), float(intercept), float(-slope / 2))
