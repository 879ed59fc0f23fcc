"""Running moments, the sequential stopping rule and the table protocol."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .mlmc import MlmcConfig, mlmc_estimate
from .models import AFFINE, CIR, DiscountedCall, Problem, SdeModel, TerminalValue
from .streams import derive_seed
from .unbiased import DEFAULT_GAMMA, LevelDistribution, UnbiasedSampler

Z_90 = 1.645
REPLICATION_SHIFT = 40  # meta-replication r owns substreams [r << 40, (r+1) << 40)


class UnknownTruthError(ValueError):
    """No closed-form value is available for this model/functional pair."""


@dataclass
class RunningStats:
    """Welford accumulator with a Gaussian-draw work total."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    work: int = 0

    def push(self, z: float, work: int = 0) -> "RunningStats":
        self.count += 1
        delta = z - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (z - self.mean)
        self.work += int(work)
        return self

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return RunningStats(self.count, self.mean, self.m2, self.work + other.work)
        if self.count == 0:
            return RunningStats(other.count, other.mean, other.m2, self.work + other.work)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return RunningStats(n, mean, m2, self.work + other.work)

    @property
    def variance(self) -> float:
        if self.count < 2:
            raise ValueError("sample variance needs at least 2 observations")
        return self.m2 / (self.count - 1)


def update_stats(stats: RunningStats, z: float, work: int = 0) -> RunningStats:
    return stats.push(z, work)


def sample_rmse_of_mean(stats: RunningStats) -> float:
    if stats.count < 2:
        raise ValueError("sample RMSE of the mean is undefined for n < 2")
    return math.sqrt(stats.m2 / (stats.count * (stats.count - 1)))


@dataclass(frozen=True)
class StoppingRule:
    epsilon: float
    n_min: int = 100

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n_min < 2:
            raise ValueError("n_min must be >= 2")


@njit(cache=True, nogil=True)
def _scan(values, works, count, mean, m2, work, eps2, n_min):
    """Continue the Welford recursion; return the stopping position or -1."""
    for i in range(values.shape[0]):
        z = values[i]
        count += 1
        delta = z - mean
        mean += delta / count
        m2 += delta * (z - mean)
        work += works[i]
        if count >= n_min and m2 / (count * (count - 1.0)) <= eps2:
            return i, count, mean, m2, work
    return -1, count, mean, m2, work


@dataclass
class StoppedRun:
    estimate: float
    count: int
    work: int
    rmse: float


def run_until_tolerance(sampler, rule: StoppingRule, max_replications: int | None = None) -> StoppedRun:
    """Draw replications 0, 1, 2, ... until the sample RMSE of the mean is <= epsilon.

    ``sampler(start, count)`` returns ``(values, works)`` for replications
    ``start .. start+count-1``; replication i must depend on i alone, so batch
    sizes never change the outcome.
    """
    count, mean, m2, work = 0, 0.0, 0.0, 0
    eps2 = rule.epsilon ** 2
    start, batch = 0, rule.n_min
    while True:
        if max_replications is not None:
            batch = min(batch, max_replications - start)
            if batch <= 0:
                raise RuntimeError(f"no stop within {max_replications} replications")
        values, works = sampler(start, batch)
        stop, count, mean, m2, work = _scan(np.asarray(values, dtype=float),
                                            np.asarray(works, dtype=np.int64),
                                            count, mean, m2, work, eps2, rule.n_min)
        if stop >= 0:
            return StoppedRun(float(mean), int(count), int(work), math.sqrt(m2 / (count * (count - 1.0))))
        start += batch
        need = m2 / (count - 1) / eps2 - count if count > 1 else rule.n_min
        batch = int(min(max(1.1 * need, 256), 1 << 20))


@dataclass(frozen=True)
class TableRow:
    ire_pct: float
    estimate: float
    ci_halfwidth: float
    rmse: float
    work_mean: float
    work_ci_halfwidth: float


def summarize(ire_pct: float, estimates, works, alpha: float) -> TableRow:
    est = np.asarray(estimates, dtype=float)
    w = np.asarray(works, dtype=float)
    n = est.size
    return TableRow(
        float(ire_pct),
        float(np.mean(est)),
        Z_90 * float(np.std(est, ddof=1)) / math.sqrt(n),
        math.sqrt(float(np.mean((est - alpha) ** 2))),
        float(np.mean(w)),
        Z_90 * float(np.std(w, ddof=1)) / math.sqrt(n),
    )


def _gbm_like(model: SdeModel) -> bool:
    a, b, c, d = model.coeffs
    return model.family == AFFINE and a == 0 and c == 0


def true_value(model: SdeModel, functional, horizon: float = 1.0) -> float | None:
    """Closed-form E k(X(T)) where one exists, else None."""
    T = horizon
    if model.family == CIR and isinstance(functional, TerminalValue):
        kappa, theta = model.coeffs[0], model.coeffs[1]
        return float(theta + (model.x0 - theta) * math.exp(-kappa * T))
    if model.family == AFFINE and isinstance(functional, TerminalValue):
        a, b = model.coeffs[0], model.coeffs[1]
        growth = math.exp(b * T)
        shift = a * T if b == 0 else a * (growth - 1.0) / b
        return float(model.x0 * growth + shift)
    if _gbm_like(model) and isinstance(functional, DiscountedCall):
        mu, sigma = model.coeffs[1], abs(model.coeffs[3])
        K, r = functional.strike, functional.rate
        fwd = model.x0 * math.exp(mu * T)
        disc = math.exp(-r * functional.horizon)
        if sigma == 0 or K <= 0:
            return float(disc * max(fwd - K, 0.0))
        s = sigma * math.sqrt(T)
        d1 = (math.log(fwd / K) + 0.5 * s * s) / s
        d2 = d1 - s
        cdf = lambda x: 0.5 * math.erfc(-x / math.sqrt(2.0))
        return float(disc * (fwd * cdf(d1) - K * cdf(d2)))
    return None


@dataclass
class MetaResult:
    row: TableRow
    estimates: np.ndarray
    works: np.ndarray
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def row_seed(master_seed: int, ire_pct: float) -> int:
    return derive_seed(master_seed, int(round(ire_pct * 1_000_000)))


def meta_experiment(problem: Problem, ire_list, *, estimator: str = "unbiased", meta_reps: int = 100,
                    master_seed: int = 1, n_min: int = 100, gamma: float = DEFAULT_GAMMA,
                    mlmc_initial_samples: int = 100, workers: int = 1,
                    alpha: float | None = None) -> list[MetaResult]:
    """One table row per IRE, each from ``meta_reps`` independent estimator runs.

    Run r of the row for IRE k uses seed ``row_seed(master_seed, k)`` and
    substream block r, so rows are reproducible individually and independent
    of ``workers``.
    """
    if alpha is None:
        alpha = true_value(problem.model, problem.functional, problem.horizon)
    if alpha is None:
        raise UnknownTruthError(
            f"no closed-form value for {problem.model.name} with {type(problem.functional).__name__}")
    if estimator not in ("unbiased", "mlmc"):
        raise ValueError(f"unknown estimator {estimator!r}")
    dist = LevelDistribution(gamma)
    results = []
    for ire in ire_list:
        eps = ire / 100.0 * abs(alpha)
        seed = row_seed(master_seed, ire)

        if estimator == "unbiased":
            rule = StoppingRule(eps, n_min)

            def one(r):
                run = run_until_tolerance(UnbiasedSampler(problem, dist, seed, r << REPLICATION_SHIFT), rule)
                return run.estimate, run.work, run.count
        else:
            config = MlmcConfig(eps, mlmc_initial_samples)

            def one(r):
                res = mlmc_estimate(problem, config, seed, block=r)
                return res.estimate, res.work, int(res.counts.sum())

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                out = list(pool.map(one, range(meta_reps)))
        else:
            out = [one(r) for r in range(meta_reps)]
        est = np.array([o[0] for o in out])
        works = np.array([o[1] for o in out], dtype=np.int64)
        counts = np.array([o[2] for o in out], dtype=np.int64)
        results.append(MetaResult(summarize(ire, est, works, alpha), est, works, counts))
    return results
