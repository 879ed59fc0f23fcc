"""Self-checks run by ``unbiased-sde diagnose``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .brownian import BrownianGrid, refine_grid
from .models import Problem, Scheme, gbm
from .streams import derive_seed, derive_substream
from .unbiased import LevelDistribution, UnbiasedSampler, estimate_strong_order, sample_level_count


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def strong_order_check(scheme: Scheme, lo: float, hi: float, seed: int, reps: int = 10_000) -> Check:
    est = estimate_strong_order(Problem(gbm(), scheme), range(1, 7), reps, derive_seed(seed, 1, int(scheme)))
    ok = est.estimable and lo <= est.order <= hi
    return Check(f"strong order gbm/{scheme.name.lower()}", ok, f"{est.describe()}, band [{lo}, {hi}]")


def bridge_midpoints(seed: int, n: int = 100_000, h: float = 1.0) -> np.ndarray:
    """Midpoints of n independent refinements of the (0, 0) bridge over [0, h]."""
    mids = np.empty(n)
    base = np.zeros(2)
    for i in range(n):
        grid = refine_grid(BrownianGrid(0, h, base), derive_substream(seed, i))
        mids[i] = grid.values[1]
    return mids


def bridge_check(seed: int, n: int = 100_000) -> Check:
    mids = bridge_midpoints(derive_seed(seed, 2), n)
    m, v = float(mids.mean()), float(mids.var(ddof=1))
    ok = abs(m) <= 4 * math.sqrt(0.25 / n) and abs(v - 0.25) <= 0.03 * 0.25
    return Check("bridge midpoint moments", ok, f"mean {m:.5f}, var {v:.5f} (target 0, 0.25)")


def level_counts(dist: LevelDistribution, seed: int, n: int = 100_000) -> np.ndarray:
    return np.array([sample_level_count(dist, derive_substream(seed, i)) for i in range(n)])


def level_law_check(seed: int, gamma: float = 1.5, n: int = 100_000) -> Check:
    dist = LevelDistribution(gamma)
    levels = level_counts(dist, derive_seed(seed, 3), n)
    p = [dist.tail_prob(i) - dist.tail_prob(i + 1) for i in (1, 2, 3)]
    p.append(dist.tail_prob(4))
    observed = [np.sum(levels == 1), np.sum(levels == 2), np.sum(levels == 3), np.sum(levels >= 4)]
    chi2, pval = stats.chisquare(observed, n * np.array(p))
    return Check("level law chi-square", pval > 0.01 and levels.min() >= 1,
                 f"chi2 {chi2:.3f}, p {pval:.3f}, P(N>=2) {np.mean(levels >= 2):.5f}")


def work_check(seed: int, gamma: float = 1.5, n: int = 100_000) -> Check:
    dist = LevelDistribution(gamma)
    _, _, works = UnbiasedSampler(Problem(gbm(), Scheme.MILSTEIN), dist, derive_seed(seed, 4)).batch(0, n)
    measured, expected = float(works.mean()), dist.expected_work()
    ok = abs(measured / expected - 1) <= 0.05
    return Check("work per replication", ok, f"measured {measured:.4f}, analytic {expected:.6f}")


def run_diagnostics(seed: int) -> list[Check]:
    return [
        strong_order_check(Scheme.MILSTEIN, 0.85, 1.15, seed),
        strong_order_check(Scheme.EULER, 0.35, 0.65, seed),
        bridge_check(seed),
        level_law_check(seed),
        work_check(seed),
    ]
