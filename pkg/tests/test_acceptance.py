"""Exit criteria, run at the shipped seed.  Each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from unbiased_sde.brownian import BrownianGrid, init_brownian_grid, refine_grid
from unbiased_sde.cli import run_command
from unbiased_sde.harness import meta_experiment, true_value
from unbiased_sde.mlmc import coupled_level_sample
from unbiased_sde.models import DiscountedCall, Problem, Scheme, cir, gbm
from unbiased_sde.streams import derive_substream
from unbiased_sde.unbiased import (
    LevelDistribution, UnbiasedSampler, estimate_strong_order, sample_level_count, sample_Z,
)

SEED = 1
CIR_M = Problem(cir(), Scheme.MILSTEIN)
GBM_CALL = Problem(gbm(), Scheme.MILSTEIN, DiscountedCall(1.0, 0.05, 1.0))

# unbiased CIR table: IRE -> (RMSE, mean work)
CIR_UNBIASED = {25: (0.01080, 883.1), 10: (0.00450, 5548.5), 5: (0.00208, 22693.3), 2: (0.00087, 142480.8)}
CIR_MLMC_WORK = {5: 42503.8, 2: 265948.6}


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def cir_table():
    t0 = time.perf_counter()
    results = meta_experiment(CIR_M, [25, 10, 5, 2, 1], meta_reps=100, master_seed=SEED)
    return {int(r.row.ire_pct): r.row for r in results}, time.perf_counter() - t0


def test_1a_cir_point_estimates(cir_table, report):
    rows, elapsed = cir_table
    ratios = {k: abs(rows[k].estimate - 0.04) / rows[k].ci_halfwidth for k in CIR_UNBIASED}
    ok = all(r <= 3 for r in ratios.values()) and elapsed <= 300
    detail = ", ".join(f"{k}%: {v:.2f} half-widths" for k, v in ratios.items())
    assert report("1a", ok, f"|estimate - 0.04| {detail}; table runtime {elapsed:.1f}s"), ratios


def test_1b_cir_rmse(cir_table, report):
    rows, _ = cir_table
    ratios = {k: rows[k].rmse / CIR_UNBIASED[k][0] for k in CIR_UNBIASED}
    ok = all(0.5 <= r <= 1.5 for r in ratios.values())
    assert report("1b", ok, "RMSE / reference " + ", ".join(f"{k}%: {v:.2f}" for k, v in ratios.items())), ratios


def test_1c_cir_work(cir_table, report):
    rows, _ = cir_table
    ratios = {k: rows[k].work_mean / CIR_UNBIASED[k][1] for k in CIR_UNBIASED}
    ok = all(0.5 <= r <= 2.0 for r in ratios.values())
    assert report("1c", ok, "work / reference " + ", ".join(f"{k}%: {v:.3f}" for k, v in ratios.items())
                  + " (band [0.5, 2])"), ratios


def test_2_gbm_call_value(report):
    oracle = true_value(GBM_CALL.model, GBM_CALL.functional)
    t0 = time.perf_counter()
    (res,) = meta_experiment(GBM_CALL, [2], meta_reps=100, master_seed=SEED)
    elapsed = time.perf_counter() - t0
    gap = abs(res.row.estimate - 0.104506) / res.row.ci_halfwidth
    ok = round(oracle, 5) == round(0.104506, 5) and gap <= 3 and elapsed <= 180
    assert report(2, ok, f"closed form {oracle:.7f}; IRE 2% estimate {res.row.estimate:.6f} "
                  f"± {res.row.ci_halfwidth:.6f} ({gap:.2f} half-widths)")


def test_3_square_root_rate(cir_table, report):
    rows, _ = cir_table
    ire = [25, 10, 5, 2, 1]
    slope = np.polyfit(np.log([rows[k].work_mean for k in ire]), np.log([rows[k].rmse for k in ire]), 1)[0]
    assert report(3, -0.6 <= slope <= -0.4, f"log RMSE vs log work slope {slope:.4f}")


def test_4_strong_order(report):
    t0 = time.perf_counter()
    mil = estimate_strong_order(Problem(gbm(), Scheme.MILSTEIN), range(1, 7), 10_000, master_seed=SEED)
    eul = estimate_strong_order(Problem(gbm(), Scheme.EULER), range(1, 7), 10_000, master_seed=SEED)
    elapsed = time.perf_counter() - t0
    ok = -2.3 <= mil.slope <= -1.7 and -1.3 <= eul.slope <= -0.7 and elapsed <= 60
    assert report(4, ok, f"Milstein slope {mil.slope:.4f}, Euler slope {eul.slope:.4f}")


def test_5_work_model(report):
    dist = LevelDistribution(1.5)
    _, _, works = UnbiasedSampler(GBM_CALL, dist, SEED).batch(0, 100_000)
    rel = works.mean() / 4.414214 - 1
    ok = abs(rel) <= 0.05 and abs(dist.expected_work() - 4.414214) < 1e-6
    assert report(5, ok, f"mean draws {works.mean():.4f} vs 4.414214 ({100 * rel:+.2f}%)")


def test_6_randomization_law(report):
    dist = LevelDistribution(1.5)
    n = 100_000
    levels = np.array([sample_level_count(dist, derive_substream(SEED, i)) for i in range(n)])
    ok = np.all(levels >= 1)
    parts = []
    for i in (2, 3, 4):
        p = 2.0 ** (-1.5 * (i - 1))
        z = (np.mean(levels >= i) - p) / math.sqrt(p * (1 - p) / n)
        ok &= abs(z) <= 4
        parts.append(f"P(N>={i}) z={z:+.2f}")
    assert report(6, bool(ok), "P(N>=1)=1; " + ", ".join(parts))


def test_7_bridge_kernel(report):
    n = 100_000
    mids = np.array([refine_grid(BrownianGrid(0, 1.0, np.zeros(2)), derive_substream(SEED, i)).values[1]
                     for i in range(n)])
    mean_ok = abs(mids.mean()) <= 4 * math.sqrt(0.25 / n)
    var_ok = abs(mids.var(ddof=1) - 0.25) <= 0.03 * 0.25
    coupled, worst = True, 0.0
    for i in range(10_000):
        s = derive_substream(SEED + 1, i)
        g = init_brownian_grid(s)
        for _ in range(8):
            fine = refine_grid(g, s)
            inc = fine.increments()
            # coarse increments read off the fine grid are the coarse increments, bit for bit
            coupled &= np.array_equal(fine.values[2::2] - fine.values[:-2:2], g.increments())
            # child sums telescope to them up to float rounding of the extra subtraction
            worst = max(worst, float(np.max(np.abs(inc[0::2] + inc[1::2] - g.increments()))))
            g = fine
    coupled &= worst <= 1e-14
    assert report(7, mean_ok and var_ok and coupled,
                  f"midpoint mean {mids.mean():+.5f}, var {mids.var(ddof=1):.5f}; coupling exact: {coupled} "
                  f"(max child-sum rounding {worst:.1e})")


def test_8_unbiasedness(report):
    values, _, _ = UnbiasedSampler(Problem(gbm(), Scheme.MILSTEIN), LevelDistribution(1.5), SEED).batch(0, 100_000)
    se = values.std(ddof=1) / math.sqrt(values.size)
    z = (values.mean() - 1.0512711) / se
    assert report(8, abs(z) <= 4, f"mean Z {values.mean():.6f} vs e^0.05, {z:+.2f} standard errors")


def test_9_mlmc_baseline(report):
    t0 = time.perf_counter()
    results = meta_experiment(CIR_M, [5, 2], estimator="mlmc", meta_reps=100, master_seed=SEED)
    elapsed = time.perf_counter() - t0
    ok = elapsed <= 300
    parts = []
    for res in results:
        k = int(res.row.ire_pct)
        eps = k / 100 * 0.04
        ratio = res.row.work_mean / CIR_MLMC_WORK[k]
        ok &= res.row.rmse <= 1.5 * eps and 0.5 <= ratio <= 2.0
        parts.append(f"{k}%: RMSE/eps {res.row.rmse / eps:.2f}, work/reference {ratio:.3f}")
    same = True
    dist = LevelDistribution(1.5)
    for sid in range(2000):
        z = sample_Z(CIR_M, dist, derive_substream(SEED, sid))
        for level in range(1, z.level_count + 1):
            y, _ = coupled_level_sample(level, CIR_M, derive_substream(SEED, sid))
            same &= np.float64(y).tobytes() == np.float64(z.deltas[level - 1]).tobytes()
    assert report(9, bool(ok and same), "; ".join(parts) + f"; coupled == delta bytewise: {same}")


def test_10_determinism(tmp_path, report):
    cfg = tmp_path / "cir.json"
    cfg.write_text('{"model": "cir", "ire_list": [25, 10, 5], "meta_reps": 20}')
    same = True
    for cmd in ("unbiased", "mlmc"):
        outs = []
        for workers in ("1", "4"):
            out = tmp_path / f"{cmd}-{workers}.csv"
            assert run_command([cmd, "--config", str(cfg), "--seed", "1", "--workers", workers,
                                "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        same &= outs[0] == outs[1]
    dirs = []
    for workers in ("1", "3"):
        d = tmp_path / f"tables-{workers}"
        assert run_command(["tables", "--meta-reps", "4", "--seed", "1", "--workers", workers, "--out", str(d)]) == 0
        dirs.append({p.name: p.read_bytes() for p in d.iterdir()})
    same &= dirs[0] == dirs[1]
    assert report(10, same, "unbiased, mlmc and tables CSVs byte-identical across --workers")
