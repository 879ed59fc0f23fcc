"""Batch command line: ``unbiased``, ``mlmc``, ``diagnose``, ``tables``.

Exit codes: 0 success, 1 configuration error, 2 runtime/diagnostic failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, config_from_dict, parse_config
from .csvio import render_csv
from .diagnostics import run_diagnostics
from .harness import UnknownTruthError, meta_experiment, true_value
from .mlmc import MlmcLevelCapError
from .unbiased import DivergentWorkError, LevelDistribution

log = logging.getLogger("unbiased_sde")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
TABLES = (
    ("table1_gbm_unbiased.csv", "gbm", "unbiased"),
    ("table2_gbm_mlmc.csv", "gbm", "mlmc"),
    ("table3_cir_unbiased.csv", "cir", "unbiased"),
    ("table4_cir_mlmc.csv", "cir", "mlmc"),
)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output path (a directory for `tables`)")
    common.add_argument("--workers", type=int, default=1, help="parallel meta-replications")
    common.add_argument("-v", "--verbose", action="store_true")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--config", help="JSON experiment config")
    run.add_argument("--override-gamma-check", action="store_true",
                     help="run even if gamma is outside (1, 2r)")

    p = argparse.ArgumentParser(prog="unbiased-sde", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("unbiased", parents=[common, run], help="unbiased estimator table")
    sub.add_parser("mlmc", parents=[common, run], help="MLMC baseline table")
    sub.add_parser("diagnose", parents=[common], help="strong order, bridge, level law, work checks")
    tables = sub.add_parser("tables", parents=[common, run], help="reproduce all four tables")
    tables.add_argument("--full", action="store_true", help="include the 0.5%% rows")
    tables.add_argument("--meta-reps", type=int, default=100)
    return p


def _load_config(args, estimator: str) -> ExperimentConfig:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
        # estimator comes from the subcommand; check gamma only once it is known
        cfg = parse_config(text, override_gamma_check=True)
        doc = cfg.to_dict()
    else:
        doc = {"model": "cir"}
    doc["estimator"] = estimator
    if args.seed is not None:
        doc["master_seed"] = args.seed
    if args.override_gamma_check:
        doc["override_gamma_check"] = True
    return config_from_dict(doc)


def metadata(cfg: ExperimentConfig, alpha: float) -> dict:
    meta = {
        "seed": cfg.master_seed,
        "config_hash": cfg.digest(),
        "estimator": cfg.estimator,
        "model": cfg.model,
        "scheme": cfg.scheme,
        "functional": cfg.functional.kind if cfg.functional.kind == "terminal"
        else f"{cfg.functional.kind}(strike={cfg.functional.strike}, rate={cfg.functional.rate})",
        "true_value": format(alpha, ".12g"),
        "meta_reps": cfg.meta_reps,
    }
    if cfg.estimator == "unbiased":
        meta["gamma"] = cfg.gamma
        meta["n_min"] = cfg.n_min
        try:
            meta["analytic_expected_work"] = format(LevelDistribution(cfg.gamma).expected_work(), ".12g")
        except DivergentWorkError:
            meta["analytic_expected_work"] = "inf"
    else:
        meta["mlmc_initial_samples"] = cfg.mlmc_initial_samples
    return meta


def run_table(cfg: ExperimentConfig, workers: int = 1) -> str:
    problem = cfg.problem()
    alpha = true_value(problem.model, problem.functional, problem.horizon)
    if alpha is None:
        raise UnknownTruthError(f"no closed-form value for {cfg.model}/{cfg.functional.kind}")
    results = meta_experiment(problem, cfg.ire_list, estimator=cfg.estimator, meta_reps=cfg.meta_reps,
                              master_seed=cfg.master_seed, n_min=cfg.n_min, gamma=cfg.gamma,
                              mlmc_initial_samples=cfg.mlmc_initial_samples, workers=workers, alpha=alpha)
    return render_csv([r.row for r in results], metadata(cfg, alpha))


def _write(text: str, out: str | None):
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_table(args, estimator: str) -> int:
    cfg = _load_config(args, estimator)
    _write(run_table(cfg, args.workers), args.out or cfg.output)
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    checks = run_diagnostics(args.seed if args.seed is not None else 1)
    report = "\n".join(c.line() for c in checks) + "\n"
    _write(report, args.out)
    if args.out:
        sys.stdout.write(report)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_RUNTIME


def _cmd_tables(args) -> int:
    base = _load_config(args, "unbiased") if args.config else None
    out_dir = Path(args.out or "tables")
    ire = (25.0, 10.0, 5.0, 2.0, 1.0) + ((0.5,) if args.full else ())
    for name, model, estimator in TABLES:
        doc = {"model": model, "estimator": estimator, "ire_list": list(ire), "meta_reps": args.meta_reps}
        if base is not None:
            doc.update(master_seed=base.master_seed, gamma=base.gamma, n_min=base.n_min,
                       mlmc_initial_samples=base.mlmc_initial_samples)
        if args.seed is not None:
            doc["master_seed"] = args.seed
        if args.override_gamma_check:
            doc["override_gamma_check"] = True
        cfg = config_from_dict(doc)
        log.info("running %s", name)
        text = run_table(cfg, args.workers)
        emit_csv_text(out_dir / name, text)
        sys.stdout.write(f"== {name}\n{text}")
    return EXIT_OK


def emit_csv_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run_command(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "diagnose":
            return _cmd_diagnose(args)
        if args.command == "tables":
            return _cmd_tables(args)
        return _cmd_table(args, args.command)
    except (ConfigError, UnknownTruthError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MlmcLevelCapError, DivergentWorkError, RuntimeError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(run_command())
