#!/usr/bin/env python3
"""
singlab command line: experiment config in, CSV/JSON reports out.

Exit codes: 0 every check passed, 1 a check failed (reports are still
written), 2 configuration or usage error.
"""

import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from singlab import __version__
from singlab.config import (
    SEED_ENV,
    ExperimentConfig,
    load_config,
    resolve_seed,
    resolve_threads,
    schema_json,
)
from singlab.errors import (
    ConfigError,
    DivergenceDetected,
    DivergentCoefficient,
    DomainError,
    QuadratureUnconverged,
    SingularStep,
)
from singlab.init_trainer import fit_init_model, load_init_model, predict_init
from singlab.ledger import RunLedger
from singlab.mixture import MixtureModel
from singlab.output import (
    terminal_header,
    terminal_rows,
    trajectory_rows,
    write_csv_atomic,
    write_json_atomic,
)
from singlab.samplers import run_chain
from singlab.verify import (
    BoundReport,
    CheckResult,
    StatReport,
    bound_sweep,
    brightness_experiment,
    consistency_checks,
    lemma_thresholds,
    lipschitz_probe,
    prop3_check,
)

logger = logging.getLogger("singlab")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


@dataclass
class RunContext:
    config: ExperimentConfig
    model: MixtureModel
    seed: int
    seed_overridden: bool
    threads: int
    output_dir: Path
    progress: bool


# handler result: checks and written files
Outcome = Tuple[List[CheckResult], List[Path]]


def _write_report(ctx: RunContext, stem: str, report: StatReport, extra: Optional[dict] = None) -> List[Path]:
    csv_path = write_csv_atomic(ctx.output_dir / f"{stem}.csv", StatReport.CSV_HEADER, report.rows())
    summary = {"report": report.name, "passed": report.passed, "seed": ctx.seed, "checks": report.summary()}
    summary.update(extra or {})
    json_path = write_json_atomic(ctx.output_dir / f"{stem}_summary.json", summary)
    return [csv_path, json_path]


def cmd_sample(ctx: RunContext) -> Outcome:
    cfg = ctx.config
    sampler = cfg.sampler.model_copy(update={"seed": ctx.seed, "guidance": cfg.effective_guidance})
    init_model = load_init_model(cfg.init_model)
    print(f"Sampling {sampler.chains} chains ({sampler.method.value}, T={sampler.T}, "
          f"init={sampler.init_mode.value}, final={sampler.final_mode.value})...")
    batch = run_chain(ctx.model, sampler, label=cfg.label, init_model=init_model,
                      threads=ctx.threads, progress=ctx.progress)

    d = ctx.model.training_set.d
    outputs = [
        write_csv_atomic(ctx.output_dir / "trajectories.csv", ["chain", "time", "coordinate", "value"],
                         trajectory_rows(batch)),
        write_csv_atomic(ctx.output_dir / "terminal.csv", terminal_header(d), terminal_rows(batch, ctx.model)),
    ]
    nearest = [row[-1] for row in terminal_rows(batch, ctx.model)]
    counts: Dict[str, int] = {}
    for index in nearest:
        counts[str(index)] = counts.get(str(index), 0) + 1
    outputs.append(write_json_atomic(ctx.output_dir / "sample_summary.json", {
        "chains": batch.chains,
        "method": sampler.method.value,
        "seed": ctx.seed,
        "times_recorded": len(batch.times),
        "nearest_counts": counts,
    }))
    print(f"✓ {batch.chains} chains, {len(batch.times)} recorded times each")
    return [], outputs


def cmd_train_init(ctx: RunContext) -> Outcome:
    cfg = ctx.config
    train = cfg.train
    if ctx.seed_overridden:
        train = train.model_copy(update={"seed": ctx.seed})
    ts = ctx.model.training_set
    print(f"Fitting init model ({train.steps} steps, lr={train.lr}, batch={train.batch_size})...")
    model = fit_init_model(ts, train, progress=ctx.progress)

    path = ctx.output_dir / "init_model.json"
    model.save(path)
    loss_rows = (
        (step, key, loss)
        for key, losses in model.loss_history.items()
        for step, loss in enumerate(losses)
    )
    loss_path = write_csv_atomic(ctx.output_dir / "loss.csv", ["step", "class", "loss"], loss_rows)

    report = StatReport(name="train-init")
    for label in [None] + ts.classes():
        fitted = predict_init(model, label)
        distance = float(abs(fitted - ts.class_mean(label)).max())
        key = "unconditional" if label is None else str(label)
        report.add(CheckResult(
            name=f"fit[{key}].distance_to_mean", sample_size=train.steps, statistic=distance,
            threshold=train.tolerance, passed=distance < train.tolerance,
            details={"fitted": fitted.tolist()},
        ))
    return report.checks, [path, loss_path] + _write_report(ctx, "train_init", report)


def cmd_verify_bounds(ctx: RunContext) -> Outcome:
    bounds = ctx.config.verify.bounds
    reports: List[BoundReport] = []
    for spec in bounds.sweeps:
        print(f"Sweeping {spec.which} over {len(spec.values)} values...")
        reports.append(bound_sweep(ctx.model, spec, bounds.quad, ctx.config.label,
                                   threads=ctx.threads, progress=ctx.progress))

    rows = ([r.which] + row for r in reports for row in r.csv_rows())
    csv_path = write_csv_atomic(ctx.output_dir / "bounds.csv", ["which"] + BoundReport.CSV_HEADER, rows)

    report = StatReport(name="bounds")
    for r in reports:
        report.add(CheckResult(
            name=f"{r.which}.fitted_C", sample_size=len(r.retained),
            statistic=r.fitted_C if r.fitted_C is not None else float("nan"),
            details={"flagged": len(r.rows) - len(r.retained)},
        ))
        for trend in (r.trend(p) for p in r.probes()):
            tag = "" if trend["probe"] is None else f"[x_t={trend['probe']:g}]"
            factor = trend["gap_decrease_factor"]
            report.add(CheckResult(
                name=f"{r.which}.gap_to_zero{tag}", sample_size=len(r.rows),
                statistic=factor if factor is not None else float("nan"),
                threshold=r.min_decrease, passed=r.sweep_passed(trend["probe"]),
                details=trend,
            ))

    thresholds = [asdict(lemma_thresholds(ctx.model, s)) for s in bounds.threshold_s]
    extra = {"sweeps": [r.summary() for r in reports], "thresholds": thresholds}
    return report.checks, [csv_path] + _write_report(ctx, "bounds", report, extra)


def cmd_verify_prop3(ctx: RunContext) -> Outcome:
    init_model = load_init_model(ctx.config.init_model)
    report = prop3_check(ctx.model, seed=ctx.seed, spec=ctx.config.verify.prop3, init_model=init_model)
    return report.checks, _write_report(ctx, "prop3", report)


def cmd_verify_consistency(ctx: RunContext) -> Outcome:
    report = consistency_checks(ctx.model, spec=ctx.config.verify.consistency, seed=ctx.seed,
                                label=ctx.config.label, threads=ctx.threads, progress=ctx.progress)
    return report.checks, _write_report(ctx, "consistency", report)


def cmd_lipschitz(ctx: RunContext) -> Outcome:
    report = lipschitz_probe(ctx.model, spec=ctx.config.verify.lipschitz, label=ctx.config.label)
    return report.checks, _write_report(ctx, "lipschitz", report)


def cmd_brightness(ctx: RunContext) -> Outcome:
    init_model = load_init_model(ctx.config.init_model)
    report = brightness_experiment(ctx.model, spec=ctx.config.verify.brightness, seed=ctx.seed,
                                   init_model=init_model, threads=ctx.threads, progress=ctx.progress)
    return report.checks, _write_report(ctx, "brightness", report)


CHECK_COLUMNS = "check, sample_size, statistic, threshold, passed"

COMMANDS: Dict[str, Tuple[Callable[[RunContext], Outcome], str, str]] = {
    "sample": (
        cmd_sample,
        "Run reverse chains",
        "outputs:\n"
        "  trajectories.csv     chain, time, coordinate, value\n"
        "  terminal.csv         chain, label, x0_0..x0_{d-1}, nearest\n"
        "  sample_summary.json  chains, method, seed, times_recorded, nearest_counts",
    ),
    "train-init": (
        cmd_train_init,
        "Fit the t=1 predictor by SGD",
        "outputs:\n"
        "  init_model.json            means (class -> vector), steps, final_loss, loss_history\n"
        "  loss.csv                   step, class, loss\n"
        f"  train_init.csv             {CHECK_COLUMNS}\n"
        "  train_init_summary.json    check -> passed, statistic, threshold",
    ),
    "verify-bounds": (
        cmd_verify_bounds,
        "Sweep L1 gaps between exact and Gaussian densities",
        "outputs:\n"
        "  bounds.csv           which, s, t, probe, gap, error, sigma_s_given_t, alpha_s,\n"
        "                       ratio_sqrt_sigma, ratio_sqrt_alpha, ratio_two_thirds, flagged\n"
        f"  bounds_summary.json  checks ({CHECK_COLUMNS}), sweeps, thresholds",
    ),
    "verify-prop3": (
        cmd_verify_prop3,
        "Check the prediction implied by naive and singular-step initialization",
        f"outputs:\n  prop3.csv           {CHECK_COLUMNS}\n  prop3_summary.json  check -> passed, statistic, threshold",
    ),
    "verify-consistency": (
        cmd_verify_consistency,
        "Check density identities and marginals",
        f"outputs:\n  consistency.csv           {CHECK_COLUMNS}\n"
        "  consistency_summary.json  check -> passed, statistic, threshold",
    ),
    "lipschitz": (
        cmd_lipschitz,
        "Probe score derivatives as t -> 0",
        f"outputs:\n  lipschitz.csv           {CHECK_COLUMNS}\n"
        "  lipschitz_summary.json  check -> passed, statistic, threshold",
    ),
    "brightness": (
        cmd_brightness,
        "Compare initializations on the brightness toy set",
        f"outputs:\n  brightness.csv           {CHECK_COLUMNS}\n"
        "  brightness_summary.json  check -> passed, statistic, threshold",
    ),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", type=str, help="Experiment config JSON")
    common.add_argument("--threads", type=int, default=None, help="Worker threads (default: config, then CPU count)")
    common.add_argument("--seed", type=int, default=None,
                        help=f"Master seed (overrides {SEED_ENV} and the config)")
    common.add_argument("--ledger", type=str, default=None,
                        help="Run ledger database (default: <output_dir>/runs.db)")
    common.add_argument("--no-ledger", action="store_true", help="Do not record the run")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    common.add_argument("--no-progress", action="store_true", help="Hide progress bars")

    parser = argparse.ArgumentParser(
        prog="singlab",
        description="Closed-form diffusion experiments on finite training sets",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text, epilog) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                       epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub.add_parser("schema", help="Print the config JSON schema", description="Print the config JSON schema",
                   epilog="outputs: the JSON schema on standard output",
                   formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def _print_checks(checks: List[CheckResult]) -> int:
    for check in checks:
        print(check.summary_line())
    failed = [c for c in checks if c.passed is False]
    judged = [c for c in checks if c.passed is not None]
    if failed:
        print(f"✗ {len(failed)} of {len(judged)} checks failed")
        return EXIT_CHECK_FAILED
    if judged:
        print(f"✓ all {len(judged)} checks passed")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "schema":
        print(schema_json())
        return EXIT_OK

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if not args.config:
        print(f"✗ singlab {args.command}: --config is required", file=sys.stderr)
        return EXIT_USAGE

    try:
        config = load_config(args.config)
        seed = resolve_seed(config, args.seed)
        threads = resolve_threads(config, args.threads)
        model = config.build_model()
    except (ConfigError, DomainError) as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_USAGE

    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(
        config=config,
        model=model,
        seed=seed,
        seed_overridden=args.seed is not None or bool(os.getenv(SEED_ENV)),
        threads=threads,
        output_dir=output_dir,
        progress=not args.no_progress,
    )
    print(f"✓ Config loaded ({args.config}; N={model.training_set.N}, d={model.training_set.d}, "
          f"seed={seed}, threads={threads})")

    ledger = None
    run_id = None
    if not args.no_ledger:
        ledger = RunLedger(db_path=args.ledger or str(output_dir / "runs.db"))
        run_id = ledger.start_run(args.command, config.model_dump_json(), seed, threads)

    handler = COMMANDS[args.command][0]
    checks: List[CheckResult] = []
    outputs: List[Path] = []
    try:
        checks, outputs = handler(ctx)
        code = _print_checks(checks)
    except (SingularStep, DivergentCoefficient) as e:
        print(f"✗ {e}", file=sys.stderr)
        print("  the t=1 step needs a ybar-based method or an init mode that skips it", file=sys.stderr)
        code = EXIT_USAGE
    except (ConfigError, DomainError, DivergenceDetected) as e:
        print(f"✗ {e}", file=sys.stderr)
        code = EXIT_USAGE
    except QuadratureUnconverged as e:
        print(f"✗ {e}", file=sys.stderr)
        code = EXIT_CHECK_FAILED

    logger.info("%s finished with exit code %d", args.command, code)
    for path in outputs:
        print(f"  → {path}")
    if ledger is not None:
        ledger.record_checks(run_id, checks)
        ledger.finish_run(run_id, code, [str(p) for p in outputs])
        ledger.close()
    return code


if __name__ == "__main__":
    sys.exit(main())
