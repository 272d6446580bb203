"""Command-line interface: simulate, train, select-lambda, predict, evaluate, report.

Every subcommand writes into ``--out``. On failure the process exits with a
nonzero status, prints ``pgqr <stage>: error: ...`` on stderr, and leaves a
``FAILED`` marker (stage and message) next to any partial artifacts.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .cde import cde_report, write_report_csv
from .config import ConfigError, RunConfig, load_config
from .data import DataError, Dataset, load_covariates, load_csv, split, write_csv
from .metrics import MetricsReport, aggregate, write_table
from .model import FittedModel
from .pipeline import evaluate, tune
from .rng import substream
from .simulate import KINDS, SimSpec, generate_data, normalize_kind, oracle_for, write_sidecar
from .trainer import TrainingError, train

log = logging.getLogger("pgqr")

METHOD = "PGQR"
EXIT_USAGE = 2
EXIT_FAILURE = 1


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _fail_marker(out: Path, directory: bool) -> Path:
    return out / "FAILED" if directory else out.with_name(out.name + ".FAILED")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_lambda_star(value: str | None, checkpoint: Path) -> float:
    """A number, a path to ``lambda_star.json``, or (default) the file beside the checkpoint."""
    if value is not None:
        try:
            return float(value)
        except ValueError:
            path = Path(value)
    else:
        path = checkpoint.parent / "lambda_star.json"
    if not path.exists():
        raise FileNotFoundError(f"no lambda* given and {path} does not exist; run select-lambda first")
    return float(json.loads(path.read_text())["lambda_star"])


# -- stages -------------------------------------------------------------------

def cmd_simulate(args) -> None:
    spec = SimSpec(args.sim, args.n, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, generate_data(spec))
    write_sidecar(out.with_name(out.name + ".json"), spec)
    log.info("wrote %d rows of simulation %s to %s", spec.n, spec.kind, out)


def cmd_train(args) -> None:
    config = load_config(args.config)
    out = Path(args.out)
    data = load_csv(args.data, args.target)
    train_set, val, test = split(data, config.split, config.seed)
    config.save(out / "config.json")
    write_csv(out / "train.csv", train_set)
    write_csv(out / "val.csv", val)
    write_csv(out / "test.csv", test)
    model, report = train(train_set, config.train)
    model.save(out / "model.npz")
    report.write_csv(out / "train_log.csv")
    log.info("trained on %d rows; checkpoint %s", train_set.n, out / "model.npz")


def cmd_select_lambda(args) -> None:
    config = load_config(args.config)
    model = FittedModel.load(args.checkpoint)
    val = load_csv(args.val, model.target)
    result = tune(model, val, config.pit_draws, model.seed)
    out = Path(args.out)
    result.write_csv(out / "selection.csv")
    _write_json(out / "lambda_star.json", {"lambda_star": result.lambda_star})
    log.info("selected lambda* = %r", result.lambda_star)


def cmd_predict(args) -> None:
    config = load_config(args.config)
    model = FittedModel.load(args.checkpoint)
    lam = _read_lambda_star(args.lambda_star, Path(args.checkpoint))
    points = load_covariates(args.points, model.columns)
    out = Path(args.out)
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "mean", "sd", "lo", "hi", *[f"q{t:g}" for t in config.taus]])
        for i, x in enumerate(points):
            rep = cde_report(model, x, lam, config.samples, substream(model.seed, "xi", i), config.taus, config.level)
            write_report_csv(out / f"point_{i:05d}.csv", rep)
            w.writerow([i, repr(rep.mean), repr(rep.sd), repr(rep.interval[0]), repr(rep.interval[1]),
                        *[repr(float(q)) for q in rep.quantiles]])
    log.info("wrote conditional summaries for %d points", len(points))


def _write_quantile_pmse(path: Path, rows: list[tuple[str, MetricsReport]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sim", "tau", "pmse"])
        for sim, m in rows:
            for t, v in m.quantile_pmse.items():
                w.writerow([sim, f"{t:.10g}", f"{v:.10g}"])


def cmd_evaluate(args) -> None:
    config = load_config(args.config)
    model = FittedModel.load(args.checkpoint)
    lam = _read_lambda_star(args.lambda_star, Path(args.checkpoint))
    test = load_csv(args.test, model.target)
    oracle = None if args.oracle == "none" else oracle_for(args.oracle, config.oracle_draws, model.seed)
    ev = evaluate(model, lam, test, oracle, config.samples, model.seed, config.taus, config.level)
    out = Path(args.out)
    sim = args.oracle
    write_table(out / "metrics.csv", [(METHOD, sim, ev.metrics)])
    if oracle is not None:
        _write_quantile_pmse(out / "quantile_pmse.csv", [(sim, ev.metrics)])
    _write_json(out / "evaluation.json", {"lambda_star": lam, "n_test": test.n,
                                          "crossing_violations": ev.metrics.crossing_violations})
    log.info("coverage %.3f, width %.3f", ev.metrics.coverage, ev.metrics.avg_width)


def run_replicate(config: RunConfig, kind: str, rep: int, out: Path) -> tuple[MetricsReport, float]:
    """simulate -> train -> select-lambda -> evaluate for one replicate."""
    seed = config.seed + rep
    data = generate_data(SimSpec(kind, config.n, seed))
    train_set, val, test = split(data, config.split, seed)
    model, _ = train(train_set, config.with_seed(seed).train)
    selection = tune(model, val, config.pit_draws, seed)
    oracle = oracle_for(kind, config.oracle_draws, seed)
    ev = evaluate(model, selection.lambda_star, test, oracle, config.samples, seed, config.taus, config.level)
    out.mkdir(parents=True, exist_ok=True)
    selection.write_csv(out / "selection.csv")
    with (out / "cde.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "y", "mean", "sd", "lo", "hi", *[f"q{t:g}" for t in config.taus]])
        for i, (r, y) in enumerate(zip(ev.reports, test.y)):
            w.writerow([i, repr(float(y)), repr(r.mean), repr(r.sd), repr(r.interval[0]), repr(r.interval[1]),
                        *[repr(float(q)) for q in r.quantiles]])
    return ev.metrics, selection.lambda_star


def cmd_report(args) -> None:
    config = load_config(args.config)
    replicates = args.replicates if args.replicates is not None else config.replicates
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    out = Path(args.out)
    config.save(out / "config.json")
    table, per_rep = [], []
    for kind in config.sims:
        metrics = []
        for rep in range(replicates):
            log.info("simulation %s, replicate %d/%d", kind, rep + 1, replicates)
            m, lam = run_replicate(config, kind, rep, out / f"sim{kind}" / f"rep{rep:02d}")
            metrics.append(m)
            per_rep.append((kind, rep, lam, m))
        table.append((METHOD, kind, aggregate(metrics)))
    write_table(out / "table.csv", table)
    _write_quantile_pmse(out / "quantile_pmse.csv", [(sim, m) for _, sim, m in table])
    with (out / "replicates.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sim", "replicate", "lambda_star", "pmse_mean", "pmse_sd", "coverage", "width", "crossings"])
        for kind, rep, lam, m in per_rep:
            w.writerow([kind, rep, f"{lam:.10g}", f"{m.pmse_mean:.10g}", f"{m.pmse_sd:.10g}",
                        f"{m.coverage:.10g}", f"{m.avg_width:.10g}", m.crossing_violations])


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgqr", description="Penalised generative quantile regression.")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated dataset as CSV")
    p.add_argument("--sim", required=True, type=normalize_kind, metavar="{" + "|".join(KINDS) + "}")
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path; a JSON sidecar is written beside it")
    p.set_defaults(func=cmd_simulate, out_is_dir=False)

    p = sub.add_parser("train", help="split a CSV and fit the generator")
    p.add_argument("--data", required=True)
    p.add_argument("--target", default="y")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train, out_is_dir=True)

    p = sub.add_parser("select-lambda", help="choose lambda* on validation data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select_lambda, out_is_dir=True)

    p = sub.add_parser("predict", help="conditional density summaries at new points")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lambda-star", help="value or lambda_star.json; default: beside the checkpoint")
    p.add_argument("--points", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict, out_is_dir=True)

    p = sub.add_parser("evaluate", help="coverage, width and PMSE on test data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lambda-star")
    p.add_argument("--test", required=True)
    p.add_argument("--oracle", default="none", type=lambda s: s if s == "none" else normalize_kind(s),
                   help="simulation kind whose true conditional law is known, or 'none'")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate, out_is_dir=True)

    p = sub.add_parser("report", help="replicated benchmark table over simulations")
    p.add_argument("--config")
    p.add_argument("--replicates", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report, out_is_dir=True)
    return parser


_EXPECTED = (StageError, ConfigError, DataError, TrainingError, ValueError, OSError, KeyError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    stage = args.command
    marker = _fail_marker(out, args.out_is_dir)
    try:
        if args.out_is_dir:
            out.mkdir(parents=True, exist_ok=True)
        if marker.exists():
            marker.unlink()
        args.func(args)
    except _EXPECTED as exc:
        stage = getattr(exc, "stage", stage)
        message = f"{type(exc).__name__}: {exc}"
        print(f"pgqr {stage}: error: {message}", file=sys.stderr)
        try:
            marker.parent.mkdir(parents=True, exist_ok=True)
            marker.write_text(f"stage: {stage}\n{message}\n")
        except OSError:
            pass
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
