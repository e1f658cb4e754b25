"""Command-line front end: generate, train, evaluate, allocate, count-params.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import allocation as al
from . import data as dt
from . import pipeline as pl
from . import plots
from .config import POLICY_ALIASES, ConfigFileError, RunConfig, load_run_config
from .metrics import MetricsReport, evaluate as evaluate_records
from .nets import (
    ConfigError,
    DivergenceError,
    ModelConfig,
    count_parameters,
    load_model,
    save_model,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="pkan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="INI run config")
        p.add_argument("--seed", type=int, default=None, help="override base seed")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default=None)

    p = sub.add_parser("generate", help="write a synthetic multi-beam CSV dataset")
    common(p)
    p.add_argument("--beams", type=int, default=None)
    p.add_argument("--length", type=int, default=None, help="hours per beam")

    p = sub.add_parser("train", help="train one model variant (or all) per beam")
    common(p)
    p.add_argument("--data", type=Path, required=True, help="input CSV dataset")
    p.add_argument("--family", default="all",
                   help="p_kan | p_mlp | kan_pf | mlp_pf | all")
    p.add_argument("--likelihood", default=None,
                   help="gaussian | student_t | none (ignored with --family all)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("evaluate", help="metrics table over trained models")
    common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--models", type=Path, required=True, help="directory of .pkan files")
    p.add_argument("--eval-stride", type=int, default=None,
                   help="hours between rolling forecast anchors (default 1)")

    p = sub.add_parser("allocate", help="thresholding reports, figures and Pareto set")
    common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--models", type=Path, required=True)
    p.add_argument("--policy", choices=tuple(POLICY_ALIASES), default=None)
    p.add_argument("--quantile", type=float, default=None)

    p = sub.add_parser("count-params", help="trainable-parameter table")
    common(p)
    return parser


def _load_cfg(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if args.format is not None:
        cfg.output_format = args.format
    if args.seed is not None:
        cfg.model["seed"] = args.seed
        cfg.synthetic["seed"] = args.seed
    if getattr(args, "eval_stride", None) is not None:
        cfg.eval_stride = args.eval_stride
    if getattr(args, "policy", None) is not None:
        cfg.policy_kind = POLICY_ALIASES[args.policy]
    if getattr(args, "quantile", None) is not None:
        cfg.quantile_level = args.quantile
    if getattr(args, "epochs", None) is not None:
        cfg.train["epochs"] = args.epochs
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    return cfg


def cmd_generate(args, cfg: RunConfig):
    if args.beams is not None:
        cfg.beams = args.beams
    if args.length is not None:
        cfg.synthetic["length"] = args.length
    if cfg.beams <= 0:
        raise dt.DataError(f"beam count must be positive, got {cfg.beams}")
    series = []
    for i in range(cfg.beams):
        spec = cfg.synthetic_spec(seed_offset=i, phase=2.0 * math.pi * i / cfg.beams)
        series.append(dt.generate(spec, beam_id=f"beam{i}"))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "dataset.csv"
    dt.save_csv(path, series)
    print(f"wrote {path} ({cfg.beams} beams x {series[0].values.size} hours)")
    return EXIT_OK


def _variants_for(args):
    if args.family == "all":
        return list(pl.VARIANTS)
    family = args.family
    likelihood = args.likelihood
    if likelihood is None:
        likelihood = "none" if family.endswith("_pf") else "gaussian"
    return [(family, likelihood)]


def _train_task(task):
    model_cfg_dict, beam_id, start_iso, values, split_spec, train_cfg = task
    from datetime import datetime

    series = dt.TimeSeries(beam_id, datetime.fromisoformat(start_iso), np.asarray(values))
    config = ModelConfig.from_dict(model_cfg_dict)
    state, log = pl.train_on_beam(config, series, split_spec, train_cfg)
    from .nets import serialize

    return beam_id, serialize(state), log.losses, log.seconds, log.final_checksum


def cmd_train(args, cfg: RunConfig):
    series_list = dt.load_csv(args.data)
    args.out.mkdir(parents=True, exist_ok=True)
    train_cfg = cfg.train_config()
    for family, likelihood in _variants_for(args):
        label = pl.variant_label(family, likelihood)
        tasks = []
        for series in series_list:
            model_cfg = cfg.model_config(family, likelihood)
            tasks.append(
                (
                    model_cfg.to_dict(),
                    series.beam_id,
                    series.start.isoformat(),
                    series.values,
                    cfg.split,
                    train_cfg,
                )
            )
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_train_task, tasks))
        else:
            results = [_train_task(t) for t in tasks]
        for beam_id, blob, losses, seconds, checksum in sorted(results):
            model_path = args.out / f"{label}__{beam_id}.pkan"
            model_path.write_bytes(blob)
            log_path = args.out / f"trainlog_{label}__{beam_id}.csv"
            with open(log_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epoch", "loss", "seconds"])
                for i, (loss, sec) in enumerate(zip(losses, seconds), start=1):
                    writer.writerow([i, repr(loss), f"{sec:.3f}"])
            print(f"trained {label} on {beam_id}: final loss "
                  f"{losses[-1]:.6f}, checksum {checksum[:12]}")
    return EXIT_OK


def _scan_models(models_dir: Path):
    """Group model files by variant label: {label: {beam_id: path}}."""
    groups = {}
    for path in sorted(models_dir.glob("*.pkan")):
        stem = path.stem
        if "__" not in stem:
            raise dt.DataError(f"model file {path.name} does not match label__beam.pkan")
        label, beam = stem.rsplit("__", 1)
        groups.setdefault(label, {})[beam] = path
    if not groups:
        raise dt.DataError(f"no .pkan model files in {models_dir}")
    return groups


def cmd_evaluate(args, cfg: RunConfig):
    series_by_beam = {s.beam_id: s for s in dt.load_csv(args.data)}
    groups = _scan_models(args.models)
    args.out.mkdir(parents=True, exist_ok=True)
    reports = {}
    fic_values = {}
    for label in sorted(groups):
        per_beam = []
        for beam, path in sorted(groups[label].items()):
            if beam not in series_by_beam:
                raise dt.DataError(f"model {path.name}: beam {beam} not in dataset")
            state = load_model(path)
            per_beam.append(
                pl.rolling_records(state, series_by_beam[beam], cfg.split, cfg.eval_stride)
            )
        records = pl.merge_records(per_beam)
        report = evaluate_records(records)
        reports[label] = report
        if report.fic is not None:
            fic_values[label] = [report.fic[a] for a in (0.1, 0.5, 0.9)]
    if cfg.output_format == "json":
        path = args.out / "metrics.json"
        import json

        path.write_text(
            json.dumps(
                {label: reports[label].to_dict() for label in sorted(reports)},
                sort_keys=True,
                indent=2,
            )
        )
    else:
        path = args.out / "metrics.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model"] + MetricsReport.csv_header())
            for label in sorted(reports):
                writer.writerow([label] + reports[label].csv_row())
    if fic_values:
        plots.fic_figure(args.out / "fic.svg", sorted(fic_values),
                         (0.1, 0.5, 0.9), fic_values)
    print(f"wrote {path}")
    for label in sorted(reports):
        r = reports[label]
        print(f"{label}: rmse={r.rmse:.4f}" +
              (f" crps={r.crps:.4f}" if r.crps is not None else ""))
    return EXIT_OK


def _policy_for(label, cfg: RunConfig, probabilistic):
    if cfg.policy_kind == al.DYNAMIC_QUANTILE and not probabilistic:
        return al.ThresholdPolicy(kind=al.POINT, quantile_level=cfg.quantile_level)
    return cfg.threshold_policy()


def cmd_allocate(args, cfg: RunConfig):
    series_by_beam = {s.beam_id: s for s in dt.load_csv(args.data)}
    groups = _scan_models(args.models)
    args.out.mkdir(parents=True, exist_ok=True)
    pooled = []
    for label in sorted(groups):
        beam_reports = []
        for beam, path in sorted(groups[label].items()):
            series = series_by_beam.get(beam)
            if series is None:
                raise dt.DataError(f"model {path.name}: beam {beam} not in dataset")
            state = load_model(path)
            train_ts, _ = dt.split(series, cfg.split)
            budget = al.static_budget(train_ts.values)
            records = pl.rolling_records(state, series, cfg.split,
                                         stride=state.config.horizon)
            policy = _policy_for(label, cfg, records.is_probabilistic)
            report = al.allocate(policy, records, budget)
            beam_reports.append((beam, report, records, state, budget))
            report.write_steps_csv(args.out / f"steps_{label}__{beam}.csv")
        summary = al.pool_reports([rep for _, rep, _, _, _ in beam_reports])
        pooled.append((label, summary))
        (args.out / f"allocation_{label}.json").write_text(summary.to_json())
        _band_figure(args.out, label, cfg, beam_reports[0])
    points = al.pareto(pooled)
    al.write_pareto_csv(args.out / "pareto.csv", points)
    plots.pareto_figure(args.out / "pareto.svg", points)
    for label, summary in pooled:
        print(f"{label}: savings={summary.savings_frac:.3f} "
              f"underprov={summary.underprov_frac:.4f} "
              f"miss_rate={summary.underprov_event_rate:.4f}")
    print(f"wrote {args.out / 'pareto.csv'}")
    return EXIT_OK


def _band_figure(out_dir, label, cfg, beam_entry):
    beam, report, records, state, budget = beam_entry
    if records.is_probabilistic:
        median = records.quantile(0.5)
        lower = records.quantile(0.1)
        upper = records.quantile(0.9)
        threshold = np.minimum(
            np.ceil(np.maximum(records.quantile(cfg.quantile_level), 0.0)), budget
        )
    else:
        median = records.point
        lower = upper = median
        threshold = report.allocations
    series_csv = out_dir / f"bands_{label}__{beam}.csv"
    with open(series_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "y", "median", "q10", "q90", "threshold", "budget"])
        for i in range(len(records.y)):
            writer.writerow(
                [i, repr(float(records.y[i])), repr(float(median[i])),
                 repr(float(lower[i])), repr(float(upper[i])),
                 repr(float(threshold[i])), budget]
            )
    plots.forecast_band_figure(
        out_dir / f"bands_{label}__{beam}.svg",
        records.y, median, lower, upper, threshold, budget,
        f"{label} on {beam}",
    )


def cmd_count_params(args, cfg: RunConfig):
    rows = []
    for family, likelihood in pl.VARIANTS:
        config = cfg.model_config(family, likelihood)
        rows.append((pl.variant_label(family, likelihood), count_parameters(config)))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "param_counts.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "trainable_parameters"])
        writer.writerows(rows)
    print("model,trainable_parameters")
    for label, count in rows:
        print(f"{label},{count}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_cfg(args)
        handler = {
            "generate": cmd_generate,
            "train": cmd_train,
            "evaluate": cmd_evaluate,
            "allocate": cmd_allocate,
            "count-params": cmd_count_params,
        }[args.command]
        return handler(args, cfg)
    except (ConfigFileError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except dt.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    raise SystemExit(main())
