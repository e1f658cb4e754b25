"""Shared plumbing between the CLI subcommands: per-beam training runs and
rolling test-span evaluation using true history as context."""

from __future__ import annotations

import numpy as np

from . import data as dt
from . import training as tr
from .metrics import EvalRecords
from .nets import ModelConfig, ModelState, build_model, predict

VARIANTS = (
    ("p_kan", "gaussian"),
    ("p_kan", "student_t"),
    ("p_mlp", "gaussian"),
    ("p_mlp", "student_t"),
    ("kan_pf", "none"),
    ("mlp_pf", "none"),
)


def variant_label(family, likelihood):
    return family if likelihood == "none" else f"{family}_{likelihood}"


def train_on_beam(config: ModelConfig, series: dt.TimeSeries, split_spec: dt.SplitSpec,
                  train_config: tr.TrainConfig):
    train_ts, _ = dt.split(series, split_spec)
    standardizer = dt.fit_standardizer(train_ts)
    contexts, targets = dt.make_windows(train_ts, config.context_len, config.horizon)
    ctx_std, tgt_std = tr.standardize_windows(contexts, targets, standardizer)
    state = build_model(config)
    state.standardizer = standardizer
    return tr.train(state, ctx_std, tgt_std, train_config)


def rolling_forecasts(state: ModelState, series: dt.TimeSeries,
                      split_spec: dt.SplitSpec, stride=1):
    """Forecast over the test span, re-anchoring on true history every
    `stride` hours. stride=1 is the metrics mode; stride=horizon covers each
    test step exactly once (allocation mode)."""
    cfg = state.config
    values = series.values
    test_start = split_spec.train_hours
    test_end = test_start + split_spec.test_hours
    if test_start < cfg.context_len:
        raise dt.DataError(
            f"beam {series.beam_id}: training span shorter than the context window"
        )
    outputs = []
    origins = []
    for t0 in range(test_start, test_end - cfg.horizon + 1, stride):
        context = values[t0 - cfg.context_len : t0]
        outputs.append(predict(state, context))
        origins.append(t0)
    if not outputs:
        raise dt.DataError(f"beam {series.beam_id}: test span shorter than horizon")
    return origins, outputs


def records_from_forecasts(state: ModelState, series: dt.TimeSeries, origins, outputs):
    cfg = state.config
    h = cfg.horizon
    y = np.concatenate([series.values[t0 : t0 + h] for t0 in origins])
    if not cfg.is_probabilistic:
        point = np.concatenate(outputs)
        return EvalRecords(y=y, point=point)
    mu = np.concatenate([d.mu for d in outputs])
    sigma = np.concatenate([d.sigma for d in outputs])
    nu = None
    if outputs[0].nu is not None:
        nu = np.concatenate([d.nu for d in outputs])
    return EvalRecords(y=y, family=cfg.likelihood, mu=mu, sigma=sigma, nu=nu)


def rolling_records(state: ModelState, series: dt.TimeSeries,
                    split_spec: dt.SplitSpec, stride=1) -> EvalRecords:
    origins, outputs = rolling_forecasts(state, series, split_spec, stride)
    return records_from_forecasts(state, series, origins, outputs)


def merge_records(record_list):
    """Concatenate per-beam record sets of one model variant."""
    first = record_list[0]
    y = np.concatenate([r.y for r in record_list])
    if not first.is_probabilistic:
        return EvalRecords(y=y, point=np.concatenate([r.point for r in record_list]))
    nu = None
    if first.nu is not None:
        nu = np.concatenate([r.nu for r in record_list])
    return EvalRecords(
        y=y,
        family=first.family,
        mu=np.concatenate([r.mu for r in record_list]),
        sigma=np.concatenate([r.sigma for r in record_list]),
        nu=nu,
    )
