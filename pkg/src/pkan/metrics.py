"""Point and probabilistic forecast evaluation.

Point metrics are computed w.r.t. the predictive median for probabilistic
models and the raw output for point-forecast models. Coverage is one-sided
(fraction of truths at or below the level-alpha quantile); FIC is the
empirical mass inside the central interval of nominal level alpha.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import likelihood as lk

QUANTILE_LEVELS = (0.1, 0.5, 0.9)


@dataclass
class EvalRecords:
    """Aligned per-step truths and forecasts, flattened over windows/steps."""

    y: np.ndarray
    family: str | None = None  # None => point forecasts
    point: np.ndarray | None = None
    mu: np.ndarray | None = None
    sigma: np.ndarray | None = None
    nu: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.y.size == 0:
            raise ValueError("EvalRecords: empty record set")
        if self.family is None:
            if self.point is None or len(self.point) != len(self.y):
                raise ValueError("point forecasts misaligned with truths")
        else:
            if self.mu is None or self.sigma is None:
                raise ValueError("probabilistic records need mu and sigma")
            if self.family == lk.STUDENT_T and self.nu is None:
                raise ValueError("student_t records need nu")

    @property
    def is_probabilistic(self):
        return self.family is not None

    def __len__(self):
        return len(self.y)

    def quantile(self, level):
        if not self.is_probabilistic:
            raise ValueError("quantiles undefined for point forecasts")
        return lk.quantile_arrays(self.family, self.mu, self.sigma, self.nu, level)

    def median_or_point(self):
        if self.is_probabilistic:
            return self.quantile(0.5)
        return self.point


@dataclass
class MetricsReport:
    mse: float
    mae: float
    rmse: float
    sample_count: int
    crps: float | None = None
    ql: dict | None = None
    cov: dict | None = None
    fic: dict | None = None

    def to_dict(self):
        out = {
            "mse": self.mse,
            "mae": self.mae,
            "rmse": self.rmse,
            "sample_count": self.sample_count,
        }
        if self.crps is not None:
            out["crps"] = self.crps
            out["ql"] = {str(k): v for k, v in self.ql.items()}
            out["cov"] = {str(k): v for k, v in self.cov.items()}
            out["fic"] = {str(k): v for k, v in self.fic.items()}
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @staticmethod
    def csv_header():
        cols = ["mse", "mae", "rmse", "crps"]
        cols += [f"ql_{a}" for a in QUANTILE_LEVELS]
        cols += [f"cov_{a}" for a in QUANTILE_LEVELS]
        cols += [f"fic_{a}" for a in QUANTILE_LEVELS]
        return cols + ["sample_count"]

    def csv_row(self):
        def fmt(v):
            return "" if v is None else repr(v)

        row = [fmt(self.mse), fmt(self.mae), fmt(self.rmse)]
        if self.crps is None:
            row += [""] * 10
        else:
            row.append(fmt(self.crps))
            row += [fmt(self.ql[a]) for a in QUANTILE_LEVELS]
            row += [fmt(self.cov[a]) for a in QUANTILE_LEVELS]
            row += [fmt(self.fic[a]) for a in QUANTILE_LEVELS]
        return row + [str(self.sample_count)]


def point_metrics(records: EvalRecords):
    pred = records.median_or_point()
    err = pred - records.y
    mse = float(np.mean(err * err))
    mae = float(np.mean(np.abs(err)))
    return mse, mae, float(np.sqrt(mse))


def pinball(q_pred, y, alpha):
    diff = np.asarray(y, dtype=np.float64) - q_pred
    return np.where(diff >= 0, alpha * diff, (alpha - 1.0) * diff)


def quantile_loss(records: EvalRecords, alpha):
    return float(np.mean(pinball(records.quantile(alpha), records.y, alpha)))


def coverage(records: EvalRecords, alpha):
    return float(np.mean(records.y <= records.quantile(alpha)))


def fic(records: EvalRecords, alpha):
    lo = records.quantile((1.0 - alpha) / 2.0)
    hi = records.quantile((1.0 + alpha) / 2.0)
    return float(np.mean((records.y >= lo) & (records.y <= hi)))


def crps_mean(records: EvalRecords):
    return float(
        np.mean(
            lk.crps_arrays(records.family, records.mu, records.sigma, records.nu, records.y)
        )
    )


def evaluate(records: EvalRecords) -> MetricsReport:
    mse, mae, rmse = point_metrics(records)
    if not records.is_probabilistic:
        return MetricsReport(mse=mse, mae=mae, rmse=rmse, sample_count=len(records))
    return MetricsReport(
        mse=mse,
        mae=mae,
        rmse=rmse,
        sample_count=len(records),
        crps=crps_mean(records),
        ql={a: quantile_loss(records, a) for a in QUANTILE_LEVELS},
        cov={a: coverage(records, a) for a in QUANTILE_LEVELS},
        fic={a: fic(records, a) for a in QUANTILE_LEVELS},
    )
