"""Dynamic quantile thresholding and the savings / risk decomposition.

Allocation policies turn per-step forecasts into integer PRB allocations
capped at the static budget M (the maximum training-period demand). The
decomposition is constructed so that saved + overprovisioned + served equals
M * T bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .metrics import EvalRecords

STATIC_MAX = "static_max"
DYNAMIC_QUANTILE = "dynamic_quantile"
POINT = "point"


@dataclass(frozen=True)
class ThresholdPolicy:
    kind: str = DYNAMIC_QUANTILE
    quantile_level: float = 0.99

    def __post_init__(self):
        if self.kind not in (STATIC_MAX, DYNAMIC_QUANTILE, POINT):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not 0.0 < self.quantile_level < 1.0:
            raise ValueError(f"quantile level {self.quantile_level} outside (0, 1)")


@dataclass
class AllocationReport:
    policy: ThresholdPolicy
    budget: int
    steps: int
    allocations: np.ndarray
    truths: np.ndarray
    saved_total: float
    overprov_total: float
    served_total: float
    underprov_total: float
    savings_frac: float
    overprov_frac: float
    underprov_frac: float
    underprov_event_rate: float

    def to_dict(self):
        return {
            "policy": self.policy.kind,
            "quantile_level": self.policy.quantile_level,
            "budget": self.budget,
            "steps": self.steps,
            "saved_total": self.saved_total,
            "overprov_total": self.overprov_total,
            "served_total": self.served_total,
            "underprov_total": self.underprov_total,
            "savings_frac": self.savings_frac,
            "overprov_frac": self.overprov_frac,
            "underprov_frac": self.underprov_frac,
            "underprov_event_rate": self.underprov_event_rate,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write_steps_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "y", "allocation", "saved", "overprov", "underprov"])
            for i, (y, a) in enumerate(zip(self.truths, self.allocations)):
                over = max(0.0, float(a) - float(y))
                under = max(0.0, float(y) - float(a))
                writer.writerow(
                    [i, repr(float(y)), int(a), int(self.budget - a), repr(over), repr(under)]
                )


def static_budget(train_values) -> int:
    """Static-max baseline: training-period peak demand, ceiled to integer."""
    budget = int(math.ceil(float(np.max(train_values))))
    if budget <= 0:
        raise ValueError(f"static budget must be positive, got {budget}")
    return budget


def allocate(policy: ThresholdPolicy, records: EvalRecords, budget: int) -> AllocationReport:
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    y = records.y
    n = len(y)
    if policy.kind == STATIC_MAX:
        alloc = np.full(n, budget, dtype=np.int64)
    else:
        if policy.kind == DYNAMIC_QUANTILE:
            if not records.is_probabilistic:
                raise ValueError("dynamic_quantile policy needs probabilistic forecasts")
            level = records.quantile(policy.quantile_level)
        else:
            level = np.asarray(records.median_or_point(), dtype=np.float64)
        alloc = np.minimum(np.ceil(np.maximum(level, 0.0)), budget).astype(np.int64)
    saved = (budget - alloc).astype(np.float64)
    overprov = np.maximum(0.0, alloc - y)
    served = alloc - overprov  # == min(alloc, y), keeps the budget identity exact
    underprov = np.maximum(0.0, y - alloc)
    total_demand = float(y.sum())
    return AllocationReport(
        policy=policy,
        budget=budget,
        steps=n,
        allocations=alloc,
        truths=y,
        saved_total=float(saved.sum()),
        overprov_total=float(overprov.sum()),
        served_total=float(served.sum()),
        underprov_total=float(underprov.sum()),
        savings_frac=float(saved.sum()) / (budget * n),
        overprov_frac=float(overprov.sum()) / (budget * n),
        underprov_frac=float(underprov.sum()) / total_demand if total_demand > 0 else 0.0,
        underprov_event_rate=float(np.mean(y > alloc)),
    )


@dataclass
class PooledReport:
    """Totals aggregated over per-beam reports (budgets may differ per beam)."""

    steps: int
    budget_hours: float  # sum of M_b * T_b over beams
    saved_total: float
    overprov_total: float
    served_total: float
    underprov_total: float
    savings_frac: float
    overprov_frac: float
    underprov_frac: float
    underprov_event_rate: float

    def to_dict(self):
        return {
            "steps": self.steps,
            "budget_hours": self.budget_hours,
            "saved_total": self.saved_total,
            "overprov_total": self.overprov_total,
            "served_total": self.served_total,
            "underprov_total": self.underprov_total,
            "savings_frac": self.savings_frac,
            "overprov_frac": self.overprov_frac,
            "underprov_frac": self.underprov_frac,
            "underprov_event_rate": self.underprov_event_rate,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def pool_reports(reports) -> PooledReport:
    steps = sum(r.steps for r in reports)
    budget_hours = float(sum(r.budget * r.steps for r in reports))
    saved = sum(r.saved_total for r in reports)
    over = sum(r.overprov_total for r in reports)
    # derive served from the identity so pooled totals stay bit-exact even
    # though float summation order differs from the per-beam reports
    served = budget_hours - saved - over
    under = sum(r.underprov_total for r in reports)
    demand = float(sum(r.truths.sum() for r in reports))
    misses = sum(r.underprov_event_rate * r.steps for r in reports)
    return PooledReport(
        steps=steps,
        budget_hours=budget_hours,
        saved_total=saved,
        overprov_total=over,
        served_total=served,
        underprov_total=under,
        savings_frac=saved / budget_hours,
        overprov_frac=over / budget_hours,
        underprov_frac=under / demand if demand > 0 else 0.0,
        underprov_event_rate=misses / steps,
    )


@dataclass
class ParetoPoint:
    label: str
    savings_frac: float
    underprov_frac: float
    underprov_event_rate: float
    dominated: bool = False


def pareto(labeled_reports) -> list[ParetoPoint]:
    """Dominance on (savings up, underprov_frac down), sorted by savings.

    A point is dominated iff another point has >= savings and <= underprov
    with at least one strict. Output sorted by savings descending, ties by
    label order.
    """
    points = [
        ParetoPoint(
            label=label,
            savings_frac=rep.savings_frac,
            underprov_frac=rep.underprov_frac,
            underprov_event_rate=rep.underprov_event_rate,
        )
        for label, rep in labeled_reports
    ]
    order = sorted(points, key=lambda p: (-p.savings_frac, p.underprov_frac, p.label))
    best_under_higher_savings = math.inf
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and order[j].savings_frac == order[i].savings_frac:
            j += 1
        group = order[i:j]
        group_min_under = min(p.underprov_frac for p in group)
        for p in group:
            dominated_from_above = best_under_higher_savings <= p.underprov_frac
            dominated_in_group = p.underprov_frac > group_min_under
            p.dominated = dominated_from_above or dominated_in_group
        best_under_higher_savings = min(best_under_higher_savings, group_min_under)
        i = j
    return sorted(points, key=lambda p: (-p.savings_frac, p.label))


def write_pareto_csv(path, points):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["label", "savings_frac", "underprov_frac", "underprov_event_rate", "dominated"]
        )
        for p in points:
            writer.writerow(
                [
                    p.label,
                    repr(p.savings_frac),
                    repr(p.underprov_frac),
                    repr(p.underprov_event_rate),
                    int(p.dominated),
                ]
            )
