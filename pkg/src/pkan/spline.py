"""Clamped uniform B-spline bases and the learnable connection function.

The connection function phi(x) = w * silu(x) + s * sum_r c_r * B_r(x) is the
edge primitive of every KAN layer. The spline path sees x clamped to the
grid; the silu path sees the raw value so gradients survive off-grid inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


class SplineSpecError(ValueError):
    """Invalid spline grid description."""


@dataclass(frozen=True)
class SplineSpec:
    """Clamped knot grid: `degree`-fold repeated end knots, uniform interior."""

    degree: int = 3
    grid_min: float = -3.0
    grid_max: float = 3.0
    num_basis: int = 8
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.degree < 0:
            raise SplineSpecError(f"degree must be >= 0, got {self.degree}")
        if not self.grid_min < self.grid_max:
            raise SplineSpecError(
                f"grid_min must be < grid_max, got [{self.grid_min}, {self.grid_max}]"
            )
        if self.num_basis < self.degree + 1:
            raise SplineSpecError(
                f"num_basis must be >= degree+1, got {self.num_basis} < {self.degree + 1}"
            )
        k, r = self.degree, self.num_basis
        interior = np.linspace(self.grid_min, self.grid_max, r - k + 1)
        knots = np.concatenate(
            [np.full(k, self.grid_min), interior, np.full(k, self.grid_max)]
        )
        object.__setattr__(self, "knots", knots)
        # reciprocal knot-span widths per recursion degree, 0 where the span
        # is empty (repeated end knots); avoids per-eval divide guards
        recips = []
        for d in range(1, k + 1):
            n = len(knots) - d - 1
            left_den = knots[d : d + n] - knots[:n]
            right_den = knots[d + 1 : d + 1 + n] - knots[1 : 1 + n]
            with np.errstate(divide="ignore"):
                lr = np.where(left_den != 0, 1.0 / np.where(left_den == 0, 1, left_den), 0.0)
                rr = np.where(right_den != 0, 1.0 / np.where(right_den == 0, 1, right_den), 0.0)
            recips.append((lr, rr))
        object.__setattr__(self, "_recips", tuple(recips))

    def basis_and_derivative(self, x):
        """Evaluate all basis functions and their x-derivatives.

        x: array of any shape, assumed already clamped to the grid.
        Returns (B, dB), each of shape x.shape + (num_basis,).
        """
        k, r = self.degree, self.num_basis
        t = self.knots
        orig = np.asarray(x, dtype=np.float64)
        xs = np.atleast_1d(orig)
        xe = xs[..., None]
        # degree 0: interval indicators, right end closed on the last span
        b = ((xe >= t[:-1]) & (xe < t[1:])).astype(np.float64)
        at_max = xs == self.grid_max
        if np.any(at_max):
            b[at_max, :] = 0.0
            b[at_max, r - 1] = 1.0
        b_prev = b
        for d in range(1, k + 1):
            n = len(t) - d - 1
            left_recip, right_recip = self._recips[d - 1]
            b_prev = b
            b = ((xe - t[:n]) * left_recip) * b_prev[..., :n] + (
                (t[d + 1 : d + 1 + n] - xe) * right_recip
            ) * b_prev[..., 1 : n + 1]
        out_shape = orig.shape + (r,)
        if k == 0:
            return b.reshape(out_shape), np.zeros(out_shape)
        # derivative from the degree k-1 basis, reusing the last recursion recips
        left_recip, right_recip = self._recips[k - 1]
        db = k * (
            b_prev[..., :r] * left_recip[:r] - b_prev[..., 1 : r + 1] * right_recip[:r]
        )
        return b.reshape(out_shape), db.reshape(out_shape)

    def basis(self, x):
        return self.basis_and_derivative(x)[0]


def basis_eval(spec: SplineSpec, x: float) -> np.ndarray:
    """Basis vector at a single point; x is clamped to the grid first."""
    if not np.isfinite(x):
        raise ad.DomainError(f"basis_eval: non-finite input {x}")
    xc = float(np.clip(x, spec.grid_min, spec.grid_max))
    return spec.basis(np.float64(xc))


def basis_node(spec: SplineSpec, x) -> ad.Node:
    """Differentiable basis evaluation: Node of shape x.shape + (num_basis,).

    Gradient w.r.t. x uses the analytic basis derivative; the clamp to the
    grid contributes zero gradient strictly outside [grid_min, grid_max].
    """
    xv = x.value if ad.is_node(x) else np.asarray(x, dtype=np.float64)
    xc = np.clip(xv, spec.grid_min, spec.grid_max)
    b, db = spec.basis_and_derivative(xc)
    if not ad.is_node(x):
        return b
    inside = (xv >= spec.grid_min) & (xv <= spec.grid_max)
    masked = db * inside[..., None]

    def backward_rule(g):
        x._accumulate((g * masked).sum(axis=-1))

    return ad.custom(b, (x,), backward_rule)


@dataclass
class ConnectionParams:
    """Learnable edge parameters: base weight, spline weight, coefficients."""

    w: ad.Node
    s: ad.Node
    c: ad.Node  # shape (num_basis,)

    @classmethod
    def create(cls, w, s, c):
        c = np.asarray(c, dtype=np.float64)
        return cls(ad.tensor(w), ad.tensor(s), ad.tensor(c))


def phi(spec: SplineSpec, params: ConnectionParams, x):
    """Single-edge connection function; x may be a Node or a plain value."""
    if params.c.value.shape != (spec.num_basis,):
        raise SplineSpecError(
            f"coefficient length {params.c.value.shape} does not match "
            f"num_basis {spec.num_basis}"
        )
    base = ad.mul(params.w, ad.silu(x))
    bvals = basis_node(spec, x)
    spline_sum = ad.einsum("...r,r->...", bvals, params.c)
    return ad.add(base, ad.mul(params.s, spline_sum))
