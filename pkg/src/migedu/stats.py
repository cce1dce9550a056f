"""Numeric kernels: compensated sums, weighted least squares, correlation,
power fits and Nadaraya-Watson kernel smoothing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class NeumaierSum:
    """Element-wise compensated accumulator over a fixed-shape float array.

    Partial sums from different workers merge with ``merge``; the result is
    insensitive to how the data were partitioned, to well below 1e-9
    relative.
    """

    __slots__ = ("total", "comp")

    def __init__(self, shape):
        self.total = np.zeros(shape, dtype=np.float64)
        self.comp = np.zeros(shape, dtype=np.float64)

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        t = self.total + values
        big = np.abs(self.total) >= np.abs(values)
        self.comp += np.where(big, (self.total - t) + values, (values - t) + self.total)
        self.total = t

    def merge(self, other: "NeumaierSum") -> None:
        self.add(other.total)
        self.add(other.comp)

    @property
    def value(self) -> np.ndarray:
        return self.total + self.comp


def _fsum(a: np.ndarray) -> float:
    return math.fsum(np.asarray(a, dtype=np.float64).ravel().tolist())


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    weight_total: float
    slope_stderr: float = math.nan

    def predict(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
            "weight_total": self.weight_total,
            "slope_stderr": self.slope_stderr,
        }


@dataclass(frozen=True)
class PowerFit:
    """``y = coefficient * x ** exponent``; ``r_squared`` is measured in log-log space."""

    coefficient: float
    exponent: float
    r_squared: float
    n_points: int

    def predict(self, x):
        return self.coefficient * np.asarray(x, dtype=float) ** self.exponent

    def to_dict(self) -> dict:
        return {
            "coefficient": self.coefficient,
            "exponent": self.exponent,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
        }


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    n: int


def _as_points(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(list(points), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be a sequence of (x, y) pairs")
    return arr[:, 0], arr[:, 1]


def weighted_ols(points: Sequence[tuple[float, float]], weights: Sequence[float] | None = None) -> LinearFit:
    """Fit ``y = intercept + slope * x`` minimising the weighted squared residuals.

    ``r_squared`` uses the weighted total sum of squares. The slope standard
    error treats the weights as relative precisions, so it does not change
    when all weights are multiplied by a constant.
    """
    x, y = _as_points(points)
    w = np.ones_like(x) if weights is None else np.asarray(list(weights), dtype=np.float64)
    if w.shape != x.shape:
        raise ValueError("weights and points differ in length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise ValueError("non-finite input")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    keep = w > 0
    x, y, w = x[keep], y[keep], w[keep]
    if len(x) == 0:
        raise ValueError("all weights are zero")
    if len(x) < 2:
        raise ValueError("need at least two points with positive weight")
    if np.all(x == x[0]):
        raise ValueError("no x variation")
    wt = _fsum(w)
    xbar = _fsum(w * x) / wt
    ybar = _fsum(w * y) / wt
    dx = x - xbar
    dy = y - ybar
    sxx = _fsum(w * dx * dx)
    sxy = _fsum(w * dx * dy)
    if sxx <= 0.0:
        raise ValueError("no x variation")
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    ssr = _fsum(w * resid * resid)
    sst = _fsum(w * dy * dy)
    if sst > 0.0:
        r2 = min(1.0, max(0.0, 1.0 - ssr / sst))
    else:
        # Constant y is reproduced exactly by the fitted line.
        r2 = 1.0
    n = len(x)
    stderr = math.sqrt(ssr / (n - 2) / sxx) if n > 2 else math.nan
    return LinearFit(slope, intercept, r2, n, wt, stderr)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> CorrelationResult:
    x = np.asarray(list(xs), dtype=np.float64)
    y = np.asarray(list(ys), dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("series differ in length")
    if len(x) < 2:
        raise ValueError("need at least two pairs")
    dx = x - _fsum(x) / len(x)
    dy = y - _fsum(y) / len(y)
    sxx, syy = _fsum(dx * dx), _fsum(dy * dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("constant series")
    r = _fsum(dx * dy) / math.sqrt(sxx * syy)
    return CorrelationResult(max(-1.0, min(1.0, r)), len(x))


def power_fit(points: Sequence[tuple[float, float]]) -> PowerFit:
    """Fit ``y = a * x**b`` by ordinary least squares on ``(ln x, ln y)``."""
    x, y = _as_points(points)
    if len(x) < 2:
        raise ValueError("need at least two points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power fit needs strictly positive coordinates")
    fit = weighted_ols(np.column_stack([np.log(x), np.log(y)]))
    return PowerFit(math.exp(fit.intercept), fit.slope, fit.r_squared, fit.n_points)


def kernel_smooth(xs, ys, bandwidth: float, grid) -> np.ndarray:
    """Nadaraya-Watson estimate of ``ys`` at ``grid`` with a Gaussian kernel.

    Each output is a convex combination of the inputs, so it stays within
    ``[min(ys), max(ys)]``. Kernel weights are rescaled per grid point
    before exponentiation, so very small bandwidths do not underflow.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    g = np.asarray(grid, dtype=np.float64)
    if x.size == 0 or g.size == 0:
        raise ValueError("empty input")
    if x.shape != y.shape:
        raise ValueError("xs and ys differ in length")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    if np.any(np.diff(x) <= 0):
        raise ValueError("xs must be strictly increasing")
    if g.min() < x[0] or g.max() > x[-1]:
        raise ValueError("grid extends beyond the data range")
    z = (g[:, None] - x[None, :]) / bandwidth
    logk = -0.5 * z * z
    logk -= logk.max(axis=1, keepdims=True)
    k = np.exp(logk)
    out = (k @ y) / k.sum(axis=1)
    return np.clip(out, y.min(), y.max())
