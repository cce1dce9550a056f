"""Smoothing, normalisation and peak extraction for migration age schedules.

Profiles are smoothed first and normalised second. Smoothing evaluates a
Gaussian kernel regression on a half-year grid from 5.0 to 65.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InsufficientDataError
from .intensity import MAX_AGE, MIN_AGE, AgeProfile
from .stats import kernel_smooth
from .tables import Table

DEFAULT_BANDWIDTH = 2.0
GRID_STEP = 0.5
GRID = np.arange(MIN_AGE, MAX_AGE + GRID_STEP / 2, GRID_STEP)


def normalize(profile: AgeProfile) -> AgeProfile:
    values = np.asarray(profile.values, dtype=float)
    known = ~np.isnan(values)
    total = math.fsum(values[known].tolist())
    if not total > 0:
        raise InsufficientDataError("cannot normalise an all-zero profile")
    return replace(profile, values=values / total, normalized=True)


def smooth_profile(profile: AgeProfile, bandwidth: float = DEFAULT_BANDWIDTH, grid=None) -> AgeProfile:
    """Kernel-smooth a single-year profile onto the half-year grid.

    Ages flagged missing are left out of the regression; the grid is
    clipped to the range of ages that remain.
    """
    if profile.smoothed:
        raise ValueError("profile is already smoothed")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    ages = np.asarray(profile.ages, dtype=float)
    values = np.asarray(profile.values, dtype=float)
    known = ~np.isnan(values)
    if not known.any():
        raise InsufficientDataError("profile has no observed ages")
    xs, ys = ages[known], values[known]
    g = GRID if grid is None else np.asarray(grid, dtype=float)
    g = g[(g >= xs[0]) & (g <= xs[-1])]
    smoothed = kernel_smooth(xs, ys, bandwidth, g)
    return replace(profile, ages=g, values=smoothed, smoothed=True, par=None, migrants=None)


@dataclass(frozen=True)
class PeakSummary:
    age_at_peak: float
    intensity_at_peak: float
    degenerate: bool = False

    def to_table(self) -> Table:
        return Table(
            ["age_at_peak", "intensity_at_peak", "degenerate"],
            [[self.age_at_peak, self.intensity_at_peak, self.degenerate]],
        )


def peak(profile: AgeProfile) -> PeakSummary:
    """Age and value of the maximum; ties go to the youngest age.

    A profile whose values are all equal has no peak; the youngest age is
    returned with ``degenerate`` set.
    """
    values = np.asarray(profile.values, dtype=float)
    if values.size == 0 or np.all(np.isnan(values)):
        raise InsufficientDataError("empty profile")
    filled = np.where(np.isnan(values), -np.inf, values)
    i = int(np.argmax(filled))
    known = values[~np.isnan(values)]
    degenerate = bool(np.ptp(known) <= 1e-12 * np.abs(known).max())
    return PeakSummary(float(profile.ages[i]), float(values[i]), degenerate)


def schedule(profile: AgeProfile, bandwidth: float = DEFAULT_BANDWIDTH) -> tuple[AgeProfile, PeakSummary]:
    """Smooth, normalise and locate the peak of a raw profile."""
    shaped = normalize(smooth_profile(profile, bandwidth))
    return shaped, peak(shaped)
