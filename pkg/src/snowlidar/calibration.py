"""Factory intensity calibration and range-indexed linear power models.

The sensor reports intensities with a per-laser beam-divergence
correction applied:

    i = P_R + f_s * |f_o - (1 - R / R_max)^2|

where f_s is the focal slope and f_o the focal offset, itself the square
of a normalised focal distance. The correction vanishes at
R = R_max * (1 - sqrt(f_o)).

Simulation happens in raw power space, so the correction is inverted on
the way in and re-applied on the way out. The pipeline's write-back uses
the variant with the correction term scaled by the laser's maximum
intensity, matching the sensor's own normalisation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .pointcloud import LaserCalibration


def correction_term(r, focal_slope, focal_offset, r_max: float):
    """Beam-divergence correction f_s * |f_o - (1 - R/R_max)^2|; broadcasts."""
    d = 1.0 - np.asarray(r, dtype=np.float64) / r_max
    return focal_slope * np.abs(focal_offset - d * d)


def _correction(r, laser: LaserCalibration, r_max: float):
    return correction_term(r, laser.focal_slope, laser.focal_offset, r_max)


def invert_calibration(i, r, laser: LaserCalibration, r_max: float):
    """Raw received power from a calibrated intensity.

    The result can be negative on noisy data; callers that need a
    physical power clamp at zero and count the clamp.
    """
    return np.asarray(i, dtype=np.float64) - _correction(r, laser, r_max)


def apply_calibration(p_r, r, laser: LaserCalibration, r_max: float, scale_by_max_intensity: bool = False):
    """Calibrated intensity from raw power (inverse of :func:`invert_calibration`).

    With ``scale_by_max_intensity`` the correction term is multiplied by
    the laser's max intensity; this is the write-back form used by the
    snowfall pipeline.
    """
    corr = _correction(r, laser, r_max)
    if scale_by_max_intensity:
        corr = laser.max_intensity * corr
    return np.asarray(p_r, dtype=np.float64) + corr


@dataclass(frozen=True)
class LinearRangeModel:
    """Affine intensity-vs-range model, clamped at zero when evaluated."""

    slope: float
    intercept: float
    valid_range: tuple[float, float]

    def __call__(self, r):
        return np.maximum(self.slope * np.asarray(r, dtype=np.float64) + self.intercept, 0.0)


MIN_GROUND_POINTS = 50
MIN_RANGE_SPAN = 20.0
_IRLS_ITERATIONS = 20


def _quantile_line(r: np.ndarray, y: np.ndarray, q: float) -> tuple[float, float]:
    """Quantile regression line via iteratively reweighted least absolute deviation."""
    x = np.column_stack([r, np.ones_like(r)])
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    scale = max(float(np.std(y)), 1e-12)
    floor = 1e-6 * scale
    for _ in range(_IRLS_ITERATIONS):
        resid = y - x @ beta
        w = np.where(resid >= 0, q, 1.0 - q) / np.maximum(np.abs(resid), floor)
        sw = np.sqrt(w)
        beta, *_ = np.linalg.lstsq(x * sw[:, None], y * sw, rcond=None)
    return float(beta[0]), float(beta[1])


def estimate_power_and_noise(
    ground_points: np.ndarray,
    power_quantile: float = 0.95,
    noise_quantile: float = 0.05,
) -> tuple[LinearRangeModel, LinearRangeModel]:
    """Fit the transmitted-power and noise-floor lines from ground returns.

    ``ground_points`` is an (N, 3) array of (range, intensity, incidence
    angle). Intensities are normalised by cos(angle) before fitting; the
    upper quantile line is the power model, the lower one the noise
    floor. Raises :class:`EstimationError` when the data cannot support
    a fit, so the caller can fall back to configured defaults.
    """
    pts = np.asarray(ground_points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("ground_points must have shape (N, 3): (range, intensity, angle)")
    if pts.shape[0] < MIN_GROUND_POINTS:
        raise EstimationError(f"need at least {MIN_GROUND_POINTS} ground points, got {pts.shape[0]}")
    r, intensity, alpha = pts[:, 0], pts[:, 1], pts[:, 2]
    span = float(r.max() - r.min())
    if span < MIN_RANGE_SPAN:
        raise EstimationError(f"ground range span {span:.1f} m < {MIN_RANGE_SPAN} m")
    cos_a = np.cos(alpha)
    if (cos_a <= 1e-9).any():
        raise EstimationError("incidence angle at or beyond 90 degrees")
    y = intensity / cos_a
    valid = (float(r.min()), float(r.max()))
    power = LinearRangeModel(*_quantile_line(r, y, power_quantile), valid)
    noise = LinearRangeModel(*_quantile_line(r, y, noise_quantile), valid)
    if power(valid[0]) < noise(valid[0]) or power(valid[1]) < noise(valid[1]):
        raise EstimationError("power model fell below the noise floor; fit is degenerate")
    return power, noise
