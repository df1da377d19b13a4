"""Wet-ground reflectance attenuation.

Ground points are identified by their distance to a RANSAC-estimated
plane. Each ground return's dry reflectivity is recovered from the
fitted linear power model, re-weighted between dry and thin-water-film
reflection according to how far the road tread is filled, and written
back; returns that fall below the fitted noise floor are dropped.

The film reflectance sums every ray that bounces between the water
surface and the road and escapes back to the sensor, a geometric series
with closed form (per polarisation p):

    T_total^p = T_air^p * rho_0 * T_water^p / (1 - rho_0 * R_water^p)

where T_air is the air-to-water power transmission at the incidence
angle, and T_water / R_water the water-to-air transmission / internal
reflection at the refracted angle. The sensor's polarisation is unknown,
so the larger of the two polarisations is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import LinearRangeModel
from .errors import EstimationError, TotalInternalReflection
from .pointcloud import PointCloud
from .snowfall import (
    LABEL_ATTENUATED,
    LABEL_DROPPED,
    LABEL_UNCHANGED,
    AugmentationResult,
    FrameStats,
)

REFRACTIVE_INDEX_AIR = 1.0
REFRACTIVE_INDEX_WATER = 1.33


@dataclass(frozen=True)
class GroundPlane:
    """Ground plane with unit normal ``w`` (pointing up) and intercept ``h``.

    A point p is ground iff |p . w - h| < epsilon_g.
    """

    w: np.ndarray
    h: float
    epsilon_g: float = 0.5

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        if w.shape != (3,):
            raise ValueError("normal must be a 3-vector")
        norm = float(np.linalg.norm(w))
        if not np.isclose(norm, 1.0, rtol=0, atol=1e-9):
            raise ValueError("normal must have unit length")
        if self.epsilon_g <= 0:
            raise ValueError("epsilon_g must be > 0")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    def signed_offset(self, xyz: np.ndarray) -> np.ndarray:
        return xyz.astype(np.float64) @ self.w

    def ground_mask(self, xyz: np.ndarray) -> np.ndarray:
        return np.abs(self.signed_offset(xyz) - self.h) < self.epsilon_g


@dataclass(frozen=True)
class WetParams:
    """Water film description: depth d_w over a tread of depth d_p (mm)."""

    d_w: float
    d_p: float = 1.2
    n_air: float = REFRACTIVE_INDEX_AIR
    n_water: float = REFRACTIVE_INDEX_WATER

    def __post_init__(self) -> None:
        if self.d_w < 0:
            raise ValueError("water depth must be >= 0")
        if self.d_p <= 0:
            raise ValueError("tread depth must be > 0")


def fit_ground_plane(
    pc: PointCloud,
    iterations: int = 200,
    inlier_tol: float = 0.05,
    seed: int = 0,
    epsilon_g: float = 0.5,
    candidate_max_z: float = -1.0,
) -> GroundPlane:
    """Three-point RANSAC plane fit with a least-squares refit on inliers.

    Candidates are points below ``candidate_max_z`` (the sensor sits at
    the origin). The returned normal points upward. Deterministic for a
    given seed.
    """
    pts = pc.xyz[pc.xyz[:, 2] < candidate_max_z].astype(np.float64)
    if pts.shape[0] < 3:
        raise EstimationError(f"need >= 3 ground candidates below z = {candidate_max_z}")
    rng = np.random.default_rng(seed)
    best_w: np.ndarray | None = None
    best_h = 0.0
    best_count = 0
    for _ in range(iterations):
        p1, p2, p3 = pts[rng.choice(pts.shape[0], 3, replace=False)]
        normal = np.cross(p2 - p1, p3 - p1)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue  # collinear sample
        w = normal / norm
        h = float(w @ p1)
        count = int((np.abs(pts @ w - h) < inlier_tol).sum())
        if count > best_count:
            best_w, best_h, best_count = w, h, count
    if best_w is None:
        raise EstimationError("all RANSAC samples were collinear; geometry is degenerate")
    inliers = pts[np.abs(pts @ best_w - best_h) < inlier_tol]
    centroid = inliers.mean(axis=0)
    _, _, vt = np.linalg.svd(inliers - centroid, full_matrices=False)
    w = vt[2]
    if w[2] < 0:
        w = -w
    return GroundPlane(w, float(w @ centroid), epsilon_g)


def snell(alpha_in, n_in: float, n_out: float):
    """Refraction angle for an incidence angle in [0, pi/2).

    Raises :class:`TotalInternalReflection` when the refraction argument
    exceeds one, which requires n_in > n_out.
    """
    s = (n_in / n_out) * np.sin(np.asarray(alpha_in, dtype=np.float64))
    if np.any(s > 1.0):
        raise TotalInternalReflection(f"n_in={n_in}, n_out={n_out}")
    return np.arcsin(s)


@dataclass(frozen=True)
class FresnelPower:
    """Power reflection/transmission per polarisation (perp, par)."""

    R_perp: np.ndarray | float
    R_par: np.ndarray | float
    T_perp: np.ndarray | float
    T_par: np.ndarray | float


def fresnel_power(alpha_in, n_in: float, n_out: float) -> FresnelPower:
    """Power Fresnel coefficients of a planar dielectric interface.

    Computed from the standard amplitude coefficients; each polarisation
    conserves energy (R + T = 1). At or beyond the critical angle the
    interface is perfectly reflecting (R = 1, T = 0).
    """
    alpha = np.asarray(alpha_in, dtype=np.float64)
    cos_i = np.cos(alpha)
    s = (n_in / n_out) * np.sin(alpha)
    total = s >= 1.0
    s = np.where(total, 0.0, s)
    cos_t = np.sqrt(1.0 - s * s)
    d_perp = n_in * cos_i + n_out * cos_t
    d_par = n_out * cos_i + n_in * cos_t
    r_perp = (n_in * cos_i - n_out * cos_t) / d_perp
    r_par = (n_out * cos_i - n_in * cos_t) / d_par
    t_perp = 2.0 * n_in * cos_i / d_perp
    t_par = 2.0 * n_in * cos_i / d_par
    ratio = (n_out * cos_t) / (n_in * cos_i)
    out = FresnelPower(
        R_perp=np.where(total, 1.0, r_perp * r_perp),
        R_par=np.where(total, 1.0, r_par * r_par),
        T_perp=np.where(total, 0.0, ratio * t_perp * t_perp),
        T_par=np.where(total, 0.0, ratio * t_par * t_par),
    )
    if alpha.ndim == 0:
        return FresnelPower(*(float(v) for v in (out.R_perp, out.R_par, out.T_perp, out.T_par)))
    return out


def t_total(alpha_in, rho_0, params: WetParams):
    """Effective wet-surface reflectance, maximised over polarisation.

    ``rho_0`` is the dry road reflectivity in [0, 1). Closed form of the
    bounce series; diverging input (rho_0 * R_water >= 1) is rejected.
    """
    rho = np.asarray(rho_0, dtype=np.float64)
    if np.any((rho < 0.0) | (rho >= 1.0)):
        raise ValueError("rho_0 must lie in [0, 1)")
    alpha_w = snell(alpha_in, params.n_air, params.n_water)
    air = fresnel_power(alpha_in, params.n_air, params.n_water)
    water = fresnel_power(alpha_w, params.n_water, params.n_air)
    best = None
    for t_air, t_water, r_water in (
        (air.T_perp, water.T_perp, water.R_perp),
        (air.T_par, water.T_par, water.R_par),
    ):
        denom = 1.0 - rho * np.asarray(r_water)
        if np.any(denom <= 0.0):
            raise ValueError("geometric series diverges: rho_0 * R_water >= 1")
        value = np.asarray(t_air) * rho * np.asarray(t_water) / denom
        best = value if best is None else np.maximum(best, value)
    if np.asarray(alpha_in).ndim == 0 and np.asarray(rho_0).ndim == 0:
        return float(best)
    return best


def blend_weight(d_w: float, d_p: float) -> float:
    """Wet/dry blending weight: fraction of the tread filled, clamped to [0, 1]."""
    return float(np.clip(d_w / d_p, 0.0, 1.0))


def wet_reflectivity(rho_0, gamma: float, tt, cos_alpha):
    """Blend dry reflectivity with the film reflectance term."""
    return (1.0 - gamma) * np.asarray(rho_0) + gamma * np.asarray(tt) / np.asarray(cos_alpha)


def sample_water_depth(
    seed_or_rng, mean: float = 0.4, bounds: tuple[float, float] = (0.1, 1.2)
) -> float:
    """Draw a per-frame water depth from a truncated exponential (mm)."""
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    lo, hi = bounds
    a, b = np.exp(-lo / mean), np.exp(-hi / mean)
    return float(-mean * np.log(a - rng.random() * (a - b)))


RHO_0_CLAMP = 0.999  # keeps the bounce series off its pole


def augment_wet(
    pc: PointCloud,
    plane: GroundPlane,
    params: WetParams,
    power: LinearRangeModel,
    noise: LinearRangeModel,
) -> AugmentationResult:
    """Re-weight ground intensities for a wet road and cull sub-noise returns.

    Positions never move: ground points either keep their place with a
    new intensity or are dropped; everything off the ground passes
    through bit-identical.
    """
    n = len(pc)
    labels = np.zeros(n, dtype=np.uint8)
    stats = FrameStats()
    if n == 0:
        return AugmentationResult(pc, labels, stats)

    xyz64 = pc.xyz.astype(np.float64)
    offset = xyz64 @ plane.w
    ground = np.abs(offset - plane.h) < plane.epsilon_g
    g_idx = np.flatnonzero(ground)
    if g_idx.size == 0:
        return AugmentationResult(pc, labels, stats)

    r0 = np.linalg.norm(xyz64[g_idx], axis=1)
    # |p . w| folds the upward normal onto the beam direction so the
    # incidence angle stays below 90 degrees.
    cos_a = np.clip(np.abs(offset[g_idx]) / np.maximum(r0, 1e-12), 1e-9, 1.0)
    alpha = np.arccos(cos_a)
    p_r = power(r0)
    i_in = pc.intensity[g_idx].astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_0 = i_in / (cos_a * p_r)
    bad = ~np.isfinite(rho_0) | (rho_0 < 0.0) | (rho_0 >= 1.0)
    stats.power_clamped += int(bad.sum())
    rho_0 = np.clip(np.where(np.isfinite(rho_0), rho_0, RHO_0_CLAMP), 0.0, RHO_0_CLAMP)

    gamma = blend_weight(params.d_w, params.d_p)
    tt = t_total(alpha, rho_0, params)
    rho_w = wet_reflectivity(rho_0, gamma, tt, cos_a)
    i_new = rho_w * cos_a * p_r
    keep = i_new > noise(r0)

    labels[g_idx[~keep]] = LABEL_DROPPED
    kept = g_idx[keep]
    dimmed = i_new[keep].astype(np.float32) < pc.intensity[kept]  # compare as stored
    labels[kept] = np.where(dimmed, LABEL_ATTENUATED, LABEL_UNCHANGED)

    out_i = pc.intensity.astype(np.float64)
    out_i[kept] = i_new[keep]
    survive = np.ones(n, dtype=bool)
    survive[g_idx[~keep]] = False
    cloud = PointCloud(
        pc.xyz[survive], out_i[survive].astype(np.float32), pc.layer[survive], pc.frame_id
    )
    return AugmentationResult(cloud, labels, stats)
