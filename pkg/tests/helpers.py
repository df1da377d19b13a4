"""Scene builders and independent oracles shared by the test modules.

Oracles here deliberately re-derive results with the simplest possible
code (exhaustive loops, ray casting, fine grids) and never call the
accelerated production paths they are checking.
"""

from __future__ import annotations

import math

import numpy as np

from snowlidar import ParticleField, PointCloud, SensorCalibration, assign_layers


def make_calib(n_lasers: int = 4, **kw) -> SensorCalibration:
    return SensorCalibration.uniform(n_lasers, **kw)


def random_cloud(
    rng: np.random.Generator,
    n: int,
    calib: SensorCalibration,
    r_range: tuple[float, float] = (4.0, 70.0),
    i_range: tuple[float, float] = (5.0, 250.0),
) -> PointCloud:
    """Random sweep with points exactly on the calibration's scan rings."""
    r = rng.uniform(*r_range, n)
    az = rng.uniform(-np.pi, np.pi, n)
    el = calib.elevation_angles[rng.integers(0, calib.n_lasers, n)]
    xyz = np.stack(
        [r * np.cos(el) * np.cos(az), r * np.cos(el) * np.sin(az), r * np.sin(el)], axis=1
    )
    pc = PointCloud(xyz, rng.uniform(*i_range, n), np.full(n, -1, np.int32))
    return assign_layers(pc, calib)


def ground_scene(
    rng: np.random.Generator,
    n_ground: int = 3000,
    n_other: int = 800,
    height: float = -1.73,
    jitter: float = 0.0,
    r_range: tuple[float, float] = (5.0, 45.0),
    intensity=None,
) -> PointCloud:
    """Flat ground ring below the sensor plus off-ground structure points."""
    r = rng.uniform(*r_range, n_ground)
    az = rng.uniform(-np.pi, np.pi, n_ground)
    gz = np.full(n_ground, height)
    if jitter:
        gz = gz + rng.normal(0.0, jitter, n_ground)
    ground = np.stack([r * np.cos(az), r * np.sin(az), gz], axis=1)
    wx = rng.uniform(8.0, 30.0, n_other)
    wy = rng.uniform(-15.0, 15.0, n_other)
    wz = rng.uniform(0.0, 4.0, n_other)
    xyz = np.vstack([ground, np.stack([wx, wy, wz], axis=1)])
    if intensity is None:
        inten = rng.uniform(5.0, 200.0, len(xyz))
    else:
        inten = intensity(xyz)
    return PointCloud(xyz, inten, np.zeros(len(xyz), np.int32))


def single_particle_field(cx: float, cy: float, diameter_mm: float) -> ParticleField:
    return ParticleField(np.array([[cx, cy]]), np.array([diameter_mm]), rate=0.0, seed=0)


def wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def wedge_hits_bruteforce(field: ParticleField, x: float, y: float, r0: float, theta: float):
    """Indices of particles crossing the wedge, by direct per-particle test."""
    phi = math.atan2(y, x)
    out = []
    radii = field.radii_m
    for j in range(len(field)):
        cx, cy = field.centers[j]
        rc = math.hypot(cx, cy)
        if rc > r0:
            continue
        if rc <= radii[j]:
            out.append(j)
            continue
        rel = wrap(math.atan2(cy, cx) - phi)
        hw = math.asin(radii[j] / rc)
        if abs(rel) <= theta / 2.0 + hw:
            out.append(j)
    return out


def first_hit_ray_fractions(lo, hi, theta: float, n_rays: int, seed: int):
    """Monte Carlo occlusion attribution: fraction of rays whose first hit
    is interval k (in front-to-back order), plus the unassigned fraction."""
    rng = np.random.default_rng(seed)
    phi = rng.uniform(-theta / 2.0, theta / 2.0, n_rays)
    assigned = np.full(n_rays, -1, dtype=np.int64)
    for k in range(len(lo)):
        mask = (assigned < 0) & (phi >= lo[k]) & (phi <= hi[k])
        assigned[mask] = k
    fractions = np.array([(assigned == k).mean() for k in range(len(lo))])
    return fractions, float((assigned < 0).mean())


def lobe_convolution_oracle(amplitude: float, r_start: float, tau_h: float, r, dt: float = 0.01e-9):
    """Numeric echo lobe: transmitted pulse tabulated on a dt grid, convolved
    with a Dirac impulse at ``r_start`` (the delta collapses the integral to a
    pulse lookup at t = 2 (R - r_start) / c, linearly interpolated)."""
    c = 299_792_458.0
    t_grid = np.arange(0.0, 2.0 * tau_h + dt, dt)
    shape = np.sin(np.pi * t_grid / (2.0 * tau_h)) ** 2
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    t_star = 2.0 * (r - r_start) / c
    out = np.zeros_like(r)
    inside = (t_star >= 0.0) & (t_star <= 2.0 * tau_h)
    out[inside] = amplitude * np.interp(t_star[inside], t_grid, shape)
    return out


def dror_bruteforce(pc: PointCloud, alpha: float, beta: float, k_min: int, r_min: float):
    """O(n^2) keep mask for the dynamic-radius filter."""
    xyz = pc.xyz.astype(np.float64)
    planar = np.hypot(xyz[:, 0], xyz[:, 1])
    sr = np.maximum(r_min, beta * planar * alpha)
    keep = np.zeros(len(pc), dtype=bool)
    for i in range(len(pc)):
        d2 = ((xyz - xyz[i]) ** 2).sum(axis=1)
        count = int((d2 <= sr[i] ** 2).sum()) - 1
        keep[i] = count >= k_min
    return keep
