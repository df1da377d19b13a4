"""Per-layer 2D snow-particle fields driven by the snowfall rate.

Particle diameters follow the Gunn-Marshall (1958) exponential size
distribution for snowflakes,

    N(D) = N0 * exp(-Lambda * D),   N0 = 3800 * r^-0.87  [m^-3 mm^-1]
                                    Lambda = 2.55 * r^-0.48  [mm^-1]

with r the liquid-equivalent snowfall rate in mm/h. Diameters are
truncated to [0.1, 10] mm to avoid unphysical tails. The 3D number
density is converted to an areal density for the 2D scan plane by
treating the plane as a slab one mean diameter thick; a scale factor is
exposed for users who want a different conversion.

Sampled particles obey the exclusion principle: no two discs overlap.
Placement draws all centers uniformly on the disc at once and then
re-draws the later particle of any overlapping pair, which at physical
densities touches a handful of particles per million.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SamplingError

GUNN_MARSHALL_N0 = 3800.0  # m^-3 mm^-1 at r_s = 1 mm/h
GUNN_MARSHALL_N0_EXP = -0.87
GUNN_MARSHALL_LAMBDA = 2.55  # mm^-1 at r_s = 1 mm/h
GUNN_MARSHALL_LAMBDA_EXP = -0.48

DIAMETER_MIN_MM = 0.1
DIAMETER_MAX_MM = 10.0
MAX_SNOWFALL_RATE = 10.0
MAX_PLACEMENT_ATTEMPTS = 1000


def size_distribution(rate: float) -> tuple[float, float]:
    """Gunn-Marshall (N0, Lambda) for a snowfall rate in mm/h.

    A zero rate yields zero density (N0 = 0 with an infinite Lambda, so
    N(D) vanishes for every diameter).
    """
    if rate < 0:
        raise ValueError(f"snowfall rate must be >= 0, got {rate}")
    if rate == 0:
        return 0.0, float("inf")
    n0 = GUNN_MARSHALL_N0 * rate**GUNN_MARSHALL_N0_EXP
    lam = GUNN_MARSHALL_LAMBDA * rate**GUNN_MARSHALL_LAMBDA_EXP
    return n0, lam


def _truncated_exp_mass(lam: float) -> float:
    """Integral of exp(-lam D) over the truncation window, times lam."""
    return float(np.exp(-lam * DIAMETER_MIN_MM) - np.exp(-lam * DIAMETER_MAX_MM))


def truncated_mean_diameter_mm(lam: float) -> float:
    """Mean of the exponential distribution truncated to the diameter window."""
    a, b = DIAMETER_MIN_MM, DIAMETER_MAX_MM
    mass = _truncated_exp_mass(lam)
    return 1.0 / lam + (a * np.exp(-lam * a) - b * np.exp(-lam * b)) / mass


def truncated_diameter_cdf(d_mm, lam: float):
    """CDF of the truncated exponential diameter law (mm)."""
    d = np.clip(np.asarray(d_mm, dtype=np.float64), DIAMETER_MIN_MM, DIAMETER_MAX_MM)
    return (np.exp(-lam * DIAMETER_MIN_MM) - np.exp(-lam * d)) / _truncated_exp_mass(lam)


def slab_density(rate: float, scale: float = 1.0) -> float:
    """Areal particle density (1/m^2) of the scan-plane slab.

    Number density within the diameter window times a slab thickness of
    one mean diameter. ``scale`` rescales the conversion.
    """
    if rate == 0:
        return 0.0
    n0, lam = size_distribution(rate)
    density_3d = n0 / lam * _truncated_exp_mass(lam)  # m^-3
    thickness_m = truncated_mean_diameter_mm(lam) * 1e-3
    return density_3d * thickness_m * scale


def expected_particle_count(max_range: float, rate: float, scale: float = 1.0) -> int:
    return int(round(np.pi * max_range * max_range * slab_density(rate, scale)))


@dataclass(frozen=True)
class ParticleField:
    """Immutable 2D snow-particle set for one scan layer.

    ``centers`` is (N, 2) in meters with the sensor at the origin,
    ``diameters_mm`` is (N,). Radii in meters are precomputed for the
    beam geometry.
    """

    centers: np.ndarray
    diameters_mm: np.ndarray
    rate: float
    seed: int

    def __post_init__(self) -> None:
        centers = np.ascontiguousarray(self.centers, dtype=np.float64)
        diameters = np.ascontiguousarray(self.diameters_mm, dtype=np.float64)
        centers.flags.writeable = False
        diameters.flags.writeable = False
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "diameters_mm", diameters)

    def __len__(self) -> int:
        return self.centers.shape[0]

    @property
    def radii_m(self) -> np.ndarray:
        return self.diameters_mm * (1e-3 / 2.0)

    def dump_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cx_m", "cy_m", "diameter_mm"])
            for (cx, cy), d in zip(self.centers, self.diameters_mm):
                writer.writerow([repr(cx), repr(cy), repr(d)])


def _sample_diameters(rng: np.random.Generator, lam: float, n: int) -> np.ndarray:
    u = rng.random(n)
    lo = np.exp(-lam * DIAMETER_MIN_MM)
    hi = np.exp(-lam * DIAMETER_MAX_MM)
    return -np.log(lo - u * (lo - hi)) / lam


def _sample_centers(rng: np.random.Generator, max_range: float, n: int) -> np.ndarray:
    radius = max_range * np.sqrt(rng.random(n))
    phi = 2.0 * np.pi * rng.random(n)
    return np.column_stack([radius * np.cos(phi), radius * np.sin(phi)])


_CONTACT_MAX_M = DIAMETER_MAX_MM * 1e-3  # largest possible contact distance


def _overlapping_pairs(centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """(K, 2) indices of disc pairs that violate the exclusion principle.

    Plane sweep along x: only pairs closer than the largest possible
    contact distance in x are candidates, a vanishing fraction at
    physical densities, and those get the exact distance test.
    """
    n = len(centers)
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    order = np.argsort(centers[:, 0], kind="stable")
    xs = centers[order, 0]
    hi = np.searchsorted(xs, xs + _CONTACT_MAX_M, side="right")
    base = np.arange(n)
    counts = hi - base - 1
    total = int(counts.sum())
    if total == 0:
        return np.empty((0, 2), dtype=np.int64)
    left = np.repeat(base, counts)
    right = np.repeat(base + 1 - np.cumsum(counts) + counts, counts) + np.arange(total)
    a, b = order[left], order[right]
    near_y = np.abs(centers[a, 1] - centers[b, 1]) <= _CONTACT_MAX_M
    a, b = a[near_y], b[near_y]
    delta = centers[a] - centers[b]
    contact = radii[a] + radii[b]
    bad = np.einsum("ij,ij->i", delta, delta) < contact * contact
    return np.column_stack([a[bad], b[bad]])


def sample_field(max_range: float, rate: float, seed: int, density_scale: float = 1.0) -> ParticleField:
    """Sample one layer's particle field; deterministic in (max_range, rate, seed)."""
    if not 0.0 <= rate <= MAX_SNOWFALL_RATE:
        raise ValueError(f"snowfall rate must be in [0, {MAX_SNOWFALL_RATE}] mm/h, got {rate}")
    n = expected_particle_count(max_range, rate, density_scale)
    rng = np.random.default_rng(seed)
    if n == 0:
        return ParticleField(np.empty((0, 2)), np.empty(0), rate, seed)
    _, lam = size_distribution(rate)
    diameters = _sample_diameters(rng, lam, n)
    centers = _sample_centers(rng, max_range, n)
    radii = diameters * (1e-3 / 2.0)

    attempts = np.zeros(n, dtype=np.int64)
    while True:
        pairs = _overlapping_pairs(centers, radii)
        if len(pairs) == 0:
            break
        # Re-draw the later particle of each overlapping pair, keeping the
        # earlier one fixed, which mirrors sequential rejection sampling.
        redraw = np.unique(pairs.max(axis=1))
        attempts[redraw] += 1
        if (attempts[redraw] >= MAX_PLACEMENT_ATTEMPTS).any():
            raise SamplingError(
                f"exclusion sampling exceeded {MAX_PLACEMENT_ATTEMPTS} attempts; density misconfigured"
            )
        centers = centers.copy()
        centers[redraw] = _sample_centers(rng, max_range, redraw.size)
    return ParticleField(centers, diameters, rate, seed)
