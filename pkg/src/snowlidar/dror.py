"""Dynamic-radius outlier removal and the snowfall-intensity split.

A point is kept when it has at least ``k_min`` other points within a
search radius that grows with its planar range:

    sr = max(r_min, beta * r_p * alpha)

Clutter from falling snow is sparse at any range, so it fails the test
while real surfaces pass. The removed-point count inside a fixed box in
front of the vehicle grades frames into clear / light / heavy snowfall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pointcloud import PointCloud

# Defaults follow the dynamic-radius outlier-removal publication; the
# split thresholds below are fixed, these are not.
DEFAULT_ALPHA = 0.00349  # horizontal angular resolution, rad
DEFAULT_BETA = 3.0
DEFAULT_K_MIN = 3
DEFAULT_R_MIN = 0.04  # meters

LIGHT_MIN_REMOVED = 10
HEAVY_MIN_REMOVED = 80

DEFAULT_BOX = ((0.0, 10.0), (-1.0, 1.0), (-1.0, 1.0))  # x, y, z bounds, forward = +x


@dataclass(frozen=True)
class DrorConfig:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    k_min: int = DEFAULT_K_MIN
    r_min: float = DEFAULT_R_MIN

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.k_min, self.r_min) <= 0:
            raise ValueError("all DROR parameters must be > 0")


def _search_radii(pc: PointCloud, cfg: DrorConfig) -> np.ndarray:
    planar = np.hypot(pc.xyz[:, 0].astype(np.float64), pc.xyz[:, 1].astype(np.float64))
    return np.maximum(cfg.r_min, cfg.beta * planar * cfg.alpha)


def _neighbor_counts(xyz: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Neighbors (excluding self) within each point's own radius.

    Uniform hash grid with cells the size of the largest radius, so all
    neighbors live in the surrounding 3x3x3 block.
    """
    n = xyz.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    if n == 0:
        return counts
    cell = float(radii.max())
    keys = np.floor(xyz / cell).astype(np.int64)
    grid: dict[tuple[int, int, int], np.ndarray] = {}
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    breaks = np.flatnonzero((np.diff(sorted_keys, axis=0) != 0).any(axis=1))
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks + 1, [n]])
    for s, e in zip(starts, ends):
        grid[tuple(sorted_keys[s])] = order[s:e]

    offsets = [
        (dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
    ]
    for key, members in grid.items():
        buckets = []
        for off in offsets:
            hit = grid.get((key[0] + off[0], key[1] + off[1], key[2] + off[2]))
            if hit is not None:
                buckets.append(hit)
        candidates = np.concatenate(buckets)
        delta = xyz[members][:, None, :] - xyz[candidates][None, :, :]
        dist2 = np.einsum("ijk,ijk->ij", delta, delta)
        within = dist2 <= radii[members][:, None] ** 2
        counts[members] = within.sum(axis=1) - 1  # the point itself always matches
    return counts


def dror_filter(pc: PointCloud, cfg: DrorConfig) -> tuple[PointCloud, PointCloud]:
    """Split a cloud into (kept, removed); together they partition the input."""
    if len(pc) == 0:
        return pc, pc
    radii = _search_radii(pc, cfg)
    counts = _neighbor_counts(pc.xyz.astype(np.float64), radii)
    keep = counts >= cfg.k_min
    return pc.select(keep), pc.select(~keep)


def classify_snowfall(
    pc: PointCloud,
    cfg: DrorConfig,
    box: tuple[tuple[float, float], ...] = DEFAULT_BOX,
) -> tuple[str, int]:
    """Grade a frame by how much clutter the filter removes near the vehicle.

    Counts removed points inside the box (axis-aligned bounds per
    dimension, sensor frame, forward = +x): fewer than 10 is ``clear``,
    10 to 79 ``light``, 80 or more ``heavy``.
    """
    _, removed = dror_filter(pc, cfg)
    (x0, x1), (y0, y1), (z0, z1) = box
    xyz = removed.xyz
    inside = (
        (xyz[:, 0] >= x0)
        & (xyz[:, 0] <= x1)
        & (xyz[:, 1] >= y0)
        & (xyz[:, 1] <= y1)
        & (xyz[:, 2] >= z0)
        & (xyz[:, 2] <= z1)
    )
    count = int(inside.sum())
    if count >= HEAVY_MIN_REMOVED:
        return "heavy", count
    if count >= LIGHT_MIN_REMOVED:
        return "light", count
    return "clear", count
