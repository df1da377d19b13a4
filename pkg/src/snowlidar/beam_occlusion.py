"""Per-beam particle intersection and mutual-occlusion angles.

A beam is a 2D wedge with its apex at the sensor, axis toward the
target's (x, y) and full opening angle Theta, truncated at the target
range R0. A particle disc at center range R_c with radius r subtends the
angular interval of half-width asin(r / R_c) around its bearing; discs
that reach the apex (R_c <= r) block the whole wedge. Discs whose center
lies beyond R0 are ignored.

Visible angles are assigned front to back with exact interval
arithmetic: each disc's interval, clipped to the wedge, is reduced by
whatever nearer discs have already claimed. The target receives the
remainder, so the angles always sum to Theta.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .snow_sampling import ParticleField

NEAR_FIELD_RANGE = 2.0  # discs closer than this are tested against every beam


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=np.float64), 2.0 * np.pi)


@dataclass(frozen=True)
class BeamHit:
    """One reflector inside a beam: the target or a particle disc.

    ``lo``/``hi`` bound the subtended angular interval relative to the
    beam axis, already clipped to [-Theta/2, Theta/2]. ``theta`` is the
    visible (unoccluded) part of that interval, assigned by
    :func:`occlusion_angles`.
    """

    kind: str  # 'target' or 'particle'
    r: float
    lo: float
    hi: float
    index: int = -1  # particle index within the field; -1 for the target
    theta: float = 0.0

    @property
    def reflectivity_role(self) -> str:
        return "rho_0" if self.kind == "target" else "rho_s"


class FieldGeometry:
    """Precomputed per-field quantities for fast wedge queries.

    Far particles are indexed by bearing; the handful of near-field
    particles (which can subtend wide angles) are checked against every
    beam. Build once per field, share read-only across beams.
    """

    def __init__(self, field: ParticleField):
        centers = field.centers
        radii = field.radii_m
        self.n = len(field)
        self.rc = np.hypot(centers[:, 0], centers[:, 1])
        self.bearing = np.arctan2(centers[:, 1], centers[:, 0])
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(self.rc > 0, radii / np.maximum(self.rc, 1e-300), np.inf)
        self.halfwidth = np.where(ratio < 1.0, np.arcsin(np.minimum(ratio, 1.0)), np.inf)
        near = (self.rc < NEAR_FIELD_RANGE) | ~np.isfinite(self.halfwidth)
        self.near_idx = np.flatnonzero(near)
        far = np.flatnonzero(~near)
        order = far[np.argsort(self.bearing[far], kind="stable")]
        sb = self.bearing[order]
        self._sorted_bearing = np.concatenate([sb - 2 * np.pi, sb, sb + 2 * np.pi])
        self._sorted_index = np.concatenate([order, order, order])
        self._far_halfwidth_max = float(self.halfwidth[far].max()) if far.size else 0.0

    def query_flat(
        self, phi: np.ndarray, r0: np.ndarray, theta: float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Hits for a batch of beams with axis bearings ``phi`` and ranges ``r0``.

        Returns flat (beam_id, particle_id) arrays, unordered.
        """
        half = 0.5 * theta
        beams: list[np.ndarray] = []
        parts: list[np.ndarray] = []
        b = phi.shape[0]
        if self._sorted_index.size:
            window = half + self._far_halfwidth_max
            lo = np.searchsorted(self._sorted_bearing, phi - window, side="left")
            hi = np.searchsorted(self._sorted_bearing, phi + window, side="right")
            counts = hi - lo
            total = int(counts.sum())
            if total:
                beam_id = np.repeat(np.arange(b), counts)
                flat = np.repeat(lo - np.cumsum(counts) + counts, counts) + np.arange(total)
                part = self._sorted_index[flat]
                rel = wrap_angle(self.bearing[part] - phi[beam_id])
                ok = (np.abs(rel) <= half + self.halfwidth[part]) & (
                    self.rc[part] <= r0[beam_id]
                )
                beams.append(beam_id[ok])
                parts.append(part[ok])
        if self.near_idx.size:
            beam_id = np.repeat(np.arange(b), self.near_idx.size)
            part = np.tile(self.near_idx, b)
            rel = wrap_angle(self.bearing[part] - phi[beam_id])
            ok = (np.abs(rel) <= half + self.halfwidth[part]) & (self.rc[part] <= r0[beam_id])
            beams.append(beam_id[ok])
            parts.append(part[ok])
        if not beams:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        return np.concatenate(beams), np.concatenate(parts)

    def intervals(self, part: np.ndarray, phi, theta: float) -> tuple[np.ndarray, np.ndarray]:
        """Clipped angular intervals of particles ``part`` for beam bearing(s) ``phi``."""
        half = 0.5 * theta
        rel = wrap_angle(self.bearing[part] - np.asarray(phi, dtype=np.float64))
        hw = self.halfwidth[part]
        lo = np.clip(rel - hw, -half, half)
        hi = np.clip(rel + hw, -half, half)
        full = ~np.isfinite(hw)
        lo[full] = -half
        hi[full] = half
        return lo, hi


def particles_in_beam(
    field: ParticleField, x: float, y: float, r0: float, theta: float
) -> list[BeamHit]:
    """All reflectors in the wedge toward (x, y), nearest first, target last.

    Equal center ranges are ordered by particle index; the target sorts
    after any particle at exactly the target range.
    """
    if x == 0.0 and y == 0.0:
        raise ValueError("beam direction undefined for (x, y) = (0, 0)")
    if theta <= 0.0:
        raise ValueError("beam opening angle must be > 0")
    half = 0.5 * theta
    phi = float(np.arctan2(y, x))
    hits: list[BeamHit] = []
    if len(field):
        geo = FieldGeometry(field)
        rel = wrap_angle(geo.bearing - phi)
        ok = (np.abs(rel) <= half + geo.halfwidth) & (geo.rc <= r0)
        idx = np.flatnonzero(ok)
        lo, hi = geo.intervals(idx, phi, theta)
        for j, part in enumerate(idx):
            hits.append(
                BeamHit("particle", float(geo.rc[part]), float(lo[j]), float(hi[j]), int(part))
            )
        hits.sort(key=lambda h: (h.r, h.index))
    hits.append(BeamHit("target", float(r0), -half, half))
    return hits


def occlusion_sweep(lo: np.ndarray, hi: np.ndarray, theta: float) -> tuple[np.ndarray, float]:
    """Visible angle per interval, front to back, plus the target remainder.

    ``lo``/``hi`` are clipped intervals sorted by ascending range.
    Returns (theta_j array, theta_0) with theta_0 = theta - sum(theta_j),
    clamped at zero.
    """
    claimed: list[tuple[float, float]] = []  # disjoint, sorted
    out = np.zeros(len(lo), dtype=np.float64)
    for k in range(len(lo)):
        a, b = float(lo[k]), float(hi[k])
        if b <= a:
            continue
        visible = b - a
        for ca, cb in claimed:
            if ca >= b:
                break
            overlap = min(b, cb) - max(a, ca)
            if overlap > 0.0:
                visible -= overlap
        out[k] = max(visible, 0.0)
        # merge [a, b] into the claimed set
        merged: list[tuple[float, float]] = []
        placed = False
        for ca, cb in claimed:
            if cb < a:
                merged.append((ca, cb))
            elif b < ca:
                if not placed:
                    merged.append((a, b))
                    placed = True
                merged.append((ca, cb))
            else:
                a, b = min(a, ca), max(b, cb)
        if not placed:
            merged.append((a, b))
            merged.sort()
        claimed = merged
    theta_0 = max(theta - float(out.sum()), 0.0)
    return out, theta_0


def occlusion_angles(hits: list[BeamHit], theta: float) -> list[BeamHit]:
    """Assign visible angles to a sorted hit list (target included)."""
    particles = [h for h in hits if h.kind == "particle"]
    lo = np.array([h.lo for h in particles])
    hi = np.array([h.hi for h in particles])
    thetas, theta_0 = occlusion_sweep(lo, hi, theta)
    it = iter(thetas)
    return [
        replace(h, theta=theta_0) if h.kind == "target" else replace(h, theta=float(next(it)))
        for h in hits
    ]
