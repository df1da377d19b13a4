"""Snowfall augmentation of a clear-weather sweep.

Per scan layer: sample a particle field, find the particles crossing
each beam, split the beam opening angle between reflectors front to
back, superpose their echo lobes with amplitudes recovered from the
factory calibration, and move each disturbed point to the strongest
peak.

Amplitude bookkeeping (one beam):

    target:    P_R   = i - f_s |f_o - (1 - R0/R_max)^2|      (inverted calibration)
               C_A P_0 = P_R R0^2 / rho_0
    particle:  P_R   = rho_s * i_max
               C_A P_0 = P_R / rho_0
    lobe j:    A_j = C_A P_0 * rho * theta_j * xi(R_j) / (Theta R_j^2)

with rho the reflector's own reflectivity (rho_0 for the target, rho_s
for a particle). rho_0 cancels for the target but scales every particle
amplitude by rho_s / rho_0, so ``rho_0_floor`` is the single most
influential free parameter of the simulation: the published constant
1e-6 / pi makes nearly every interfered beam scatter, while values near
rho_s reduce particle echoes to their plain geometric attenuation.

Beams crossing no particle are returned bit-identical. Points whose
inverted power is non-positive, or whose profile has no energy at all,
are passed through unchanged and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .beam_occlusion import FieldGeometry, occlusion_angles, occlusion_sweep, particles_in_beam
from .calibration import correction_term, invert_calibration
from .echo_model import (
    GRID_STEPS_PER_LOBE,
    SPEED_OF_LIGHT,
    EchoProfile,
    EchoTerm,
    batched_max_peak,
    xi,
)
from .errors import ConfigurationError
from .pointcloud import PointCloud, SensorCalibration
from .snow_sampling import ParticleField, sample_field

LABEL_UNCHANGED = 0
LABEL_ATTENUATED = 1
LABEL_SCATTERED = 2
LABEL_DROPPED = 3  # emitted by the wet-ground path only
LABEL_NAMES = ("unchanged", "attenuated", "scattered", "dropped")

MIN_OUTPUT_RANGE = 1e-3  # meters; a stored point must keep a positive range

DEFAULT_RHO_0 = 1e-6 / np.pi


@dataclass(frozen=True)
class PipelineConfig:
    """Snowfall-simulation knobs; sensor constants come from the calibration."""

    rate: float  # snowfall rate r_s, mm/h
    rho_s: float = 0.9  # snow particle reflectivity
    rho_0_floor: float = DEFAULT_RHO_0  # assumed target reflectivity for amplitude recovery
    seed: int = 0
    peak_grid_step: float | None = None  # defaults to c*tau_H / 100
    density_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise ConfigurationError("snowfall rate must be >= 0")
        if not 0.0 < self.rho_s <= 1.0:
            raise ConfigurationError("rho_s must be in (0, 1]")
        if self.rho_0_floor <= 0:
            raise ConfigurationError("rho_0_floor must be > 0")


@dataclass
class FrameStats:
    """Per-frame bookkeeping emitted with every augmentation result."""

    label_counts: dict[str, int] = field(default_factory=dict)
    particles_per_layer: dict[int, int] = field(default_factory=dict)
    power_clamped: int = 0
    zero_profile: int = 0
    intensity_saturated: int = 0
    range_clamped: int = 0

    def to_dict(self) -> dict:
        return {
            "label_counts": dict(self.label_counts),
            "particles_per_layer": {str(k): v for k, v in sorted(self.particles_per_layer.items())},
            "power_clamped": self.power_clamped,
            "zero_profile": self.zero_profile,
            "intensity_saturated": self.intensity_saturated,
            "range_clamped": self.range_clamped,
        }


@dataclass(frozen=True)
class AugmentationResult:
    """Augmented cloud, a per-input-point label, and frame statistics."""

    cloud: PointCloud
    labels: np.ndarray  # uint8 LABEL_* codes, one per input point
    stats: FrameStats

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        self.stats.label_counts = {
            name: int((labels == code).sum()) for code, name in enumerate(LABEL_NAMES)
        }


def layer_field_seed(master_seed: int, layer: int) -> int:
    """Deterministic per-layer field seed derived from the frame seed."""
    return int(np.random.SeedSequence([int(master_seed), int(layer)]).generate_state(1)[0])


def _check_layers(pc: PointCloud, calib: SensorCalibration) -> None:
    if len(pc) == 0:
        return
    if (pc.layer < 0).any():
        raise ConfigurationError("cloud has unassigned layer ids; run assign_layers first")
    top = int(pc.layer.max())
    if top >= calib.n_lasers:
        raise ConfigurationError(f"layer {top} has no calibration (n_lasers = {calib.n_lasers})")


def beam_profile(
    pc: PointCloud,
    index: int,
    calib: SensorCalibration,
    cfg: PipelineConfig,
    fld: ParticleField | None = None,
) -> EchoProfile:
    """Echo lobes the pipeline superposes for one beam (diagnostics path).

    Builds the same amplitudes as :func:`augment_snow` through the
    single-beam geometry API; pass ``fld`` to reuse a known field instead
    of sampling the layer's own.
    """
    point = pc[index]
    layer = point.layer
    if layer < 0 or layer >= calib.n_lasers:
        raise ConfigurationError(f"point {index} has no calibrated layer ({layer})")
    laser = calib.lasers[layer]
    if fld is None:
        fld = sample_field(
            calib.max_range, cfg.rate, layer_field_seed(cfg.seed, layer), cfg.density_scale
        )
    r0 = point.range
    theta = calib.beam_divergence
    width = SPEED_OF_LIGHT * calib.pulse_width
    hits = occlusion_angles(particles_in_beam(fld, point.x, point.y, r0, theta), theta)
    p_r = float(
        invert_calibration(point.i, r0, laser, calib.max_range)
    )
    terms = []
    for h in hits:
        if h.kind == "target":
            amp = max(p_r, 0.0) * h.theta * float(xi(r0, calib.overlap_near, calib.overlap_far)) / theta
        else:
            xi_j = float(xi(h.r, calib.overlap_near, calib.overlap_far))
            amp = (
                (cfg.rho_s * laser.max_intensity / cfg.rho_0_floor)
                * cfg.rho_s
                * h.theta
                * xi_j
                / (theta * h.r * h.r)
                if xi_j > 0.0
                else 0.0
            )
        terms.append(EchoTerm(amp, h.r, width))
    return EchoProfile(terms)


def augment_snow(
    pc: PointCloud,
    calib: SensorCalibration,
    cfg: PipelineConfig,
    field_override: Mapping[int, ParticleField] | None = None,
) -> AugmentationResult:
    """Simulate snowfall on one sweep; deterministic in (pc, calib, cfg).

    ``field_override`` substitutes pre-built particle fields for given
    layers (diagnostics and replay); all other layers sample normally.
    """
    _check_layers(pc, calib)
    n = len(pc)
    labels = np.zeros(n, dtype=np.uint8)
    stats = FrameStats()
    if n == 0 or (cfg.rate == 0.0 and not field_override):
        return AugmentationResult(pc, labels, stats)

    width = SPEED_OF_LIGHT * calib.pulse_width
    dr = cfg.peak_grid_step if cfg.peak_grid_step is not None else width / GRID_STEPS_PER_LOBE
    theta = calib.beam_divergence
    r_near, r_far = calib.overlap_near, calib.overlap_far

    # Phase 1: per layer, collect every beam that crosses a particle
    # together with its lobe data; the expensive peak search then runs
    # once, grouped by lobe count across all layers.
    beams = _BeamAccumulator()
    for layer in range(calib.n_lasers):
        sel = np.flatnonzero(pc.layer == layer)
        if sel.size == 0:
            continue
        if field_override is not None and layer in field_override:
            fld = field_override[layer]
        else:
            fld = sample_field(
                calib.max_range, cfg.rate, layer_field_seed(cfg.seed, layer), cfg.density_scale
            )
        stats.particles_per_layer[layer] = len(fld)
        if len(fld) == 0:
            continue
        _collect_layer_beams(pc, sel, fld, calib.lasers[layer], calib, cfg, stats, beams)

    if not beams.gidx:
        return AugmentationResult(pc, labels, stats)

    # Phase 2: grouped peak search and write-back.
    out_xyz = pc.xyz.astype(np.float64)
    out_i = pc.intensity.astype(np.float64)
    gidx = np.concatenate(beams.gidx)
    counts = np.concatenate(beams.counts)
    amp_t = np.concatenate(beams.amp_target)
    r0 = np.concatenate(beams.r0)
    i_in = np.concatenate(beams.i_in)
    f_s = np.concatenate(beams.f_s)
    f_o = np.concatenate(beams.f_o)
    i_max = np.concatenate(beams.i_max)
    amp_p = np.concatenate(beams.amp_part)
    rc_p = np.concatenate(beams.rc_part)
    seg_start = np.concatenate([[0], np.cumsum(counts)[:-1]])

    for m in np.unique(counts):
        rows = np.flatnonzero(counts == m)
        flat = seg_start[rows][:, None] + np.arange(m)[None, :]
        amps = np.empty((rows.size, m + 1), dtype=np.float64)
        starts = np.empty((rows.size, m + 1), dtype=np.float64)
        amps[:, :m] = amp_p[flat]
        starts[:, :m] = rc_p[flat]
        amps[:, m] = amp_t[rows]
        starts[:, m] = r0[rows]
        peak, r_star = batched_max_peak(amps, starts, width, dr)

        low = r_star < MIN_OUTPUT_RANGE
        stats.range_clamped += int(low.sum())
        r_star = np.maximum(r_star, MIN_OUTPUT_RANGE)
        i_new = peak + i_max[rows] * correction_term(r_star, f_s[rows], f_o[rows], calib.max_range)
        sat = i_new > i_max[rows]
        stats.intensity_saturated += int(sat.sum())
        i_new = np.clip(i_new, 0.0, i_max[rows])

        g = gidx[rows]
        scale = r_star / r0[rows]
        out_xyz[g] = out_xyz[g] * scale[:, None]
        out_i[g] = i_new
        moved = np.abs(r_star - r0[rows]) > 0.5 * width
        dimmed = i_new.astype(np.float32) < pc.intensity[g]  # compare as stored
        labels[g] = np.where(
            moved, LABEL_SCATTERED, np.where(dimmed, LABEL_ATTENUATED, LABEL_UNCHANGED)
        ).astype(np.uint8)

    cloud = PointCloud(
        out_xyz.astype(np.float32), out_i.astype(np.float32), pc.layer, pc.frame_id
    )
    return AugmentationResult(cloud, labels, stats)


class _BeamAccumulator:
    """Flat per-beam lobe data collected across layers."""

    def __init__(self) -> None:
        self.gidx: list[np.ndarray] = []  # global point index per dirty beam
        self.counts: list[np.ndarray] = []  # particle lobes per dirty beam
        self.amp_target: list[np.ndarray] = []
        self.r0: list[np.ndarray] = []
        self.i_in: list[np.ndarray] = []
        self.f_s: list[np.ndarray] = []
        self.f_o: list[np.ndarray] = []
        self.i_max: list[np.ndarray] = []
        self.amp_part: list[np.ndarray] = []  # flattened, beam-major
        self.rc_part: list[np.ndarray] = []


def _collect_layer_beams(pc, sel, fld, laser, calib, cfg, stats, beams: _BeamAccumulator) -> None:
    theta = calib.beam_divergence
    xyz = pc.xyz[sel].astype(np.float64)
    r0 = np.linalg.norm(xyz, axis=1)
    has_direction = (xyz[:, 0] != 0.0) | (xyz[:, 1] != 0.0)
    phi = np.arctan2(xyz[:, 1], xyz[:, 0])

    geo = FieldGeometry(fld)
    bid, part = geo.query_flat(phi, r0, theta)
    if bid.size:
        keep = has_direction[bid]
        bid, part = bid[keep], part[keep]
    if bid.size == 0:
        return

    order = np.lexsort((part, geo.rc[part], bid))
    bid, part = bid[order], part[order]
    lo, hi = geo.intervals(part, phi[bid], theta)
    rc = geo.rc[part]

    dirty = np.unique(bid)
    seg_start = np.searchsorted(bid, dirty, side="left")
    seg_end = np.searchsorted(bid, dirty, side="right")
    counts = seg_end - seg_start

    # Visible angles: the one- and two-lobe cases vectorise, the rest
    # run the exact sweep per beam.
    theta_j = np.empty(bid.size, dtype=np.float64)
    theta_0 = np.empty(dirty.size, dtype=np.float64)
    one = counts == 1
    pos = seg_start[one]
    theta_j[pos] = np.maximum(hi[pos] - lo[pos], 0.0)
    theta_0[one] = np.maximum(theta - theta_j[pos], 0.0)
    two = counts == 2
    pos = seg_start[two]
    first = np.maximum(hi[pos] - lo[pos], 0.0)
    overlap = np.minimum(hi[pos], hi[pos + 1]) - np.maximum(lo[pos], lo[pos + 1])
    second = np.maximum(hi[pos + 1] - lo[pos + 1] - np.maximum(overlap, 0.0), 0.0)
    theta_j[pos] = first
    theta_j[pos + 1] = second
    theta_0[two] = np.maximum(theta - first - second, 0.0)
    for k in np.flatnonzero(counts > 2):
        s, e = seg_start[k], seg_end[k]
        tj, t0 = occlusion_sweep(lo[s:e], hi[s:e], theta)
        theta_j[s:e] = tj
        theta_0[k] = t0

    # Lobe amplitudes. rho_0 cancels for the target; for particles it
    # sets the particle/target ratio (see module docstring).
    i_in = pc.intensity[sel[dirty]].astype(np.float64)
    r0_d = r0[dirty]
    p_r = invert_calibration(i_in, r0_d, laser, calib.max_range)
    amp_target = np.maximum(p_r, 0.0) * theta_0 * xi(r0_d, calib.overlap_near, calib.overlap_far) / theta
    xi_part = xi(rc, calib.overlap_near, calib.overlap_far)
    with np.errstate(divide="ignore", invalid="ignore"):
        amp_part = (
            (cfg.rho_s * laser.max_intensity / cfg.rho_0_floor)
            * cfg.rho_s
            * theta_j
            * xi_part
            / (theta * rc * rc)
        )
    amp_part = np.where(xi_part > 0.0, amp_part, 0.0)

    clamped = p_r <= 0.0
    stats.power_clamped += int(clamped.sum())
    energy = amp_target + np.add.reduceat(amp_part, seg_start)
    dead = ~clamped & (energy <= 0.0)
    stats.zero_profile += int(dead.sum())
    process = ~clamped & ~dead
    if not process.any():
        return

    rows = np.flatnonzero(process)
    seg_lens = counts[rows]
    total = int(seg_lens.sum())
    flat = np.repeat(seg_start[rows] - np.cumsum(seg_lens) + seg_lens, seg_lens) + np.arange(total)
    beams.gidx.append(sel[dirty[rows]])
    beams.counts.append(seg_lens)
    beams.amp_target.append(amp_target[rows])
    beams.r0.append(r0_d[rows])
    beams.i_in.append(i_in[rows])
    beams.f_s.append(np.full(rows.size, laser.focal_slope))
    beams.f_o.append(np.full(rows.size, laser.focal_offset))
    beams.i_max.append(np.full(rows.size, laser.max_intensity))
    beams.amp_part.append(amp_part[flat])
    beams.rc_part.append(rc[flat])
