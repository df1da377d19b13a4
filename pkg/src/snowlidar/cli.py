"""Batch augmentation front-end.

Processes a directory of binary sweeps: every ceil(1/p_aug)-th frame is
augmented (snow, wet, or snow followed by wet), the rest are copied
byte-for-byte. All randomness is derived from the master seed and the
frame index, so a batch is reproducible regardless of worker count.

Reports are JSON lines, one record per frame plus a final aggregate
record. Exit codes: 0 all frames ok, 1 some frames failed, 2 bad
configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import LinearRangeModel, estimate_power_and_noise
from .dror import DrorConfig, classify_snowfall
from .echo_model import GRID_STEPS_PER_LOBE, SPEED_OF_LIGHT, EchoProfile
from .errors import EstimationError, SnowlidarError
from .pointcloud import PointCloud, SensorCalibration, assign_layers, read_calibration, read_sweep, write_sweep
from .snowfall import PipelineConfig, augment_snow, beam_profile
from .wet_ground import WetParams, augment_wet, fit_ground_plane, sample_water_depth

MODES = ("snow", "wet", "snow+wet")

# Randomness streams hanging off (master seed, frame index).
_STREAM_RATE = 0
_STREAM_SNOW = 1
_STREAM_RANSAC = 2
_STREAM_WATER = 3


def stream_seed(master: int, frame_index: int, stream: int) -> int:
    return int(
        np.random.SeedSequence([int(master), int(frame_index), int(stream)]).generate_state(1)[0]
    )


@dataclass(frozen=True)
class RunConfig:
    mode: str
    input_dir: str
    output_dir: str
    calib_path: str
    p_aug: float = 0.1
    rates: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5)
    dw_mean: float = 0.4
    dw_range: tuple[float, float] = (0.1, 1.2)
    seed: int = 0
    workers: int = 1
    rho_s: float = 0.9
    rho_0_floor: float = 1e-6 / math.pi
    # Fallbacks when the per-frame power/noise estimation cannot be made.
    default_power: tuple[float, float] = (-1.5, 220.0)
    default_noise: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 <= self.p_aug <= 1.0:
            raise ValueError("p_aug must be in [0, 1]")
        if any(r < 0 for r in self.rates) or not self.rates:
            raise ValueError("rate grid must be non-empty with values >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def stride(self) -> int | None:
        if self.p_aug <= 0.0:
            return None
        return max(int(math.ceil(1.0 / self.p_aug)), 1)


def _atomic_bytes(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _atomic_copy(src: Path, dst: Path) -> None:
    tmp = dst.with_name(dst.name + ".tmp")
    shutil.copyfile(src, tmp)
    os.replace(tmp, dst)


def _fallback_models(cfg: RunConfig, calib: SensorCalibration) -> tuple[LinearRangeModel, LinearRangeModel]:
    span = (0.0, calib.max_range)
    return (
        LinearRangeModel(cfg.default_power[0], cfg.default_power[1], span),
        LinearRangeModel(cfg.default_noise[0], cfg.default_noise[1], span),
    )


def _ground_observations(pc: PointCloud, plane) -> np.ndarray:
    xyz = pc.xyz.astype(np.float64)
    offset = xyz @ plane.w
    mask = np.abs(offset - plane.h) < plane.epsilon_g
    r0 = np.linalg.norm(xyz[mask], axis=1)
    cos_a = np.clip(np.abs(offset[mask]) / np.maximum(r0, 1e-12), 1e-9, 1.0)
    return np.column_stack([r0, pc.intensity[mask].astype(np.float64), np.arccos(cos_a)])


def _wet_pass(pc: PointCloud, cfg: RunConfig, calib: SensorCalibration, frame_index: int):
    plane = fit_ground_plane(pc, seed=stream_seed(cfg.seed, frame_index, _STREAM_RANSAC))
    try:
        obs = _ground_observations(pc, plane)
        power, noise = estimate_power_and_noise(obs)
    except EstimationError:
        power, noise = _fallback_models(cfg, calib)
    d_w = sample_water_depth(
        stream_seed(cfg.seed, frame_index, _STREAM_WATER), cfg.dw_mean, cfg.dw_range
    )
    result = augment_wet(pc, plane, WetParams(d_w=d_w), power, noise)
    return result, d_w


def process_frame(cfg: RunConfig, calib: SensorCalibration, frame_index: int, in_path: str, out_path: str) -> dict:
    """Augment or copy a single frame; returns its report record."""
    t0 = time.perf_counter()
    src, dst = Path(in_path), Path(out_path)
    stride = cfg.stride
    selected = stride is not None and frame_index % stride == 0
    record: dict = {
        "frame": frame_index,
        "file": src.name,
        "selected": selected,
        "mode": cfg.mode,
        "status": "ok",
    }
    try:
        if not selected:
            _atomic_copy(src, dst)
            record["runtime_s"] = round(time.perf_counter() - t0, 6)
            return record

        pc = read_sweep(src)
        stats_blobs = []
        if cfg.mode in ("snow", "snow+wet"):
            rate_rng = np.random.default_rng(stream_seed(cfg.seed, frame_index, _STREAM_RATE))
            rate = float(cfg.rates[int(rate_rng.integers(len(cfg.rates)))])
            record["rate_mm_h"] = rate
            pc = assign_layers(pc, calib)
            snow_cfg = PipelineConfig(
                rate=rate,
                rho_s=cfg.rho_s,
                rho_0_floor=cfg.rho_0_floor,
                seed=stream_seed(cfg.seed, frame_index, _STREAM_SNOW),
            )
            result = augment_snow(pc, calib, snow_cfg)
            pc = result.cloud
            stats_blobs.append(("snow", result.stats.to_dict()))
        if cfg.mode in ("wet", "snow+wet"):
            result, d_w = _wet_pass(pc, cfg, calib, frame_index)
            pc = result.cloud
            record["d_w_mm"] = round(d_w, 6)
            stats_blobs.append(("wet", result.stats.to_dict()))
        buf_path = dst.with_name(dst.name + ".tmp")
        write_sweep(pc, buf_path)
        os.replace(buf_path, dst)
        for name, blob in stats_blobs:
            record[name] = blob
    except (SnowlidarError, OSError, ValueError) as exc:
        record["status"] = "error"
        record["error"] = f"{type(exc).__name__}: {exc}"
    record["runtime_s"] = round(time.perf_counter() - t0, 6)
    return record


def _frame_job(args) -> dict:
    return process_frame(*args)


def run_batch(cfg: RunConfig) -> dict:
    """Process every sweep in the input directory; returns the summary record."""
    in_dir, out_dir = Path(cfg.input_dir), Path(cfg.output_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory {in_dir} does not exist")
    calib = read_calibration(cfg.calib_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = sorted(p for p in in_dir.iterdir() if p.suffix == ".bin")
    jobs = [(cfg, calib, k, str(p), str(out_dir / p.name)) for k, p in enumerate(frames)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_frame_job, jobs))
    else:
        records = [_frame_job(job) for job in jobs]
    summary = {
        "aggregate": True,
        "frames": len(records),
        "selected": sum(1 for r in records if r["selected"]),
        "failed": sum(1 for r in records if r["status"] != "ok"),
        "runtime_s": round(sum(r["runtime_s"] for r in records), 6),
    }
    return {"records": records, "summary": summary}


def _write_report(report: dict, stats_out: str | None) -> None:
    lines = [json.dumps(r) for r in report["records"]] + [json.dumps(report["summary"])]
    text = "\n".join(lines) + "\n"
    if stats_out:
        Path(stats_out).write_text(text)
    else:
        sys.stdout.write(text)


def dump_profile(
    sweep_path: str,
    point_index: int,
    calib: SensorCalibration,
    rate: float,
    seed: int,
    out_csv: str,
    rho_s: float = 0.9,
    rho_0_floor: float = 1e-6 / math.pi,
) -> int:
    """Write one beam's superposed power curve as CSV rows (R, P).

    Uses the same per-layer field the batch pipeline would derive for
    frame index 0 with this master seed. Returns the number of rows.
    """
    pc = assign_layers(read_sweep(sweep_path), calib)
    if not 0 <= point_index < len(pc):
        raise IndexError(f"point index {point_index} outside cloud of {len(pc)} points")
    cfg = PipelineConfig(
        rate=rate, rho_s=rho_s, rho_0_floor=rho_0_floor, seed=stream_seed(seed, 0, _STREAM_SNOW)
    )
    profile: EchoProfile = beam_profile(pc, point_index, calib, cfg)
    width = SPEED_OF_LIGHT * calib.pulse_width
    dr = width / GRID_STEPS_PER_LOBE
    starts = [t.r_start for t in profile.terms]
    grid = np.arange(min(starts), max(starts) + width + 0.5 * dr, dr)
    values = profile.evaluate(grid)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["range_m", "power"])
        for r, p in zip(grid, values):
            writer.writerow([f"{r:.6f}", repr(float(p))])
    return int(grid.size)


def run_classification(input_dir: str, dror_cfg: DrorConfig, stats_out: str | None) -> int:
    in_dir = Path(input_dir)
    frames = sorted(p for p in in_dir.iterdir() if p.suffix == ".bin")
    records = []
    print(f"{'frame':<28} {'class':<8} {'removed':>8}")
    for k, path in enumerate(frames):
        label, count = classify_snowfall(read_sweep(path), dror_cfg)
        records.append({"frame": k, "file": path.name, "class": label, "removed_in_box": count})
        print(f"{path.name:<28} {label:<8} {count:>8}")
    if stats_out:
        Path(stats_out).write_text("\n".join(json.dumps(r) for r in records) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snowlidar",
        description="Snowfall and wet-ground augmentation for LiDAR sweeps.",
    )
    parser.add_argument("--mode", choices=MODES, default="snow")
    parser.add_argument("--input", required=True, help="input sweep directory (or file for --dump-profile)")
    parser.add_argument("--output", help="output directory (or CSV path for --dump-profile)")
    parser.add_argument("--calib", help="sensor calibration file")
    parser.add_argument("--p-aug", type=float, default=0.1, help="fraction of frames to augment")
    parser.add_argument("--rates", default="0,0.5,1.0,1.5,2.0,2.5", help="comma-separated snowfall-rate grid, mm/h")
    parser.add_argument("--dw-mean", type=float, default=0.4, help="mean of the water-depth draw, mm")
    parser.add_argument("--dw-range", default="0.1,1.2", help="water-depth truncation interval, mm")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--dump-profile", type=int, metavar="INDEX", help="emit one beam's power curve and exit")
    parser.add_argument("--classify", action="store_true", help="run the DROR snowfall split instead of augmenting")
    parser.add_argument("--stats-out", help="write the JSONL report here instead of stdout")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rates = tuple(float(v) for v in args.rates.split(",") if v != "")
        dw_range = tuple(float(v) for v in args.dw_range.split(","))
        if len(dw_range) != 2:
            raise ValueError("--dw-range needs exactly two values")
    except ValueError as exc:
        parser.error(str(exc))  # exits 2

    if args.classify:
        try:
            return run_classification(args.input, DrorConfig(), args.stats_out)
        except (SnowlidarError, OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

    if args.calib is None:
        parser.error("--calib is required unless --classify is given")
    try:
        if args.dump_profile is not None:
            if args.output is None:
                parser.error("--dump-profile needs --output CSV path")
            calib = read_calibration(args.calib)
            rows = dump_profile(
                args.input, args.dump_profile, calib, rates[0], args.seed, args.output
            )
            print(f"wrote {rows} rows to {args.output}")
            return 0
        if args.output is None:
            parser.error("--output is required")
        cfg = RunConfig(
            mode=args.mode,
            input_dir=args.input,
            output_dir=args.output,
            calib_path=args.calib,
            p_aug=args.p_aug,
            rates=rates,
            dw_mean=args.dw_mean,
            dw_range=dw_range,
            seed=args.seed,
            workers=args.workers,
        )
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_batch(cfg)
    except (SnowlidarError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    _write_report(report, args.stats_out)
    return 1 if report["summary"]["failed"] else 0


if __name__ == "__main__":
    sys.exit(main())
