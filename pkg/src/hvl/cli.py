"""hvl-render: render a scene with one estimator and report timings/metrics."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .imaging import ImageError, metrics, read_image, write_image
from .pipeline import render, resolve_threads
from .scene import SceneError, load_scene
from .shading import MODES, GatherConfig
from .virtual_lights import parse_radius_mode, write_hvl_csv


@dataclass
class RunReport:
    mode: str
    hvl_count: int
    bands_emission: int
    bands_gather: int
    width: int
    height: int
    threads: int
    seed: int
    time_rsm_ms: float = 0.0
    time_distribute_ms: float = 0.0
    time_direct_ms: float = 0.0
    time_indirect_ms: float = 0.0
    time_total_ms: float = 0.0
    metrics: dict = field(default_factory=dict)

    def flat(self) -> dict:
        d = asdict(self)
        m = d.pop("metrics")
        for k in ("rmse", "psnr", "ssim"):
            if k in m:
                d[k] = m[k]
        return d


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return parse


def _radius(text):
    try:
        parse_radius_mode(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hvl-render", description=__doc__)
    p.add_argument("--scene", required=True, help="scene TOML file or a built-in name (cornell)")
    p.add_argument("--mode", choices=MODES, default="hvl")
    p.add_argument("--hvl-count", type=_positive(int), default=400, help="virtual lights per primary light")
    p.add_argument("--bands-emission", type=_positive(int), default=3)
    p.add_argument("--bands-gather", type=_positive(int), default=5)
    p.add_argument("--radius", type=_radius, default="r2", help="r1, r2 or fixed:VALUE")
    p.add_argument("--k", type=_positive(float), default=1.0, help="radius scale")
    p.add_argument("--vsl-samples", type=_positive(int), default=25)
    p.add_argument("--path-samples", type=_positive(int), default=256)
    p.add_argument("--vpl-clamp", type=_positive(float), default=None)
    p.add_argument("--visibility", action="store_true", help="trace x-to-y visibility in path mode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out.pfm"), help=".pfm or .ppm")
    p.add_argument("--reference", type=Path, help="PFM image to compute metrics against")
    p.add_argument("--report", type=Path, help="write a flat JSON run report here")
    p.add_argument("--dump-hvls", type=Path, help="write the virtual lights as CSV")
    p.add_argument("--threads", type=_positive(int), default=None, help="defaults to $HVL_THREADS or the CPU count")
    p.add_argument("--indirect-only", action="store_true", help="skip direct lighting")
    return p


def run(args) -> RunReport:
    scene = load_scene(args.scene)
    reference = read_image(args.reference) if args.reference else None
    cam = scene.camera
    if reference is not None and (reference.width, reference.height) != (cam.width, cam.height):
        raise ImageError(
            f"reference is {reference.width}x{reference.height} but the camera renders "
            f"{cam.width}x{cam.height}"
        )
    cfg = GatherConfig(
        bands_emission=args.bands_emission,
        bands_gather=args.bands_gather,
        mode=args.mode,
        vsl_samples=args.vsl_samples,
        path_samples=args.path_samples,
        vpl_clamp=args.vpl_clamp,
        seed=args.seed,
        visibility=args.visibility,
    )
    threads = resolve_threads(args.threads)
    result = render(scene, cfg, hvl_count=args.hvl_count, radius=args.radius, k=args.k,
                    threads=threads, indirect_only=args.indirect_only)
    write_image(result.image, args.out)
    if args.dump_hvls:
        write_hvl_csv(result.hvls, args.dump_hvls)
    t = result.timings_ms
    report = RunReport(
        mode=args.mode,
        hvl_count=len(result.hvls),
        bands_emission=args.bands_emission,
        bands_gather=args.bands_gather,
        width=cam.width,
        height=cam.height,
        threads=threads,
        seed=args.seed,
        time_rsm_ms=t["rsm"],
        time_distribute_ms=t["distribute"],
        time_direct_ms=t["direct"],
        time_indirect_ms=t["indirect"],
        time_total_ms=t["total"],
        metrics=metrics(result.image, reference) if reference is not None else {},
    )
    if args.report:
        args.report.write_text(json.dumps(report.flat(), indent=2) + "\n")
    return report


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        report = run(args)
    except (OSError, ValueError) as exc:  # SceneError and ImageError are ValueErrors
        print(f"hvl-render: error: {exc}", file=sys.stderr)
        return 1
    line = f"{report.mode}: {report.width}x{report.height}, {report.time_total_ms:.1f} ms"
    if report.metrics:
        m = report.metrics
        line += f", rmse {m['rmse']:.4f}, psnr {m['psnr']:.2f} dB, ssim {m['ssim']:.4f}"
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
