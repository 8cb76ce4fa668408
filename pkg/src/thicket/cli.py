"""Command-line front end: simulate -> integrate -> detect -> track -> evaluate.

Exit codes: 0 success, 2 usage/configuration error, 1 runtime error.
"""

from __future__ import annotations

import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np
from PIL import Image, ImageDraw

from . import anomaly, metrics, simulator, tracker
from .exceptions import ThicketError
from .integrator import FrameSet, ImageIntegrator
from .rasters import (
    load_mask,
    load_png,
    save_mask,
    save_png,
    save_score_field,
    to_uint8,
)

GREEN = (0, 255, 0)
RED = (255, 0, 0)


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Camera-array ground-plane integration, anomaly detection, tracking."""


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

@main.command()
@click.option("--seed", type=int, default=0, show_default=True, help="Scene seed.")
@click.option("--out", type=click.Path(), default="dataset", show_default=True)
@click.option("--density", type=float, default=0.5, show_default=True,
              help="Occluded fraction of vertical rays, in [0, 1).")
@click.option("--frames", type=int, default=1, show_default=True)
@click.option("--fps", type=float, default=30.0, show_default=True)
@click.option("--cameras", type=int, default=10, show_default=True)
@click.option("--baseline", type=float, default=1.0, show_default=True)
@click.option("--altitude", type=float, default=35.0, show_default=True)
@click.option("--fov", type=float, default=41.10, show_default=True)
@click.option("--resolution", type=int, default=1024, show_default=True)
@click.option("--targets", type=int, default=2, show_default=True)
@click.option("--moving/--static", default=False, show_default=True,
              help="Targets on crossing lanes instead of fixed positions.")
@click.option("--target-speed", type=float, default=2.4, show_default=True)
@click.option("--noise-std", type=float, default=0.0, show_default=True)
def simulate(seed, out, density, frames, fps, cameras, baseline, altitude, fov,
             resolution, targets, moving, target_speed, noise_std):
    """Render a seeded synthetic dataset with exact ground truth."""
    if not (0.0 <= density < 1.0):
        raise click.BadParameter("density must be in [0, 1)", param_hint="--density")
    if frames < 1 or cameras < 1 or resolution < 8:
        raise click.BadParameter("frames/cameras/resolution out of range")
    try:
        rig = simulator.default_rig(
            count=cameras, baseline_m=baseline, altitude_m=altitude,
            fov_deg=fov, resolution=resolution,
        )
        spec = simulator.default_scene_spec(
            seed, density, rig=rig, n_targets=targets, moving=moving,
            target_speed_mps=target_speed, noise_std=noise_std,
        )
        path = simulator.simulate_flight(spec, rig, frames, fps, out)
    except ThicketError as exc:
        _fail(str(exc))
    manifest = simulator.load_manifest(path)
    click.echo(
        f"dataset {path}: {manifest['camera_count']} cameras, "
        f"aperture {manifest['aperture_m']:.1f} m, {frames} frame(s), "
        f"{manifest['occluder_disks']} occluder disks, seed {seed}"
    )


# ---------------------------------------------------------------------------
# integrate
# ---------------------------------------------------------------------------

@main.command()
@click.option("--dataset", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(), default=None,
              help="Output directory [default: <dataset>/integrals].")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Frames integrated in parallel.")
def integrate(dataset, out, threads):
    """Integrate every frame of a dataset onto its focal plane."""
    root = Path(dataset)
    out_dir = Path(out) if out else root / "integrals"
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        manifest = simulator.load_manifest(root)
        rig = simulator.manifest_rig(root, manifest)
        plane = simulator.manifest_plane(manifest)
        integ = ImageIntegrator(plane).fit(rig)
    except (OSError, ThicketError, ValueError, KeyError) as exc:
        _fail(str(exc))
    n_frames = manifest["frames"]

    def one(n: int) -> float:
        frames = simulator.load_frames(root, n, manifest)
        t0 = time.perf_counter()
        result = integ.transform(frames)
        dt = time.perf_counter() - t0
        save_png(result.raster, out_dir / f"integral_{n:04d}.png")
        save_png(result.count_map.astype(np.uint8), out_dir / f"count_{n:04d}.png")
        return dt

    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                times = list(pool.map(one, range(n_frames)))
        else:
            times = [one(n) for n in range(n_frames)]
    except FileNotFoundError as exc:
        _fail(f"missing dataset file: {exc}")
    for n, dt in enumerate(times):
        click.echo(f"integral_{n:04d}.png  {dt:.3f} s")
    click.echo(f"mean {sum(times) / len(times):.3f} s/frame over {len(times)} frame(s)")


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def _draw_circles(img: np.ndarray, blobs, colors) -> None:
    h, w = img.shape[:2]
    for blob, color in zip(blobs, colors):
        cx, cy = blob.centroid
        radius = max(5.0, 1.5 * np.sqrt(blob.area / np.pi) + 3.0)
        c0 = max(int(cx - radius) - 1, 0)
        c1 = min(int(cx + radius) + 2, w)
        r0 = max(int(cy - radius) - 1, 0)
        r1 = min(int(cy + radius) + 2, h)
        if c1 <= c0 or r1 <= r0:
            continue
        uu = np.arange(c0, c1, dtype=float) - cx
        vv = np.arange(r0, r1, dtype=float) - cy
        dist = np.sqrt((uu * uu)[None, :] + (vv * vv)[:, None])
        ring = np.abs(dist - radius) <= 1.0
        img[r0:r1, c0:c1][ring] = color


def _overlay(base_u8: np.ndarray, mask: np.ndarray, truth_labels) -> np.ndarray:
    out = base_u8.copy()
    if truth_labels is None:
        out[mask] = GREEN
        blobs = tracker.detect_blobs(mask, min_area=1)
        _draw_circles(out, blobs, [GREEN] * len(blobs))
        return out
    tp = mask & (truth_labels > 0)
    fp = mask & (truth_labels == 0)
    out[tp] = GREEN
    out[fp] = RED
    blobs = tracker.detect_blobs(mask, min_area=1)
    colors = [
        GREEN if np.any(truth_labels[
            b.bounding_box[0]:b.bounding_box[2] + 1,
            b.bounding_box[1]:b.bounding_box[3] + 1] > 0) else RED
        for b in blobs
    ]
    _draw_circles(out, blobs, colors)
    return out


@main.command()
@click.option("--dataset", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--integrals", type=click.Path(), default=None,
              help="Integral image directory [default: <dataset>/integrals].")
@click.option("--raw", is_flag=True, help="Detect on raw camera streams instead.")
@click.option("--confidence", type=float, default=None,
              help="Fixed quantile threshold in [0, 1].")
@click.option("--optimize", is_flag=True,
              help="Supervised threshold search against dataset truth.")
@click.option("--save-scores", is_flag=True, help="Also write float32 score fields.")
@click.option("--out", type=click.Path(), default=None,
              help="Output directory [default: <dataset>/detections].")
def detect(dataset, integrals, raw, confidence, optimize, save_scores, out):
    """Threshold RX anomaly scores into masks and overlays."""
    if (confidence is None) == (not optimize):
        raise click.BadParameter("pass exactly one of --confidence or --optimize")
    if confidence is not None and not (0.0 <= confidence <= 1.0):
        raise click.BadParameter("confidence must be in [0, 1]")
    root = Path(dataset)
    out_dir = Path(out) if out else root / "detections"
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        manifest = simulator.load_manifest(root)
    except OSError as exc:
        _fail(str(exc))
    n_frames = manifest["frames"]

    jobs = []  # (tag, image_u8, valid_or_None, truth_labels_or_None)
    try:
        for n in range(n_frames):
            truth = None
            if optimize:
                if not (root / "truth" / simulator.frame_name(n)).exists():
                    _fail(f"--optimize needs truth files in {root / 'truth'}")
                truth = simulator.load_truth_frame(root, n, manifest)
            if raw:
                for k in range(manifest["camera_count"]):
                    img = load_png(root / f"cam{k}" / simulator.frame_name(n))
                    labels = None
                    if truth is not None:
                        if truth.visibility is None:
                            _fail("dataset has no per-camera visibility truth")
                        labels = truth.visibility[k]
                    jobs.append((f"cam{k}_{n:04d}", img, None, labels))
            else:
                int_dir = Path(integrals) if integrals else root / "integrals"
                ipath = int_dir / f"integral_{n:04d}.png"
                if not ipath.exists():
                    _fail(f"missing integral image {ipath} (run integrate first)")
                img = load_png(ipath)
                cpath = int_dir / f"count_{n:04d}.png"
                valid = load_png(cpath) > 0 if cpath.exists() else None
                labels = truth.labels if truth is not None else None
                jobs.append((f"integral_{n:04d}", img, valid, labels))
    except FileNotFoundError as exc:
        _fail(f"missing dataset file: {exc}")

    n_targets = len(manifest["scene_spec"]["targets"]) or None
    for tag, img, valid, labels in jobs:
        stats = anomaly.background_stats(img, valid=valid)
        field = anomaly.rx_scores(img, stats, valid=valid)
        if optimize:
            conf, mask, prec = anomaly.optimize_threshold(
                field, labels, n_targets=n_targets
            )
            prec_txt = "NoDet" if prec is None else f"{prec:.1f}%"
            click.echo(f"{tag}: confidence {conf:.5f}, precision {prec_txt}")
        else:
            mask = anomaly.threshold_by_confidence(field, confidence)
            click.echo(f"{tag}: confidence {confidence:.5f}, "
                       f"{int(mask.mask.sum())} pixels")
        save_mask(mask.mask, out_dir / f"mask_{tag}.png")
        save_png(_overlay(img, mask.mask, labels), out_dir / f"overlay_{tag}.png")
        if save_scores:
            save_score_field(field.scores.astype(np.float32),
                             out_dir / f"scores_{tag}.bin")


# ---------------------------------------------------------------------------
# track
# ---------------------------------------------------------------------------

@main.command()
@click.option("--masks", type=click.Path(exists=True, file_okay=False), required=True,
              help="Directory of mask PNGs (one per frame).")
@click.option("--pattern", default="mask_integral_*.png", show_default=True)
@click.option("--out", type=click.Path(), default=None,
              help="Output directory [default: <masks>/../tracks].")
@click.option("--dataset", type=click.Path(exists=True, file_okay=False), default=None,
              help="Dataset with truth centroids for id-switch reporting.")
@click.option("--confirm-hits", type=int, default=3, show_default=True)
@click.option("--max-misses", type=int, default=5, show_default=True)
@click.option("--gate-px", type=float, default=30.0, show_default=True)
@click.option("--min-area", type=int, default=4, show_default=True)
def track(masks, pattern, out, dataset, confirm_hits, max_misses, gate_px, min_area):
    """Track blobs through a mask sequence; write CSV and annotated frames."""
    mask_dir = Path(masks)
    paths = sorted(mask_dir.glob(pattern))
    if not paths:
        _fail(f"no masks matching {pattern} in {mask_dir}")
    out_dir = Path(out) if out else mask_dir.parent / "tracks"
    out_dir.mkdir(parents=True, exist_ok=True)
    seq = [load_mask(p) for p in paths]
    bt = tracker.BlobTracker(
        confirm_hits=confirm_hits, max_misses=max_misses,
        gate_px=gate_px, min_area=min_area,
    ).fit(seq)
    tracker.save_tracks_csv(bt.tracks_, out_dir / "tracks.csv")

    by_frame: dict[int, list] = {}
    for t in bt.tracks_:
        for obs in t.history:
            if obs.status == tracker.CONFIRMED:
                by_frame.setdefault(obs.frame, []).append((t.id, obs))
    for n, (path, mask) in enumerate(zip(paths, seq)):
        base = np.stack([to_uint8(mask.astype(float))] * 3, axis=-1)
        im = Image.fromarray(base)
        draw = ImageDraw.Draw(im)
        for tid, obs in by_frame.get(n, []):
            r = 12
            draw.ellipse([obs.x - r, obs.y - r, obs.x + r, obs.y + r],
                         outline=GREEN, width=2)
            draw.text((obs.x + r + 2, obs.y - r), str(tid), fill=GREEN)
        im.save(out_dir / f"tracked_{n:04d}.png", format="PNG")

    confirmed = [t for t in bt.tracks_ if t.was_confirmed()]
    click.echo(f"{len(confirmed)} confirmed track(s) over {len(seq)} frame(s), "
               f"CSV at {out_dir / 'tracks.csv'}")
    if dataset:
        switches = _id_switches(Path(dataset), bt.tracks_, len(seq), gate_px)
        click.echo(f"id switches vs truth: {switches}")


def _id_switches(root: Path, tracks, n_frames: int, gate_px: float) -> int:
    manifest = simulator.load_manifest(root)
    assigned: dict[int, list[int]] = {}
    for n in range(min(n_frames, manifest["frames"])):
        truth = simulator.load_truth_frame(root, n, manifest)
        conf = []
        for t in tracks:
            for obs in t.history:
                if obs.frame == n and obs.status == tracker.CONFIRMED:
                    conf.append((t.id, obs.x, obs.y))
        for i, (px, py) in enumerate(truth.centroids_px):
            best = None
            for tid, x, y in conf:
                d = float(np.hypot(x - px, y - py))
                if d <= gate_px and (best is None or d < best[1]):
                    best = (tid, d)
            if best is not None:
                assigned.setdefault(i, []).append(best[0])
    switches = 0
    for ids in assigned.values():
        switches += sum(1 for a, b in zip(ids, ids[1:]) if a != b)
    return switches


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

@main.command()
@click.argument("datasets", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--frame", type=int, default=0, show_default=True,
              help="Frame index evaluated per dataset.")
@click.option("--out", type=click.Path(), default="report.json", show_default=True)
@click.option("--threads", type=int, default=1, show_default=True,
              help="Datasets evaluated in parallel.")
def evaluate(datasets, frame, out, threads):
    """Raw-vs-integral precision table over one or more datasets."""

    def one(path_str: str):
        root = Path(path_str)
        manifest = simulator.load_manifest(root)
        rig = simulator.manifest_rig(root, manifest)
        plane = simulator.manifest_plane(manifest)
        frames = simulator.load_frames(root, frame, manifest)
        truth = simulator.load_truth_frame(root, frame, manifest)
        if truth.visibility is None:
            raise ThicketError(f"dataset {root} lacks per-camera visibility truth")
        fs = FrameSet(images=tuple(frames), rig=rig, frame_index=frame)
        integral = ImageIntegrator(plane).fit(rig).transform(frames)
        rep = metrics.evaluate_set(
            fs, integral, truth,
            set_id=root.name, light_condition=f"D={manifest['scene_spec']['occluder_density']}",
        )
        cov = metrics.covariance_report(fs, integral)
        return rep, cov

    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one, datasets))
        else:
            results = [one(d) for d in datasets]
    except (OSError, ThicketError, ValueError, KeyError) as exc:
        _fail(str(exc))
    reports = [r for r, _ in results]
    covs = [c for _, c in results]
    click.echo(metrics.format_table(reports), nl=False)
    pas = [r.average for r in reports if r.average is not None]
    pis = [r.integral_precision for r in reports if r.integral_precision is not None]
    if pas and pis:
        click.echo(f"summary: mean raw PAs {sum(pas) / len(pas):.1f}%  "
                   f"mean integral Pi {sum(pis) / len(pis):.1f}%")
    shrink = [c.diagonal_shrink_mean for c in covs]
    click.echo(f"mean diagonal covariance shrink raw/integral: "
               f"{sum(shrink) / len(shrink):.2f}x")
    metrics.save_reports(reports, out, covariance=covs)
    click.echo(f"report written to {out}")


if __name__ == "__main__":
    main()
