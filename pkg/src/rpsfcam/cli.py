"""Command-line pipeline driver.

One binary, one stage per subcommand, plus an end-to-end runner. Every stage
reads and writes serialized artifacts (PFM/PNG/JSON/CSV) so stages can be
re-run independently; each emits a run manifest with a config hash and output
checksums so reruns are verifiable byte-for-byte.

Exit codes: 2 missing inputs, 3 invalid configuration (message names the
offending field), 4 numerical failure.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from . import __version__, imgio
from .errors import ConfigurationError, RpsfError
from .mask import MaskSpec, height_map
from .optics import CameraConfig, DEFAULT_WAVELENGTHS, defocus_from_distance
from .psfstack import (
    DEFAULT_APERTURE_SAMPLES,
    DEFAULT_KERNEL,
    DEFAULT_PUPIL_GRID,
    PsfStack,
    build_stack,
    load_stack_dir,
    save_stack_dir,
)
from .scene import LayeredScene, quantize_depth, render
from .sensor import SensorConfig, sense
from .wiener import WienerConfig, metrics, restore_layered
from .depthmap import estimate, plane_accuracy, depth_rmse
from .optim import OBJECTIVES, OptimizeConfig, final_spec, optimize

EXIT_MISSING_INPUT = 2
EXIT_BAD_CONFIG = 3
EXIT_NUMERICAL = 4


# ---------------------------------------------------------------------------
# plumbing


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def stage_command(fn):
    """Map exceptions to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FileNotFoundError as exc:
            _fail(EXIT_MISSING_INPUT, f"missing input: {exc.filename or exc}")
        except (ConfigurationError, json.JSONDecodeError) as exc:
            _fail(EXIT_BAD_CONFIG, str(exc))
        except (RpsfError, FloatingPointError, np.linalg.LinAlgError) as exc:
            _fail(EXIT_NUMERICAL, str(exc))

    return wrapper


def parse_psis(text: str) -> np.ndarray:
    """Defocus list: 'lo:hi:count' (inclusive, uniform) or a JSON array."""
    text = text.strip()
    if text.startswith("["):
        values = np.asarray(json.loads(text), dtype=np.float64)
    else:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"psi list must be 'lo:hi:count' or JSON, got {text!r}")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ConfigurationError("psi count must be positive")
        values = np.linspace(lo, hi, count)
    if values.size > 1 and not np.all(np.diff(values) > 0):
        raise ConfigurationError("psi values must be strictly ascending")
    return values


def stage_seed(seed: int, stage: str) -> int:
    """Derive a per-stage seed; adding a stage never perturbs another's noise."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def write_manifest(out_dir, stage: str, config_doc, seed, outputs):
    """Machine-readable run record: config hash, seed, versions, checksums."""
    manifest = {
        "stage": stage,
        "config_hash": _config_hash(config_doc),
        "seed": seed,
        "versions": {
            "rpsfcam": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "outputs": {name: _sha256(os.path.join(out_dir, name)) for name in sorted(outputs)},
    }
    imgio.atomic_write_text(
        os.path.join(out_dir, "run_manifest.json"), json.dumps(manifest, indent=2) + "\n"
    )
    return manifest


def _read_text(path) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as fh:
        return fh.read()


def _read_json(path):
    return json.loads(_read_text(path))


def _camera_from_doc(doc, where: str = "camera") -> CameraConfig:
    def need(key):
        if key not in doc:
            raise ConfigurationError(f"{where}.{key}: missing required field")
        return doc[key]

    try:
        return CameraConfig(
            focal_length=need("focal_length_m"),
            aperture_diameter=need("aperture_diameter_m"),
            focus_distance=need("focus_distance_m"),
            wavelengths=tuple(doc.get("wavelengths_m", DEFAULT_WAVELENGTHS)),
            refractive_index=doc.get("refractive_index", 1.5),
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def camera_to_doc(cam: CameraConfig) -> dict:
    return {
        "focal_length_m": cam.focal_length,
        "aperture_diameter_m": cam.aperture_diameter,
        "focus_distance_m": cam.focus_distance,
        "wavelengths_m": list(cam.wavelengths),
        "refractive_index": cam.refractive_index,
    }


def _thread_count(ctx) -> int:
    if ctx.obj and ctx.obj.get("threads"):
        return ctx.obj["threads"]
    env = os.environ.get("RPSF_THREADS")
    return max(1, int(env)) if env else 1


def _write_metrics_csv(path, rows):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["file", "psnr_db", "ssim", "rmse"])
    for name, m in rows:
        writer.writerow([name, f"{m['psnr']:.6f}", f"{m['ssim']:.6f}", f"{m['rmse']:.8f}"])
    imgio.atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# commands


@click.group()
@click.version_option(__version__)
@click.option("--threads", type=int, default=None, help="Worker cap (or RPSF_THREADS).")
@click.pass_context
def main(ctx, threads):
    """Rotating-PSF coded-aperture imaging pipeline."""
    ctx.obj = {"threads": threads}


@main.command("mask")
@click.option("--spec", "spec_path", type=click.Path(), help="Mask spec JSON file.")
@click.option("--n-peaks", type=float, default=1.0, show_default=True)
@click.option("--zones", type=int, default=5, show_default=True)
@click.option("--epsilon", type=float, default=0.9, show_default=True)
@click.option("--radius", type=float, default=2e-3, show_default=True, help="Mask radius (m).")
@click.option("--grid", type=int, default=DEFAULT_PUPIL_GRID, show_default=True)
@click.option("--levels", type=int, default=None, help="Staircase the height map.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@stage_command
def mask_cmd(spec_path, n_peaks, zones, epsilon, radius, grid, levels, out_dir):
    """Synthesize the phase mask height map."""
    if spec_path:
        spec = MaskSpec.from_json(_read_text(spec_path))
    else:
        spec = MaskSpec(n_peaks=n_peaks, zones=zones, epsilon=epsilon, radius=radius)
    os.makedirs(out_dir, exist_ok=True)
    pitch = 2.0 * spec.radius / (0.78125 * grid)  # aperture spans 78% of the grid
    hm = height_map(spec, (grid, grid), pitch, levels=levels)
    h_max = spec.lambda_ref / (spec.refractive_index - 1.0)
    imgio.atomic_write_text(os.path.join(out_dir, "mask.json"), spec.to_json() + "\n")
    imgio.write_pfm(os.path.join(out_dir, "height.pfm"), hm.data)
    imgio.write_png(os.path.join(out_dir, "height.png"), hm.data / h_max, bit_depth=16)
    write_manifest(
        out_dir,
        "mask",
        {"spec": json.loads(spec.to_json()), "grid": grid, "levels": levels},
        None,
        ["mask.json", "height.pfm", "height.png"],
    )
    click.echo(f"mask written to {out_dir}")


@main.command("psf")
@click.option("--mask", "mask_path", type=click.Path(), required=True)
@click.option("--camera", "camera_path", type=click.Path(), required=True)
@click.option("--psis", required=True, help="'lo:hi:count' or JSON array.")
@click.option("--kernel-size", type=int, default=DEFAULT_KERNEL, show_default=True)
@click.option("--grid", type=int, default=DEFAULT_PUPIL_GRID, show_default=True)
@click.option(
    "--aperture-samples", type=int, default=DEFAULT_APERTURE_SAMPLES, show_default=True
)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@stage_command
def psf_cmd(ctx, mask_path, camera_path, psis, kernel_size, grid, aperture_samples, out_dir):
    """Build the per-depth, per-channel RPSF kernel stack."""
    spec = MaskSpec.from_json(_read_text(mask_path))
    cam = _camera_from_doc(_read_json(camera_path))
    psi_values = parse_psis(psis)
    workers = _thread_count(ctx)

    def one_plane(psi):
        return build_stack(
            spec, cam, [psi], kernel_size=kernel_size, grid=grid,
            aperture_samples=aperture_samples,
        ).kernels[0]

    if workers > 1 and psi_values.size > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            kernels = np.asarray(list(pool.map(one_plane, psi_values)))
        stack = PsfStack(kernels=kernels, psis=psi_values, wavelengths=np.asarray(cam.wavelengths))
    else:
        stack = build_stack(
            spec, cam, psi_values, kernel_size=kernel_size, grid=grid,
            aperture_samples=aperture_samples,
        )
    save_stack_dir(stack, out_dir)
    outputs = [f"plane_{d:03d}.pfm" for d in range(stack.n_planes)] + ["manifest.json"]
    write_manifest(
        out_dir,
        "psf",
        {
            "mask": json.loads(spec.to_json()),
            "camera": camera_to_doc(cam),
            "psis": psi_values.tolist(),
            "kernel_size": kernel_size,
            "grid": grid,
            "aperture_samples": aperture_samples,
        },
        None,
        outputs,
    )
    click.echo(f"{stack.n_planes}x{stack.n_channels} kernel stack written to {out_dir}")


def _load_scene(aif_path, depth_path, planes, depth_indices: bool) -> LayeredScene:
    aif = imgio.read_image(aif_path)
    if aif.ndim == 2:
        aif = aif[..., None]
    if depth_indices:
        idx = imgio.read_png_indices(depth_path)
        n_planes = int(idx.max()) + 1 if planes is None else len(planes)
        return LayeredScene(aif=aif, plane_index=idx, n_planes=n_planes)
    if planes is None:
        raise ConfigurationError("planes: required when the depth map holds meters")
    depth = imgio.read_image(depth_path)
    return LayeredScene.from_depth(aif, depth, planes)


@main.command("render")
@click.option("--aif", "aif_path", type=click.Path(), required=True, help="All-in-focus image.")
@click.option("--depth", "depth_path", type=click.Path(), required=True)
@click.option("--depth-indices", is_flag=True, help="Depth map is a plane-index PNG.")
@click.option("--planes", "planes_path", type=click.Path(), help="JSON list of plane depths (m).")
@click.option("--stack", "stack_dir", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@stage_command
def render_cmd(aif_path, depth_path, depth_indices, planes_path, stack_dir, out_dir):
    """Render the depth-coded image through the kernel stack."""
    if not os.path.exists(aif_path):
        raise FileNotFoundError(aif_path)
    if not os.path.exists(depth_path):
        raise FileNotFoundError(depth_path)
    planes = _read_json(planes_path) if planes_path else None
    stack = load_stack_dir(stack_dir)
    scene = _load_scene(aif_path, depth_path, planes, depth_indices)
    if scene.n_planes != stack.n_planes:
        raise ConfigurationError(
            f"planes: scene has {scene.n_planes} planes but the stack has {stack.n_planes}"
        )
    coded = render(scene, stack)
    os.makedirs(out_dir, exist_ok=True)
    imgio.write_pfm(os.path.join(out_dir, "coded.pfm"), coded)
    imgio.write_png_indices(os.path.join(out_dir, "plane_index.png"), scene.plane_index)
    write_manifest(
        out_dir,
        "render",
        {"aif": aif_path, "depth": depth_path, "planes": planes, "stack": stack_dir},
        None,
        ["coded.pfm", "plane_index.png"],
    )
    click.echo(f"coded image written to {out_dir}")


@main.command("sense")
@click.option("--in", "in_path", type=click.Path(), required=True, help="Linear image (PFM).")
@click.option("--sensor", "sensor_path", type=click.Path(), help="SensorConfig JSON.")
@click.option("--seed", type=int, default=0, show_default=True, help="Pipeline-level seed.")
@click.option("--raw-out", is_flag=True, help="Also dump the pre-quantization mosaic.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@stage_command
def sense_cmd(in_path, sensor_path, seed, raw_out, out_dir):
    """Apply the sensor model: CFA, noise, ADC, demosaicing."""
    if not os.path.exists(in_path):
        raise FileNotFoundError(in_path)
    doc = _read_json(sensor_path) if sensor_path else {}
    doc["seed"] = stage_seed(doc.get("seed", seed), "sense")
    cfg = SensorConfig(**doc)
    img = np.clip(imgio.read_image(in_path), 0.0, 1.0)
    demosaiced, raw = sense(img, cfg)
    os.makedirs(out_dir, exist_ok=True)
    imgio.write_png(os.path.join(out_dir, "sensed.png"), demosaiced, bit_depth=8)
    outputs = ["sensed.png"]
    if raw_out:
        imgio.write_pfm(os.path.join(out_dir, "raw.pfm"), raw)
        outputs.append("raw.pfm")
    write_manifest(out_dir, "sense", json.loads(cfg.to_json()), cfg.seed, outputs)
    click.echo(f"sensor output written to {out_dir}")


@main.command("deblur")
@click.option("--in", "in_path", type=click.Path(), required=True)
@click.option("--stack", "stack_dir", type=click.Path(), required=True)
@click.option("--plane-index", "index_path", type=click.Path(), help="16-bit plane-index PNG.")
@click.option("--nsr", type=float, default=1e-3, show_default=True)
@click.option("--taper", type=int, default=23, show_default=True)
@click.option("--reference", "ref_path", type=click.Path(), help="Ground truth for metrics.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@stage_command
def deblur_cmd(in_path, stack_dir, index_path, nsr, taper, ref_path, out_dir):
    """Per-depth-layer Wiener restoration."""
    if not os.path.exists(in_path):
        raise FileNotFoundError(in_path)
    stack = load_stack_dir(stack_dir)
    img = imgio.read_image(in_path)
    if img.ndim == 2:
        img = img[..., None]
    if index_path:
        idx = imgio.read_png_indices(index_path)
    elif stack.n_planes == 1:
        idx = np.zeros(img.shape[:2], dtype=np.int64)
    else:
        raise ConfigurationError("plane_index: required when the stack has several planes")
    scene_masks = (idx[None] == np.arange(stack.n_planes)[:, None, None]).astype(np.float64)
    cfg = WienerConfig(nsr=nsr, taper_width=taper)
    restored = restore_layered(img, stack, scene_masks, cfg)
    os.makedirs(out_dir, exist_ok=True)
    imgio.write_pfm(os.path.join(out_dir, "restored.pfm"), restored)
    imgio.write_png(os.path.join(out_dir, "restored.png"), restored, bit_depth=8)
    outputs = ["restored.pfm", "restored.png"]
    if ref_path:
        ref = imgio.read_image(ref_path)
        if ref.ndim == 2:
            ref = ref[..., None]
        _write_metrics_csv(
            os.path.join(out_dir, "metrics.csv"), [("restored.pfm", metrics(restored, ref))]
        )
        outputs.append("metrics.csv")
    write_manifest(
        out_dir,
        "deblur",
        {"input": in_path, "stack": stack_dir, "nsr": nsr, "taper": taper},
        None,
        outputs,
    )
    click.echo(f"restored image written to {out_dir}")


@main.command("depth")
@click.option("--in", "in_path", type=click.Path(), required=True)
@click.option("--stack", "stack_dir", type=click.Path(), required=True)
@click.option("--nsr", type=float, default=1e-3, show_default=True)
@click.option("--window", type=int, default=15, show_default=True)
@click.option("--truth", "truth_path", type=click.Path(), help="Ground-truth plane-index PNG.")
@click.option("--dump-residuals", is_flag=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@stage_command
def depth_cmd(in_path, stack_dir, nsr, window, truth_path, dump_residuals, out_dir):
    """Estimate the per-pixel depth plane from a coded image."""
    if not os.path.exists(in_path):
        raise FileNotFoundError(in_path)
    stack = load_stack_dir(stack_dir)
    img = imgio.read_image(in_path)
    est = estimate(img, stack, nsr=nsr, window=window)
    os.makedirs(out_dir, exist_ok=True)
    imgio.write_png_indices(os.path.join(out_dir, "plane_index.png"), est.plane_index)
    imgio.write_pfm(os.path.join(out_dir, "confidence.pfm"), est.confidence)
    outputs = ["plane_index.png", "confidence.pfm"]
    if dump_residuals:
        for d in range(stack.n_planes):
            name = f"residual_{d:03d}.pfm"
            imgio.write_pfm(os.path.join(out_dir, name), est.residuals[d])
            outputs.append(name)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["metric", "value"])
    writer.writerow(["planes", stack.n_planes])
    if truth_path:
        truth = imgio.read_png_indices(truth_path)
        border = window + stack.kernel_size
        writer.writerow(["interior_accuracy", f"{plane_accuracy(est.plane_index, truth, border):.6f}"])
        writer.writerow(
            ["plane_rmse", f"{depth_rmse(est.plane_index, truth, np.arange(stack.n_planes)):.6f}"]
        )
    imgio.atomic_write_text(os.path.join(out_dir, "summary.csv"), buf.getvalue())
    outputs.append("summary.csv")
    write_manifest(
        out_dir,
        "depth",
        {"input": in_path, "stack": stack_dir, "nsr": nsr, "window": window},
        None,
        outputs,
    )
    click.echo(f"depth map written to {out_dir}")


@main.command("optimize")
@click.option("--init-n", type=float, default=1.0, show_default=True)
@click.option("--init-eps", type=float, default=0.1, show_default=True)
@click.option("--zones", type=int, default=5, show_default=True)
@click.option("--radius", type=float, default=2e-3, show_default=True)
@click.option("--iters", type=int, default=40, show_default=True)
@click.option("--lr", type=float, default=0.1, show_default=True)
@click.option("--objective", type=click.Choice(OBJECTIVES), default=OBJECTIVES[0], show_default=True)
@click.option("--psis", default="-4.5:4.5:7", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@stage_command
def optimize_cmd(init_n, init_eps, zones, radius, iters, lr, objective, psis, out_dir):
    """Gradient ascent on the mask parameters (N, eps)."""
    spec0 = MaskSpec(n_peaks=init_n, zones=zones, epsilon=init_eps, radius=radius)
    cfg = OptimizeConfig(
        lr_mask=lr, iters=iters, psis=tuple(parse_psis(psis)), objective=objective
    )
    traj = optimize(spec0, cfg)
    best = final_spec(spec0, traj).rounded()
    os.makedirs(out_dir, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["iter", "N", "eps", "J"])
    for p in traj:
        writer.writerow([p.iteration, f"{p.n_peaks:.8f}", f"{p.epsilon:.8f}", f"{p.objective:.8f}"])
    imgio.atomic_write_text(os.path.join(out_dir, "trajectory.csv"), buf.getvalue())
    imgio.atomic_write_text(os.path.join(out_dir, "mask.json"), best.to_json() + "\n")
    pitch = 2.0 * best.radius / (0.78125 * DEFAULT_PUPIL_GRID)
    hm = height_map(best, (DEFAULT_PUPIL_GRID, DEFAULT_PUPIL_GRID), pitch)
    imgio.write_pfm(os.path.join(out_dir, "height.pfm"), hm.data)
    write_manifest(
        out_dir,
        "optimize",
        {
            "init": json.loads(spec0.to_json()),
            "iters": iters,
            "lr": lr,
            "objective": objective,
            "psis": list(cfg.psis),
        },
        None,
        ["trajectory.csv", "mask.json", "height.pfm"],
    )
    click.echo(
        f"optimized N={best.n_peaks:g} eps={traj[-1].epsilon:.4f} "
        f"J={traj[-1].objective:.4f} ({len(traj) - 1} iterations)"
    )


@main.command("metrics")
@click.option("--a", "a_path", type=click.Path(), required=True)
@click.option("--b", "b_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@stage_command
def metrics_cmd(a_path, b_path, out_path):
    """PSNR / SSIM / RMSE between two images."""
    for p in (a_path, b_path):
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    a, b = imgio.read_image(a_path), imgio.read_image(b_path)
    m = metrics(a, b)
    _write_metrics_csv(out_path, [(os.path.basename(a_path), m)])
    click.echo(f"psnr={m['psnr']:.3f} dB ssim={m['ssim']:.4f} rmse={m['rmse']:.6f}")


# ---------------------------------------------------------------------------
# end-to-end runner


def _need(doc, path: str):
    node = doc
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigurationError(f"{path}: missing required field")
        node = node[part]
    return node


def load_pipeline_config(path):
    """Parse and cross-validate the end-to-end pipeline configuration."""
    doc = _read_json(path)
    spec = MaskSpec.from_json(json.dumps(_need(doc, "mask")))
    cam = _camera_from_doc(_need(doc, "camera"), where="camera")
    sensor_doc = dict(doc.get("sensor", {}))
    planes_doc = _need(doc, "planes")
    if "psis" in planes_doc:
        raw = planes_doc["psis"]
        psis = parse_psis(raw if isinstance(raw, str) else json.dumps(raw))
        depths = None
    elif "depths_m" in planes_doc:
        depths = np.asarray(planes_doc["depths_m"], dtype=np.float64)
        if depths.size == 0 or not np.all(np.diff(depths) > 0):
            raise ConfigurationError("planes.depths_m: must be a nonempty ascending list")
        # nearer objects get larger defocus, so depth order reverses psi order
        green = cam.wavelengths[1]
        psis = np.array(
            [defocus_from_distance(cam, z, green).psi for z in depths[::-1]]
        )
        if not np.all(np.diff(psis) > 0):
            raise ConfigurationError("planes.depths_m: degenerate defocus spacing")
    else:
        raise ConfigurationError("planes: needs either 'psis' or 'depths_m'")
    psf_doc = doc.get("psf", {})
    kernel_size = psf_doc.get("kernel_size", DEFAULT_KERNEL)
    if kernel_size % 2 == 0 or kernel_size < 1:
        raise ConfigurationError("psf.kernel_size: must be odd and positive")
    if len(cam.wavelengths) != 3:
        raise ConfigurationError("camera.wavelengths_m: exactly 3 primaries required")
    wiener_doc = doc.get("wiener", {})
    cfg = {
        "seed": int(doc.get("seed", 0)),
        "mask": spec,
        "camera": cam,
        "sensor": sensor_doc,
        "psis": psis,
        "depths": depths,
        "kernel_size": kernel_size,
        "grid": psf_doc.get("grid", DEFAULT_PUPIL_GRID),
        "aperture_samples": psf_doc.get("aperture_samples", DEFAULT_APERTURE_SAMPLES),
        "wiener": WienerConfig(
            nsr=wiener_doc.get("nsr", 1e-3), taper_width=wiener_doc.get("taper_width", 23)
        ),
        "depth_nsr": doc.get("depth", {}).get("nsr", 1e-3),
        "depth_window": doc.get("depth", {}).get("window", 15),
        "paths": {
            "aif": _need(doc, "paths.aif"),
            "depth": _need(doc, "paths.depth"),
            "depth_kind": doc.get("paths", {}).get("depth_kind", "indices"),
            "out_dir": _need(doc, "paths.out_dir"),
        },
        "raw_doc": doc,
    }
    if cfg["paths"]["depth_kind"] not in ("indices", "meters"):
        raise ConfigurationError("paths.depth_kind: must be 'indices' or 'meters'")
    if cfg["paths"]["depth_kind"] == "meters" and depths is None:
        raise ConfigurationError("planes.depths_m: required for a metric depth map")
    return cfg


@main.command("run-all")
@click.option("--config", "config_path", type=click.Path(), required=True)
@stage_command
def run_all_cmd(config_path):
    """Execute mask -> psf -> render -> sense -> deblur -> depth."""
    cfg = load_pipeline_config(config_path)
    out = cfg["paths"]["out_dir"]
    os.makedirs(out, exist_ok=True)
    spec, cam = cfg["mask"], cfg["camera"]

    pitch = 2.0 * spec.radius / (0.78125 * cfg["grid"])
    hm = height_map(spec, (cfg["grid"], cfg["grid"]), pitch)
    imgio.write_pfm(os.path.join(out, "height.pfm"), hm.data)

    stack = build_stack(
        spec, cam, cfg["psis"], kernel_size=cfg["kernel_size"], grid=cfg["grid"],
        aperture_samples=cfg["aperture_samples"],
    )
    save_stack_dir(stack, os.path.join(out, "stack"))

    aif = imgio.read_image(cfg["paths"]["aif"])
    if aif.ndim == 2:
        aif = aif[..., None]
    if cfg["paths"]["depth_kind"] == "indices":
        idx = imgio.read_png_indices(cfg["paths"]["depth"])
        scene = LayeredScene(aif=aif, plane_index=idx, n_planes=stack.n_planes)
    else:
        depth_m = imgio.read_image(cfg["paths"]["depth"])
        idx_depth, _ = quantize_depth(depth_m, cfg["depths"])
        # stack planes are psi-ascending, i.e. reversed relative to depth order
        scene = LayeredScene(
            aif=aif, plane_index=stack.n_planes - 1 - idx_depth, n_planes=stack.n_planes
        )
    coded = render(scene, stack)
    imgio.write_pfm(os.path.join(out, "coded.pfm"), coded)
    imgio.write_png_indices(os.path.join(out, "plane_index_true.png"), scene.plane_index)

    sensor_doc = dict(cfg["sensor"])
    sensor_doc["seed"] = stage_seed(cfg["seed"], "sense")
    sensor_cfg = SensorConfig(**sensor_doc)
    demosaiced, _ = sense(np.clip(coded, 0.0, 1.0), sensor_cfg)
    imgio.write_png(os.path.join(out, "sensed.png"), demosaiced, bit_depth=8)

    restored = restore_layered(demosaiced, stack, scene.masks(), cfg["wiener"])
    imgio.write_pfm(os.path.join(out, "restored.pfm"), restored)
    imgio.write_png(os.path.join(out, "restored.png"), restored, bit_depth=8)

    est = estimate(demosaiced, stack, nsr=cfg["depth_nsr"], window=cfg["depth_window"])
    imgio.write_png_indices(os.path.join(out, "plane_index_est.png"), est.plane_index)

    m = metrics(restored, aif)
    border = cfg["depth_window"] + stack.kernel_size
    acc = plane_accuracy(est.plane_index, scene.plane_index, border)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["metric", "value"])
    writer.writerow(["restored_psnr_db", f"{m['psnr']:.6f}"])
    writer.writerow(["restored_ssim", f"{m['ssim']:.6f}"])
    writer.writerow(["restored_rmse", f"{m['rmse']:.8f}"])
    writer.writerow(["depth_interior_accuracy", f"{acc:.6f}"])
    imgio.atomic_write_text(os.path.join(out, "summary.csv"), buf.getvalue())

    outputs = [
        "height.pfm", "coded.pfm", "plane_index_true.png", "sensed.png",
        "restored.pfm", "restored.png", "plane_index_est.png", "summary.csv",
    ]
    write_manifest(out, "run-all", cfg["raw_doc"], cfg["seed"], outputs)
    click.echo(
        f"pipeline complete: psnr={m['psnr']:.2f} dB, depth accuracy={acc:.3f} ({out})"
    )


if __name__ == "__main__":
    main()
