"""Command-line interface.

Exit codes: 0 success, 1 validation error (bad flags, parameters or input
files), 2 runtime failure.  Every file written gets a
``<file>.provenance.json`` sidecar from which ``ffsrm replay`` can
regenerate it and compare hashes.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .core import OpticalConfig, StackValidationError
from .estimators import HawkTransformer, make_reconstructor
from .io import (TiffFormatError, read_sidecar, read_tiff_image, read_tiff_stack, sha256_file,
                 write_png, write_sidecar, write_tiff_stack)

log = logging.getLogger("ffsrm")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
OUT = "{out}"


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _point(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    return x, y


def _region(text: str):
    try:
        rows, cols = text.split(",")
        r0, r1 = (int(v) for v in rows.split(":"))
        c0, c1 = (int(v) for v in cols.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'r0:r1,c0:c1', got {text!r}") from None
    return slice(r0, r1), slice(c0, c1)


def _add_optics(p):
    g = p.add_argument_group("optics")
    g.add_argument("--wavelength", type=float, help="emission wavelength in nm (510)")
    g.add_argument("--na", type=float, help="numerical aperture (1.42)")
    g.add_argument("--pixel-size", type=float, help="camera pixel size in nm (80)")
    g.add_argument("--immersion-index", type=float, help="immersion refractive index (1.515)")
    g.add_argument("--sample-index", type=float, help="sample refractive index (1.515)")
    g.add_argument("--config", help="key=value configuration file")


def _optics(args, stack_px: float | None = None) -> OpticalConfig:
    base = load_config(args.config).optics if args.config else OpticalConfig()
    return OpticalConfig(
        args.wavelength or base.emission_wavelength_nm,
        args.na or base.numerical_aperture,
        args.pixel_size or stack_px or base.pixel_size_nm,
        args.immersion_index or base.immersion_refractive_index,
        args.sample_index or base.sample_refractive_index)


def _optics_argv(cfg: OpticalConfig) -> list[str]:
    return ["--wavelength", repr(cfg.emission_wavelength_nm), "--na",
            repr(cfg.numerical_aperture), "--pixel-size", repr(cfg.pixel_size_nm),
            "--immersion-index", repr(cfg.immersion_refractive_index),
            "--sample-index", repr(cfg.sample_refractive_index)]


def _provenance(command, argv, params, inputs=(), seeds=None) -> dict:
    import scipy
    return {"tool": "ffsrm", "version": __version__, "command": command, "argv": argv,
            "parameters": params, "seeds": seeds or {},
            "inputs": {str(Path(p).resolve()): sha256_file(p) for p in inputs},
            "software": {"numpy": np.__version__, "scipy": scipy.__version__}}


# -- simulate ---------------------------------------------------------------

def _cmd_simulate(args) -> int:
    from .benchmark import derive_seeds
    from .optics import gibson_lanni_psf
    from .simulator import (CameraModel, PhotokineticsParams, get_preset, make_sample,
                            simulate)

    config = _optics(args)
    sim_cfg = load_config(args.config).simulation if args.config else {}
    sample = args.sample or sim_cfg.get("sample", "tori")
    if args.tau_on is not None or args.tau_off is not None:
        if args.preset:
            raise UsageError("--preset and --tau-on/--tau-off are mutually exclusive")
        kin = PhotokineticsParams(args.tau_on if args.tau_on is not None else 1.0,
                                  args.tau_off if args.tau_off is not None else 1.0, "custom")
    else:
        presets = sim_cfg.get("presets") or ["high"]
        kin = get_preset(args.preset or presets[0])
    frames = args.frames or (sim_cfg.get("frames") or [100])[0]
    seed = args.seed if args.seed is not None else (sim_cfg.get("seeds") or [0])[0]
    g, b, n = derive_seeds(seed)
    opts = {}
    sep = args.separation or sim_cfg.get("separation_nm")
    if sep is not None:
        if sample != "two_point":
            raise ValueError("--separation applies to the two_point sample only")
        opts["separation_nm"] = float(sep)
    density = args.density or sim_cfg.get("density")
    if density is not None:
        if sample == "two_point":
            raise ValueError("--density does not apply to the two_point sample")
        opts["density_per_um" if sample == "actin" else "density_per_um2"] = float(density)
    camera = CameraModel(args.gain if args.gain is not None else sim_cfg.get("camera_gain", 200.0),
                         args.offset if args.offset is not None
                         else sim_cfg.get("camera_offset", 50.0))

    emitters = make_sample(sample, g, pixel_size_nm=config.pixel_size_nm, **opts)
    psf = gibson_lanni_psf(config)
    result = simulate(emitters, frames, kin, g, b, n, config, psf=psf, camera=camera)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    argv = ["simulate", "--sample", sample, "--frames", str(frames), "--seed", str(seed),
            "--tau-on", repr(kin.tau_on), "--tau-off", repr(kin.tau_off),
            "--gain", repr(camera.gain), "--offset", repr(camera.offset),
            *_optics_argv(config), "-o", OUT]
    if "separation_nm" in opts:
        argv[-2:-2] = ["--separation", repr(opts["separation_nm"])]
    if any(k.startswith("density") for k in opts):
        argv[-2:-2] = ["--density", repr(float(density))]
    params = {"sample": sample, "frames": frames, "preset": kin.name, "tau_on": kin.tau_on,
              "tau_off": kin.tau_off, "optics": asdict(config), "camera": asdict(camera),
              "sample_options": opts, "n_emitters": len(emitters)}
    seeds = {"seed": seed, "geometry": g, "blinking": b, "noise": n}
    prov = _provenance("simulate", argv, params, seeds=seeds)

    stack_path = write_tiff_stack(result.stack, out / "stack.tif", kind="raw")
    write_sidecar(stack_path, prov)
    truth = out / "ground_truth.csv"
    emitters.to_csv(truth)
    write_sidecar(truth, prov)
    if args.save_clean:
        clean = write_tiff_stack(result.clean, out / "clean.tif", kind="float")
        write_sidecar(clean, prov)
    if args.export_psf:
        psf_path = write_tiff_stack(psf.values, out / "psf.tif", kind="float",
                                    pixel_size_nm=psf.lateral_step_nm,
                                    extra={"axial_step_nm": psf.axial_step_nm})
        write_sidecar(psf_path, prov)
    log.info("wrote %s (%d frames, %d emitters)", stack_path, frames, len(emitters))
    print(stack_path)
    return EXIT_OK


# -- reconstruct ------------------------------------------------------------

_METHOD_FLAGS = {
    "widefield": {"mode"},
    "esi": {"order", "bins", "images"},
    "sofi": {"order", "lag", "balanced"},
    "srrf": {"mode", "ring_radius", "axes", "mag", "no_iw", "grad_smooth", "antipattern"},
    "sacd": {"mag", "iters", "order", "psf_power"},
    "musical": {"threshold", "alpha", "subpixels", "window"},
}
_ALL_FLAGS = set().union(*_METHOD_FLAGS.values())


def _threshold(text: str):
    if text in ("low", "mid", "high"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("threshold must be a number or low/mid/high") from None


def _method_params(args, config: OpticalConfig) -> dict:
    m = args.method
    given = {f for f in _ALL_FLAGS if getattr(args, f) not in (None, False)}
    stray = sorted(given - _METHOD_FLAGS[m])
    if stray:
        raise UsageError(f"flag(s) {', '.join('--' + s.replace('_', '-') for s in stray)} "
                         f"do not apply to method {m}")
    a = args
    if m == "widefield":
        return {"mode": a.mode or "sum"}
    if m == "esi":
        return {"order": a.order or 4, "bins": a.bins or 100, "n_images": a.images or 1}
    if m == "sofi":
        lag = {"zero": "zero_lag", "distinct": "distinct_frames"}[a.lag or "distinct"]
        return {"order": a.order or 2, "lag_mode": lag, "balanced": bool(a.balanced)}
    if m == "srrf":
        return {"temporal_mode": (a.mode or "trac2").upper(),
                "ring_radius": a.ring_radius if a.ring_radius is not None else 0.5,
                "axes": a.axes or 6, "magnification": a.mag or 5,
                "intensity_weighting": not a.no_iw, "gradient_smoothing": bool(a.grad_smooth),
                "minimize_patterning": bool(a.antipattern)}
    optics = {"wavelength_nm": config.emission_wavelength_nm,
              "numerical_aperture": config.numerical_aperture}
    if m == "sacd":
        return {"magnification": a.mag or 8,
                "lr_iterations": a.iters if a.iters is not None else 10,
                "mpac_order": a.order or 2, "psf_power": a.psf_power, **optics}
    if a.threshold is None:
        raise UsageError("musical needs --threshold (a log10 value or low/mid/high); "
                         "see the 'spectrum' subcommand")
    return {"threshold": a.threshold, "alpha": a.alpha if a.alpha is not None else 4.0,
            "subpixels": a.subpixels or 10, "window_side": a.window, **optics}


def _params_argv(method: str, params: dict) -> list[str]:
    out = ["--method", method]
    p = params
    if method == "widefield":
        out += ["--mode", p["mode"]]
    elif method == "esi":
        out += ["--order", str(p["order"]), "--bins", str(p["bins"]),
                "--images", str(p["n_images"])]
    elif method == "sofi":
        out += ["--order", str(p["order"]),
                "--lag", "zero" if p["lag_mode"] == "zero_lag" else "distinct"]
        out += ["--balanced"] if p["balanced"] else []
    elif method == "srrf":
        out += ["--mode", p["temporal_mode"].lower(), "--ring-radius", repr(p["ring_radius"]),
                "--axes", str(p["axes"]), "--mag", str(p["magnification"])]
        out += [] if p["intensity_weighting"] else ["--no-iw"]
        out += ["--grad-smooth"] if p["gradient_smoothing"] else []
        out += ["--antipattern"] if p["minimize_patterning"] else []
    elif method == "sacd":
        out += ["--mag", str(p["magnification"]), "--iters", str(p["lr_iterations"]),
                "--order", str(p["mpac_order"])]
        out += ["--psf-power", repr(p["psf_power"])] if p["psf_power"] is not None else []
    else:
        out += ["--threshold", str(p["threshold"]), "--alpha", repr(p["alpha"]),
                "--subpixels", str(p["subpixels"])]
        out += ["--window", str(p["window_side"])] if p["window_side"] else []
    return out


def _cmd_reconstruct(args) -> int:
    stack = read_tiff_stack(args.input, args.pixel_size)
    config = _optics(args, stack.pixel_size_nm)
    params = _method_params(args, config)
    if args.hawk:
        if args.method == "sacd":
            raise UsageError("HAWK preprocessing is not supported with SACD")
        stack = HawkTransformer(args.hawk).fit(stack).transform(stack)
    est = make_reconstructor(args.method, pixel_size_nm=config.pixel_size_nm, **params)
    result = est.fit(stack).reconstruct(stack)
    out = Path(args.output)
    tif = write_tiff_stack(result.image, out, kind="float", extra={"method": args.method})
    argv = ["reconstruct", str(Path(args.input).resolve()), *_params_argv(args.method, params),
            *_optics_argv(config), "-o", OUT]
    if args.hawk:
        argv[-2:-2] = ["--hawk", str(args.hawk)]
    if getattr(est, "threshold_", None) is not None:
        params["resolved_threshold"] = est.threshold_
    prov = _provenance("reconstruct", argv,
                       {"method": args.method, "method_parameters": params,
                        "result_parameters": result.parameters, "hawk_levels": args.hawk,
                        "optics": asdict(config), "input_frames": result.input_frame_count},
                       inputs=[args.input])
    write_sidecar(tif, prov)
    if args.png:
        write_png(result.image, args.png, args.gamma)
    log.info("wrote %s (%s)", tif, "x".join(map(str, result.image.shape)))
    print(tif)
    return EXIT_OK


# -- hawk ---------------------------------------------------------------------

def _cmd_hawk(args) -> int:
    order = {"level": "level", "time": "time"}[args.order]
    stack = read_tiff_stack(args.input, args.pixel_size)
    tr = HawkTransformer(args.levels, args.negatives, order).fit(stack)
    out = tr.transform(stack)
    tif = write_tiff_stack(out, args.output, kind="float")
    argv = ["hawk", str(Path(args.input).resolve()), "--levels", str(args.levels),
            "--negatives", args.negatives, "--order", args.order, "-o", OUT]
    if args.pixel_size:
        argv[-2:-2] = ["--pixel-size", repr(args.pixel_size)]
    write_sidecar(tif, _provenance("hawk", argv, {"levels": args.levels,
                                                  "negatives": args.negatives,
                                                  "order": order,
                                                  "input_frames": stack.n_frames,
                                                  "output_frames": out.n_frames},
                                   inputs=[args.input]))
    print(tif)
    return EXIT_OK


# -- metrics ------------------------------------------------------------------

def _cmd_metrics(args) -> int:
    from .metrics import dip_ratio, gaussian_fit_fwhm, line_profile, local_maxima, sbr

    image = read_tiff_image(args.image)
    px = args.pixel_nm or image.pixel_size_nm
    rows: list[list] = []
    if args.metric in ("fwhm", "profile", "dip"):
        if args.p0 is None or args.p1 is None:
            raise UsageError(f"metrics {args.metric} needs --p0 and --p1")
        prof = line_profile(image, args.p0, args.p1, args.width)
        if args.metric == "profile":
            rows.append(["index", "position_px", "position_nm", "value"])
            for i, (pos, v) in enumerate(zip(prof.positions, prof.values)):
                rows.append([i, repr(float(pos)), repr(float(pos * px)), repr(float(v))])
        elif args.metric == "fwhm":
            fit = gaussian_fit_fwhm(prof, px)
            rows.append(["metric", "fwhm_nm", "amplitude", "center_px", "sigma_px", "offset",
                         "residual_norm"])
            rows.append(["fwhm", repr(fit.fwhm_nm), repr(fit.amplitude), repr(fit.center),
                         repr(fit.sigma), repr(fit.offset), repr(fit.residual_norm)])
        else:
            d = dip_ratio(prof)
            rows.append(["metric", "dip_ratio", "n_maxima", "resolved"])
            rows.append(["dip", "" if d is None else repr(d), len(local_maxima(prof.values)),
                         "true" if d is not None and d >= 0.2 else "false"])
    else:
        if args.object is None or args.background is None:
            raise UsageError("metrics sbr needs --object and --background regions")
        obj, bg = args.object, args.background
        rows.append(["metric", "sbr", "object_mean", "background_mean"])
        rows.append(["sbr", repr(sbr(image, obj, bg)), repr(float(image.data[obj].mean())),
                     repr(float(image.data[bg].mean()))])
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    finally:
        if args.output:
            fh.close()
    return EXIT_OK


# -- spectrum -----------------------------------------------------------------

def _cmd_spectrum(args) -> int:
    from .musical import MusicalParams, singular_value_spectrum

    stack = read_tiff_stack(args.input, args.pixel_size)
    config = _optics(args, stack.pixel_size_nm)
    rep = singular_value_spectrum(stack, MusicalParams(window_side=args.window, config=config))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["statistic", "log10_s2_over_s1"])
    for name, v in (("min", rep.second_min), ("mid", rep.second_mid), ("max", rep.second_max)):
        w.writerow([name, repr(v)])
    if args.all:
        w.writerow([])
        k = rep.log_spectra.shape[1]
        w.writerow(["window_row", "window_col"] + [f"log10_s{i + 1}" for i in range(k)])
        for (r0, c0), spec in zip(rep.windows, rep.log_spectra):
            w.writerow([r0, c0] + [repr(float(v)) for v in spec])
    return EXIT_OK


# -- psf / benchmark / replay -------------------------------------------------

def _cmd_psf(args) -> int:
    from .optics import gibson_lanni_psf

    config = _optics(args)
    psf = gibson_lanni_psf(config)
    tif = write_tiff_stack(psf.values, args.output, kind="float",
                           pixel_size_nm=psf.lateral_step_nm,
                           extra={"axial_step_nm": psf.axial_step_nm})
    argv = ["psf", *_optics_argv(config), "-o", OUT]
    write_sidecar(tif, _provenance("psf", argv, {"optics": asdict(config),
                                                 "metadata": psf.metadata}))
    print(tif)
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    from .benchmark import BenchmarkSpec, run_benchmark

    cfg = load_config(args.config)
    overrides = {}
    if args.output:
        overrides["output_dir"] = args.output
    if args.workers:
        overrides["workers"] = args.workers
    spec = BenchmarkSpec.from_config(cfg, **overrides)
    out = run_benchmark(spec)
    print(out)
    return EXIT_OK


def _cmd_replay(args) -> int:
    rec = read_sidecar(args.sidecar)
    argv = list(rec["argv"])
    for path, digest in rec.get("inputs", {}).items():
        if not Path(path).exists():
            raise FileNotFoundError(f"input {path} is missing")
        if sha256_file(path) != digest:
            raise ValueError(f"input {path} changed since the sidecar was written")
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(tmp) / ("out" if rec["command"] == "simulate" else rec["output"])
        argv = [str(target) if a == OUT else a for a in argv]
        code = main(argv)
        if code != EXIT_OK:
            return code
        produced = target / rec["output"] if rec["command"] == "simulate" else target
        digest = sha256_file(produced)
    if digest != rec["output_sha256"]:
        print(f"MISMATCH {rec['output']}: {digest} != {rec['output_sha256']}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"OK {rec['output']} {digest}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ffsrm", description="Fluctuation super-resolution simulator and "
                                          "reconstruction toolkit")
    p.add_argument("--version", action="version", version=f"ffsrm {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a blinking sample and write a TIFF stack")
    s.add_argument("--sample", choices=("actin", "tori", "two_point"))
    s.add_argument("--preset", choices=("low", "medium", "high", "always_on"))
    s.add_argument("--tau-on", type=float)
    s.add_argument("--tau-off", type=float)
    s.add_argument("--frames", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--separation", type=float, help="two_point separation in nm")
    s.add_argument("--density", type=float, help="emitters per um (actin) or um^2 (tori)")
    s.add_argument("--gain", type=float)
    s.add_argument("--offset", type=float)
    s.add_argument("--save-clean", action="store_true", help="also write the noise-free stack")
    s.add_argument("--export-psf", action="store_true", help="also write the 3D PSF")
    s.add_argument("-o", "--output", required=True, help="output directory")
    _add_optics(s)
    s.set_defaults(func=_cmd_simulate)

    r = sub.add_parser("reconstruct", help="run one reconstruction method on a TIFF stack")
    r.add_argument("input")
    r.add_argument("--method", required=True, choices=sorted(_METHOD_FLAGS))
    r.add_argument("-o", "--output", required=True)
    r.add_argument("--order", type=int)
    r.add_argument("--bins", type=int)
    r.add_argument("--images", type=int)
    r.add_argument("--lag", choices=("zero", "distinct"))
    r.add_argument("--balanced", action="store_true")
    r.add_argument("--mode", help="srrf: tra|trppm|trac2|trac3|trac4; widefield: sum|mean")
    r.add_argument("--ring-radius", type=float)
    r.add_argument("--axes", type=int)
    r.add_argument("--mag", type=int)
    r.add_argument("--no-iw", action="store_true")
    r.add_argument("--grad-smooth", action="store_true")
    r.add_argument("--antipattern", action="store_true")
    r.add_argument("--iters", type=int)
    r.add_argument("--psf-power", type=float)
    r.add_argument("--threshold", type=_threshold)
    r.add_argument("--alpha", type=float)
    r.add_argument("--subpixels", type=int)
    r.add_argument("--window", type=int)
    r.add_argument("--hawk", type=int, choices=(3, 4, 5), help="HAWK levels applied first")
    r.add_argument("--png", help="also write an 8-bit preview")
    r.add_argument("--gamma", type=float, help="gamma for the preview")
    _add_optics(r)
    r.set_defaults(func=_cmd_reconstruct)

    h = sub.add_parser("hawk", help="HAWK-expand a TIFF stack")
    h.add_argument("input")
    h.add_argument("-o", "--output", required=True)
    h.add_argument("--levels", type=int, default=5, choices=(3, 4, 5))
    h.add_argument("--negatives", choices=("separate", "absolute"), default="separate")
    h.add_argument("--order", choices=("level", "time"), default="level")
    h.add_argument("--pixel-size", type=float)
    h.set_defaults(func=_cmd_hawk)

    m = sub.add_parser("metrics", help="line profile, FWHM, SBR or dip on an image")
    m.add_argument("metric", choices=("fwhm", "profile", "sbr", "dip"))
    m.add_argument("image")
    m.add_argument("--p0", type=_point, help="profile start 'x,y' in pixels")
    m.add_argument("--p1", type=_point, help="profile end 'x,y' in pixels")
    m.add_argument("--width", type=int, default=1)
    m.add_argument("--object", type=_region, help="object region 'r0:r1,c0:c1'")
    m.add_argument("--background", type=_region, help="background region 'r0:r1,c0:c1'")
    m.add_argument("--pixel-nm", type=float, help="override the image pixel size")
    m.add_argument("-o", "--output", help="CSV file (default stdout)")
    m.set_defaults(func=_cmd_metrics)

    sp = sub.add_parser("spectrum", help="MUSICAL second-singular-value range")
    sp.add_argument("input")
    sp.add_argument("--window", type=int)
    sp.add_argument("--all", action="store_true", help="also print every window's spectrum")
    _add_optics(sp)
    sp.set_defaults(func=_cmd_spectrum)

    ps = sub.add_parser("psf", help="write the Gibson-Lanni PSF as a TIFF stack")
    ps.add_argument("-o", "--output", required=True)
    _add_optics(ps)
    ps.set_defaults(func=_cmd_psf)

    b = sub.add_parser("benchmark", help="run a benchmark described by a config file")
    b.add_argument("--config", required=True)
    b.add_argument("--output")
    b.add_argument("--workers", type=int)
    b.set_defaults(func=_cmd_benchmark)

    rp = sub.add_parser("replay", help="re-run a provenance sidecar and compare hashes")
    rp.add_argument("sidecar")
    rp.set_defaults(func=_cmd_replay)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (UsageError, ConfigError, StackValidationError, TiffFormatError,
            ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
