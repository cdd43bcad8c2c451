"""Sample x fluctuation level x frame count x method grid, end to end.

Each simulation key ``(preset, frames, seed)`` is simulated once; every
method/parameter cell and HAWK setting is then reconstructed from it.  The
report directory holds::

    benchmark.csv                 one row per (cell, probe); schema below
    summary.json                  spec, cell statuses and failures
    cells/<cell_id>/image.tif     float reconstruction + provenance sidecar
    cells/<cell_id>/image.png     min-max (optionally gamma) preview
    truth/<sim_key>.csv           ground-truth emitters

Everything except the ``wall_time_s`` column is a deterministic function of
the :class:`BenchmarkSpec`.  ``FFSRM_THREADS`` sets the number of worker
processes when it does not.
"""

from __future__ import annotations

import csv
import itertools
import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigFile
from .core import OpticalConfig
from .estimators import RECONSTRUCTORS, make_reconstructor
from .hawk import HawkParams, hawk_transform
from .io import write_png, write_sidecar, write_tiff_stack
from .optics import abbe_limits
from .probes import (RESOLVED_DIP, out_of_focus_ratio, pair_probe, relative_background,
                     strand_fwhm, torus_radial_probe)
from .simulator import PRESETS, CameraModel, PhotokineticsParams, make_sample, simulate

SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "schema_version", "cell_id", "sample", "preset", "n_frames", "seed", "hawk_levels",
    "method", "params", "status", "error", "frames_used", "output_height", "output_width",
    "pixel_size_nm", "probe", "dip_ratio", "resolved", "n_maxima", "peak_separation_nm",
    "fwhm_nm", "background_rel", "out_of_focus_ratio", "wall_time_s",
)
TIMING_COLUMNS = ("wall_time_s",)
THREADS_ENV = "FFSRM_THREADS"
SAMPLES = ("actin", "tori", "two_point")


@dataclass(frozen=True)
class BenchmarkSpec:
    sample: str
    methods: dict
    frame_counts: tuple = (100,)
    presets: tuple = ("high",)
    seeds: tuple = (0,)
    output_dir: str = "benchmark_out"
    config: OpticalConfig = field(default_factory=OpticalConfig)
    hawk_levels: tuple = (0,)
    gamma: float | None = None
    workers: int | None = None
    sample_options: dict = field(default_factory=dict)
    camera: CameraModel = field(default_factory=CameraModel)
    custom_kinetics: tuple | None = None

    def __post_init__(self):
        if self.sample not in SAMPLES:
            raise ValueError(f"sample must be one of {SAMPLES}, got {self.sample!r}")
        if not self.methods:
            raise ValueError("benchmark needs at least one method")
        if not self.frame_counts:
            raise ValueError("benchmark needs at least one frame count")
        if not self.presets or not self.seeds:
            raise ValueError("benchmark needs at least one preset and one seed")
        for p in self.presets:
            if p == "custom":
                if self.custom_kinetics is None:
                    raise ValueError("preset 'custom' needs tau_on/tau_off")
                PhotokineticsParams(*self.custom_kinetics)
            elif p not in PRESETS:
                raise ValueError(f"unknown preset {p!r}")
        for t in self.frame_counts:
            if int(t) < 2:
                raise ValueError("frame counts must be >= 2")
        for lv in self.hawk_levels:
            if lv != 0:
                HawkParams(int(lv))
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")
        for method, grid in self.methods.items():
            if method not in RECONSTRUCTORS:
                raise ValueError(f"unknown method {method!r}")
            for params in expand_grid(grid):
                make_reconstructor(method, **params)._check_params()

    @classmethod
    def from_config(cls, cfg: ConfigFile, **overrides) -> "BenchmarkSpec":
        sim, bench = cfg.simulation, cfg.benchmark
        methods = {m: dict(cfg.grids.get(m, {})) for m in bench.get("methods", [])}
        for m in cfg.grids:
            methods.setdefault(m, dict(cfg.grids[m]))
        sample = sim.get("sample", "two_point")
        opts = {}
        if "separation_nm" in sim:
            opts["separation_nm"] = float(sim["separation_nm"])
        if "density" in sim:
            key = {"actin": "density_per_um", "tori": "density_per_um2"}.get(sample)
            if key is None:
                raise ValueError("density does not apply to the two_point sample")
            opts[key] = float(sim["density"])
        kinetics = None
        if "tau_on" in sim or "tau_off" in sim:
            kinetics = (float(sim.get("tau_on", 1.0)), float(sim.get("tau_off", 1.0)))
        kw = dict(
            sample=sample, methods=methods,
            frame_counts=tuple(sim.get("frames", [100])),
            presets=tuple(sim.get("presets", ["custom"] if kinetics else ["high"])),
            seeds=tuple(sim.get("seeds", [0])),
            output_dir=str(bench.get("output", "benchmark_out")),
            config=cfg.optics, hawk_levels=tuple(bench.get("hawk_levels", [0])),
            gamma=bench.get("gamma"), workers=bench.get("workers"), sample_options=opts,
            camera=CameraModel(sim.get("camera_gain", 200.0), sim.get("camera_offset", 50.0)),
            custom_kinetics=kinetics)
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = {m: {k: list(v) if isinstance(v, (list, tuple)) else [v]
                            for k, v in g.items()} for m, g in self.methods.items()}
        return d


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product of a ``{param: [values]}`` grid (sorted keys)."""
    keys = sorted(grid)
    values = [v if isinstance(v, list) else [v] for v in (grid[k] for k in keys)]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def derive_seeds(seed: int) -> tuple[int, int, int]:
    """Geometry, blinking and noise seeds for one benchmark seed."""
    g, b, n = np.random.SeedSequence(int(seed)).generate_state(3)
    return int(g), int(b), int(n)


def _kinetics(spec: BenchmarkSpec, preset: str):
    if preset == "custom":
        return PhotokineticsParams(*spec.custom_kinetics, name="custom")
    return PRESETS[preset]


def _sim_key(preset, frames, seed) -> str:
    return f"{preset}-T{frames}-s{seed}"


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def _probe_rows(sample, image, emitters, config):
    lateral, _ = abbe_limits(config)
    cell = {"background_rel": relative_background(image, emitters, 3 * lateral),
            "out_of_focus_ratio": None}
    rows = []
    if sample == "two_point":
        p = pair_probe(image, emitters)
        rows.append({"probe": "pair", "dip_ratio": p.dip, "resolved": p.resolved,
                     "n_maxima": p.n_maxima, "peak_separation_nm": p.peak_separation_nm})
    elif sample == "tori":
        for i, t in enumerate(emitters.geometries):
            p = torus_radial_probe(image, t, name=f"torus{i}")
            rows.append({"probe": f"torus{i}", "dip_ratio": p.dip, "resolved": p.resolved,
                         "n_maxima": p.n_maxima, "peak_separation_nm": p.peak_separation_nm})
    else:
        strands = emitters.geometries
        try:
            cell["out_of_focus_ratio"] = out_of_focus_ratio(image, strands)
        except (ValueError, ZeroDivisionError):
            cell["out_of_focus_ratio"] = None
        for i, s in enumerate(strands):
            rows.append({"probe": f"strand{i}", "fwhm_nm": strand_fwhm(image, s)})
    for r in rows:
        r.update(cell)
    return rows


def _run_sim_key(spec: BenchmarkSpec, preset: str, frames: int, seed: int) -> list[dict]:
    out = Path(spec.output_dir)
    key = _sim_key(preset, frames, seed)
    g, b, n = derive_seeds(seed)
    base = {"schema_version": SCHEMA_VERSION, "sample": spec.sample, "preset": preset,
            "n_frames": frames, "seed": seed}
    try:
        emitters = make_sample(spec.sample, g, pixel_size_nm=spec.config.pixel_size_nm,
                               **spec.sample_options)
        sim = simulate(emitters, frames, _kinetics(spec, preset), g, b, n, spec.config,
                       camera=spec.camera)
    except Exception as exc:  # recorded, remaining keys continue
        return [dict(base, cell_id=f"{key}-simulation", status="failed",
                     error=f"{type(exc).__name__}: {exc}")]
    truth = out / "truth" / f"{key}.csv"
    truth.parent.mkdir(parents=True, exist_ok=True)
    emitters.to_csv(truth)

    rows = []
    for levels in spec.hawk_levels:
        stack = sim.stack
        if levels:
            stack = hawk_transform(stack, HawkParams(int(levels)))
        for method in sorted(spec.methods):
            if levels and method == "sacd":
                continue
            for idx, params in enumerate(expand_grid(spec.methods[method])):
                cell_id = f"{key}-h{levels}-{method}-{idx:02d}"
                row = dict(base, cell_id=cell_id, hawk_levels=levels, method=method,
                           params=json.dumps({k: _jsonable(v) for k, v in params.items()},
                                             sort_keys=True))
                t0 = time.perf_counter()
                try:
                    est = make_reconstructor(method, **params)
                    res = est.fit(stack).reconstruct(stack)
                    wall = time.perf_counter() - t0
                    image = res.image
                    cdir = out / "cells" / cell_id
                    tif = write_tiff_stack(image, cdir / "image.tif", kind="float",
                                           extra={"method": method})
                    write_png(image, cdir / "image.png", spec.gamma)
                    write_sidecar(tif, {
                        "command": "benchmark-cell", "sample": spec.sample, "preset": preset,
                        "n_frames": frames, "seed": seed,
                        "seeds": {"geometry": g, "blinking": b, "noise": n},
                        "hawk_levels": levels, "method": method,
                        "params": {k: _jsonable(v) for k, v in params.items()},
                        "result_parameters": res.parameters,
                        "optics": asdict(spec.config), "camera": asdict(spec.camera),
                        "sample_options": spec.sample_options})
                    row.update(status="ok", error="", frames_used=res.input_frame_count,
                               output_height=image.shape[0], output_width=image.shape[1],
                               pixel_size_nm=image.pixel_size_nm)
                    for probe in _probe_rows(spec.sample, image, emitters, spec.config):
                        rows.append(dict(row, wall_time_s=wall, **probe))
                except Exception as exc:
                    row.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                               wall_time_s=time.perf_counter() - t0,
                               traceback=traceback.format_exc(limit=3))
                    rows.append(row)
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def resolve_workers(spec: BenchmarkSpec) -> int:
    if spec.workers:
        return spec.workers
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return n
    return 1


def run_benchmark(spec: BenchmarkSpec) -> Path:
    """Run every cell of ``spec``; failures are recorded, not raised."""
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = [(p, int(t), int(s)) for p in spec.presets for t in spec.frame_counts
            for s in spec.seeds]
    workers = min(resolve_workers(spec), len(keys))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_sim_key, [spec] * len(keys), *zip(*keys)))
    else:
        results = [_run_sim_key(spec, *k) for k in keys]
    rows = [r for chunk in results for r in chunk]
    rows.sort(key=lambda r: (r["cell_id"], r.get("probe") or ""))

    with open(out / "benchmark.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])

    cells, failures = {}, []
    for r in rows:
        c = cells.setdefault(r["cell_id"], {"status": r.get("status"), "resolved_probes": []})
        if r.get("resolved"):
            c["resolved_probes"].append(r["probe"])
        if r.get("status") == "failed" and r["cell_id"] not in {f["cell_id"] for f in failures}:
            failures.append({"cell_id": r["cell_id"], "error": r.get("error", "")})
    excluded = []
    if any(spec.hawk_levels) and "sacd" in spec.methods:
        excluded.append("HAWK + SACD cells are not generated")
    summary = {"schema_version": SCHEMA_VERSION, "csv_columns": list(CSV_COLUMNS),
               "timing_columns": list(TIMING_COLUMNS), "resolved_dip_threshold": RESOLVED_DIP,
               "spec": spec.to_dict(), "n_cells": len(cells), "n_failed": len(failures),
               "failures": failures, "excluded": excluded, "cells": cells}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True,
                                                 default=str) + "\n")
    return out


def read_benchmark_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
