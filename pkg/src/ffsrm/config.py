"""Plain-text ``key = value`` configuration files.

Lines starting with ``#`` are comments.  Comma-separated values form a list
(a parameter grid for method keys).  A single grid entry that is itself a
tuple, such as the SACD planes, is written with spaces: ``sacd.planes = 1 2 4``.

Recognised keys::

    wavelength_nm, numerical_aperture, pixel_size_nm,
    immersion_refractive_index, sample_refractive_index     optics
    sample, presets, frames, seeds, tau_on, tau_off,
    camera_gain, camera_offset, separation_nm, density     simulation
    methods, hawk_levels, output, gamma, workers           benchmark
    <method>.<parameter>                                   method grids

Unknown keys raise :class:`ConfigError` naming the line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .core import OpticalConfig

OPTICS_KEYS = ("wavelength_nm", "numerical_aperture", "pixel_size_nm",
               "immersion_refractive_index", "sample_refractive_index")
SIMULATION_KEYS = ("sample", "presets", "frames", "seeds", "tau_on", "tau_off",
                   "camera_gain", "camera_offset", "separation_nm", "density")
BENCHMARK_KEYS = ("methods", "hawk_levels", "output", "gamma", "workers")
LIST_KEYS = ("presets", "frames", "seeds", "methods", "hawk_levels")
# Per-method parameters fixed by the optics section rather than the grid.
_OPTICS_PARAMS = ("pixel_size_nm", "wavelength_nm", "numerical_aperture")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    if " " in t:
        return tuple(parse_scalar(p) for p in t.split())
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def parse_value(text: str) -> list:
    parts = [p for p in (s.strip() for s in text.split(",")) if p]
    if not parts:
        raise ValueError("empty value")
    return [parse_scalar(p) for p in parts]


@dataclass
class ConfigFile:
    optics: OpticalConfig = field(default_factory=OpticalConfig)
    simulation: dict = field(default_factory=dict)
    benchmark: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    source: str = ""


def parse_config(text: str, source: str = "<string>") -> ConfigFile:
    """Parse and range-check a configuration document."""
    from .estimators import RECONSTRUCTORS

    optics, simulation, benchmark, grids = {}, {}, {}, {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        try:
            values = parse_value(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno) from None
        single = values[0] if len(values) == 1 else None
        if key in OPTICS_KEYS or key in SIMULATION_KEYS or key in BENCHMARK_KEYS:
            if key not in LIST_KEYS and len(values) != 1:
                raise ConfigError(f"{key} takes a single value", lineno)
            target = optics if key in OPTICS_KEYS else (
                simulation if key in SIMULATION_KEYS else benchmark)
            target[key] = values if key in LIST_KEYS else single
        elif "." in key:
            method, param = key.split(".", 1)
            if method not in RECONSTRUCTORS:
                raise ConfigError(f"unknown method {method!r} in key {key!r}", lineno)
            allowed = set(RECONSTRUCTORS[method]().get_params()) - set(_OPTICS_PARAMS)
            if param not in allowed:
                raise ConfigError(f"unknown {method} parameter {param!r}; "
                                  f"allowed: {', '.join(sorted(allowed))}", lineno)
            grids.setdefault(method, {})[param] = values
        else:
            raise ConfigError(f"unknown key {key!r}", lineno)

    try:
        oc = OpticalConfig(
            emission_wavelength_nm=optics.get("wavelength_nm", 510.0),
            numerical_aperture=optics.get("numerical_aperture", 1.42),
            pixel_size_nm=optics.get("pixel_size_nm", 80.0),
            immersion_refractive_index=optics.get("immersion_refractive_index", 1.515),
            sample_refractive_index=optics.get("sample_refractive_index", 1.515))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"optics: {exc}", seen.get("wavelength_nm")) from None
    for m in benchmark.get("methods", []):
        if m not in RECONSTRUCTORS:
            raise ConfigError(f"unknown method {m!r} in methods", seen["methods"])
    cfg = ConfigFile(oc, simulation, benchmark, grids, source)
    _range_check(cfg, seen)
    return cfg


def _range_check(cfg: ConfigFile, seen: dict) -> None:
    from .estimators import make_reconstructor
    from .simulator import PRESETS, PhotokineticsParams

    sim = cfg.simulation
    for p in sim.get("presets", []):
        if p not in PRESETS and p != "custom":
            raise ConfigError(f"unknown preset {p!r}; choose from {sorted(PRESETS)} or custom",
                              seen["presets"])
    if "tau_on" in sim or "tau_off" in sim:
        try:
            PhotokineticsParams(sim.get("tau_on", 1.0), sim.get("tau_off", 1.0))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), seen.get("tau_on", seen.get("tau_off"))) from None
    for key in ("frames", "seeds", "hawk_levels"):
        src = sim if key in sim else cfg.benchmark
        for v in src.get(key, []):
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{key} entries must be non-negative integers, got {v!r}",
                                  seen[key])
    for v in cfg.simulation.get("frames", []):
        if v < 2:
            raise ConfigError("frame counts must be >= 2", seen["frames"])
    for v in cfg.benchmark.get("hawk_levels", []):
        if v not in (0, 3, 4, 5):
            raise ConfigError("hawk_levels entries must be 0 (off), 3, 4 or 5",
                              seen["hawk_levels"])
    for key in ("camera_gain", "separation_nm", "density", "gamma"):
        src = cfg.benchmark if key == "gamma" else sim
        if key in src and not (isinstance(src[key], (int, float)) and src[key] > 0):
            raise ConfigError(f"{key} must be a positive number", seen[key])
    if "camera_offset" in sim and not (isinstance(sim["camera_offset"], (int, float))
                                       and sim["camera_offset"] >= 0):
        raise ConfigError("camera_offset must be non-negative", seen["camera_offset"])
    w = cfg.benchmark.get("workers")
    if w is not None and not (isinstance(w, int) and w >= 1):
        raise ConfigError("workers must be a positive integer", seen["workers"])
    for method, grid in cfg.grids.items():
        for param, values in grid.items():
            for v in values:
                try:
                    make_reconstructor(method, **{param: v})._check_params()
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{method}.{param} = {v!r}: {exc}",
                                      seen[f"{method}.{param}"]) from None


def load_config(path) -> ConfigFile:
    path = Path(path)
    return parse_config(path.read_text(), str(path))
