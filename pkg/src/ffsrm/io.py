"""TIFF stacks, PNG previews and provenance sidecars.

Raw stacks are stored as 16-bit unsigned pages.  Integer-valued data that
fits is written unchanged; anything else is scaled so its maximum maps to
65535 and the scale factor is recorded in the JSON image description.
Reconstructions are stored as 32-bit float pages (64-bit on request).
The pixel size goes into the resolution tags (pixels per centimetre) and
the description.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import tifffile
from PIL import Image as PILImage

from .core import Image, ImageStack

FORMAT_TAG = "ffsrm-tiff/1"
_SUPPORTED = (np.uint8, np.uint16, np.float32, np.float64)


class TiffFormatError(ValueError):
    """Unreadable or inconsistent TIFF; ``page`` names the offending page when known."""

    def __init__(self, message: str, page: int | None = None):
        self.page = page
        super().__init__(message)


def _resolution(pixel_size_nm: float) -> tuple[float, float]:
    per_cm = 1e7 / pixel_size_nm
    return per_cm, per_cm


def _raw_pages(frames: np.ndarray) -> tuple[np.ndarray, float]:
    if np.any(frames < 0):
        raise ValueError("raw stacks must be non-negative; write them as float pages")
    peak = float(frames.max()) if frames.size else 0.0
    if np.all(frames == np.round(frames)) and peak <= 65535:
        return frames.astype(np.uint16), 1.0
    scale = 65535.0 / peak if peak > 0 else 1.0
    return np.round(frames * scale).astype(np.uint16), scale


def write_tiff_stack(stack, path, kind: str = "raw", float_dtype=np.float32,
                     extra: dict | None = None, pixel_size_nm: float | None = None) -> Path:
    """Write a ``(T, H, W)`` stack or a single image as a multipage TIFF.

    ``kind`` is ``'raw'`` (uint16 pages) or ``'float'``. ``pixel_size_nm``
    overrides the pixel size of the input (required for bare arrays other
    than the 80 nm default).
    """
    path = Path(path)
    if isinstance(stack, Image):
        frames, px = stack.data[None], stack.pixel_size_nm
    elif isinstance(stack, ImageStack):
        frames, px = stack.frames, stack.pixel_size_nm
    else:
        frames, px = np.asarray(stack, dtype=float), 80.0
        if frames.ndim == 2:
            frames = frames[None]
    if frames.ndim != 3:
        raise ValueError(f"expected a (T, H, W) stack, got shape {frames.shape}")
    if pixel_size_nm is not None:
        px = pixel_size_nm
    meta = {"format": FORMAT_TAG, "kind": kind, "pixel_size_nm": float(px),
            "n_frames": int(frames.shape[0])}
    if isinstance(stack, Image):
        meta["upscale_factor"] = stack.upscale_factor
        meta["origin_px"] = stack.origin_px
    elif isinstance(stack, ImageStack) and stack.provenance:
        meta["provenance"] = stack.provenance
    if extra:
        meta.update(extra)
    if kind == "raw":
        data, scale = _raw_pages(frames)
        meta["scale"] = scale
    elif kind == "float":
        dt = np.dtype(float_dtype)
        if dt not in (np.float32, np.float64):
            raise ValueError("float pages must be float32 or float64")
        data = frames.astype(dt)
    else:
        raise ValueError(f"kind must be 'raw' or 'float', got {kind!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    tifffile.imwrite(path, data, byteorder="<", photometric="minisblack",
                     resolution=_resolution(px), resolutionunit="CENTIMETER",
                     description=json.dumps(meta, sort_keys=True), metadata=None)
    return path


def _read_pages(path) -> tuple[np.ndarray, dict, float | None]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        tif = tifffile.TiffFile(path)
    except Exception as exc:
        raise TiffFormatError(f"{path}: not a readable TIFF ({exc})") from exc
    with tif:
        pages = list(tif.pages)
        if not pages:
            raise TiffFormatError(f"{path}: no image pages")
        first = pages[0]
        shape, dtype = first.shape, first.dtype
        if len(shape) != 2:
            raise TiffFormatError(f"{path}: page 0 has shape {shape}; only 2D grayscale pages "
                                  "are supported", 0)
        if dtype.type not in _SUPPORTED:
            raise TiffFormatError(f"{path}: unsupported sample type {dtype} "
                                  f"({first.bitspersample} bits)", 0)
        out = np.empty((len(pages),) + shape, dtype=dtype)
        for i, page in enumerate(pages):
            if page.shape != shape:
                raise TiffFormatError(f"{path}: page {i} has shape {page.shape}, "
                                      f"expected {shape}", i)
            if page.dtype != dtype:
                raise TiffFormatError(f"{path}: page {i} has type {page.dtype}, "
                                      f"expected {dtype}", i)
            out[i] = page.asarray()
        meta = {}
        desc = first.description
        if desc:
            try:
                parsed = json.loads(desc)
                if isinstance(parsed, dict) and parsed.get("format") == FORMAT_TAG:
                    meta = parsed
            except json.JSONDecodeError:
                pass
        px = None
        tags = first.tags
        if "XResolution" in tags and "ResolutionUnit" in tags:
            num, den = tags["XResolution"].value
            unit = int(tags["ResolutionUnit"].value)
            if num > 0 and unit == 3:
                px = 1e7 * den / num
            elif num > 0 and unit == 2:
                px = 2.54e7 * den / num
    return out, meta, px


def read_tiff_stack(path, pixel_size_nm: float | None = None) -> ImageStack:
    """Read a multipage TIFF; raw pages are divided by their recorded scale."""
    data, meta, tag_px = _read_pages(path)
    px = pixel_size_nm or meta.get("pixel_size_nm") or tag_px or 80.0
    frames = data.astype(np.float64)
    scale = float(meta.get("scale", 1.0))
    if scale != 1.0:
        frames = frames / scale
    return ImageStack(frames, pixel_size_nm=float(px),
                      provenance=meta.get("provenance", f"tiff:{Path(path).name}"),
                      allow_negative=np.any(frames < 0))


def read_tiff_image(path) -> Image:
    """Read a single-page reconstruction written by :func:`write_tiff_stack`."""
    data, meta, tag_px = _read_pages(path)
    if data.shape[0] != 1:
        raise TiffFormatError(f"{path}: expected one page, found {data.shape[0]}")
    px = meta.get("pixel_size_nm") or tag_px or 80.0
    return Image(data[0].astype(np.float64), float(px), int(meta.get("upscale_factor", 1)),
                 float(meta.get("origin_px", 0.0)))


def write_png(image, path, gamma: float | None = None) -> Path:
    """8-bit preview with per-image min-max normalisation and optional gamma."""
    img = np.asarray(getattr(image, "data", image), dtype=float)
    lo, hi = float(img.min()), float(img.max())
    norm = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    if gamma is not None:
        norm = norm**gamma
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(np.round(norm * 255).astype(np.uint8), mode="L").save(path)
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".provenance.json")


def write_sidecar(output, record: dict) -> Path:
    """Write ``<output>.provenance.json`` with the record plus the output hash."""
    rec = dict(record)
    rec["output"] = Path(output).name
    rec["output_sha256"] = sha256_file(output)
    p = sidecar_path(output)
    p.write_text(json.dumps(rec, indent=2, sort_keys=True, default=_json_default) + "\n")
    return p


def read_sidecar(path) -> dict:
    p = Path(path)
    if not p.name.endswith(".provenance.json"):
        p = sidecar_path(p)
    return json.loads(p.read_text())


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")
