"""Distortion-correction transforms for frame sequences.

Every transform consumes and produces 8-bit RGB images as (height, width, 3)
uint8 numpy arrays.  Filtering runs in float64 per channel and rounds once
at the output (IEEE round-half-even), so repeated 8-bit quantization never
accumulates.  Convolution edges use clamp-to-edge replication.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar, Union

import numpy as np
from PIL import Image as PILImage

from .errors import CodecError, ConfigurationError, ContractError
from .mot import BoundingBox

MANIFEST_NAME = "manifest.json"
MANIFEST_SCHEMA_VERSION = 1

FRAME_SUFFIXES = {".png", ".jpg", ".jpeg"}


def _require_rgb8(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) array, got shape {getattr(img, 'shape', None)}")
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {img.dtype}")
    return img


def _quantize(img_f: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img_f), 0, 255).astype(np.uint8)


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Discrete Gaussian taps on [-radius, radius], normalized to sum to 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def _convolve_axis(img_f: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * img_f.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(img_f, pad, mode="edge")
    out = np.zeros_like(img_f)
    for k, weight in enumerate(kernel):
        index = [slice(None)] * img_f.ndim
        index[axis] = slice(k, k + img_f.shape[axis])
        out += weight * padded[tuple(index)]
    return out


def _gaussian_blur_float(img_f: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    kernel = gaussian_kernel(sigma, radius)
    return _convolve_axis(_convolve_axis(img_f, kernel, axis=0), kernel, axis=1)


def gaussian_denoise(img: np.ndarray, sigma: float = 1.0, kernel_radius: int = 2) -> np.ndarray:
    """Separable normalized Gaussian filter; preserves constant images exactly."""
    _require_rgb8(img)
    return _quantize(_gaussian_blur_float(img.astype(np.float64), sigma, kernel_radius))


def horizontal_flip(img: np.ndarray) -> np.ndarray:
    """Mirror columns (x -> width-1-x); bit-exact involution."""
    _require_rgb8(img)
    return np.ascontiguousarray(img[:, ::-1, :])


def mirror_box(box: BoundingBox, image_width: float) -> BoundingBox:
    """Reflect a box horizontally inside an image of the given width.

    Needed to score detections produced on flipped frames against the
    original (unflipped) ground truth.
    """
    if box.left < 0 or box.right > image_width:
        raise ContractError(
            f"box [{box.left}, {box.right}] outside image width {image_width}"
        )
    return BoundingBox(
        left=image_width - box.left - box.width,
        top=box.top,
        width=box.width,
        height=box.height,
    )


def webp_encode(img: np.ndarray, quality: int = 30) -> bytes:
    if not (1 <= quality <= 100):
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    _require_rgb8(img)
    buffer = io.BytesIO()
    try:
        PILImage.fromarray(img, mode="RGB").save(buffer, format="WEBP", quality=quality)
    except Exception as exc:
        raise CodecError(f"webp encode failed: {exc}") from exc
    return buffer.getvalue()


def webp_compress(img: np.ndarray, quality: int = 30) -> np.ndarray:
    """Lossy WEBP encode/decode round trip; dimensions are preserved."""
    data = webp_encode(img, quality)
    try:
        decoded = PILImage.open(io.BytesIO(data)).convert("RGB")
    except Exception as exc:
        raise CodecError(f"webp decode failed: {exc}") from exc
    out = np.asarray(decoded, dtype=np.uint8)
    if out.shape != img.shape:
        raise CodecError(f"webp changed dimensions {img.shape} -> {out.shape}")
    return out


def unsharp_mask(
    img: np.ndarray,
    sigma: float = 1.0,
    amount: float = 1.0,
    kernel_radius: int = 2,
) -> np.ndarray:
    """Sharpen by re-adding the detail lost to a Gaussian blur.

    out = clamp(original + amount * (original - blur(original, sigma))),
    saturating to [0, 255] per channel.  amount 0 is the identity.
    """
    _require_rgb8(img)
    if amount < 0:
        raise ValueError(f"amount must be >= 0, got {amount}")
    img_f = img.astype(np.float64)
    detail = img_f - _gaussian_blur_float(img_f, sigma, kernel_radius)
    return _quantize(img_f + amount * detail)


def gamma_lut(gamma: float) -> np.ndarray:
    """256-entry power-law lookup table v' = round(255 * (v/255) ** gamma)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    values = np.arange(256, dtype=np.float64) / 255.0
    return _quantize(255.0 * np.power(values, gamma))


def gamma_correction(img: np.ndarray, gamma: float = 0.8) -> np.ndarray:
    """Per-pixel power-law remap via a precomputed lookup table."""
    _require_rgb8(img)
    return gamma_lut(gamma)[img]


@dataclass(frozen=True)
class GaussianDenoise:
    sigma: float = 1.0
    kernel_radius: int = 2
    key: ClassVar[str] = "gd"

    def __post_init__(self):
        gaussian_kernel(self.sigma, self.kernel_radius)  # validates

    def apply(self, img: np.ndarray) -> np.ndarray:
        return gaussian_denoise(img, self.sigma, self.kernel_radius)

    def params(self) -> dict:
        return {"sigma": self.sigma, "kernel_radius": self.kernel_radius}


@dataclass(frozen=True)
class HorizontalFlip:
    key: ClassVar[str] = "hf"

    def apply(self, img: np.ndarray) -> np.ndarray:
        return horizontal_flip(img)

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class WebpCompress:
    quality: int = 30
    key: ClassVar[str] = "wc"

    def __post_init__(self):
        if not (1 <= self.quality <= 100):
            raise ValueError(f"quality must be in [1, 100], got {self.quality}")

    def apply(self, img: np.ndarray) -> np.ndarray:
        return webp_compress(img, self.quality)

    def params(self) -> dict:
        return {"quality": self.quality}


@dataclass(frozen=True)
class UnsharpMask:
    sigma: float = 1.0
    amount: float = 1.0
    kernel_radius: int = 2
    key: ClassVar[str] = "um"

    def __post_init__(self):
        gaussian_kernel(self.sigma, self.kernel_radius)
        if self.amount < 0:
            raise ValueError(f"amount must be >= 0, got {self.amount}")

    def apply(self, img: np.ndarray) -> np.ndarray:
        return unsharp_mask(img, self.sigma, self.amount, self.kernel_radius)

    def params(self) -> dict:
        return {"sigma": self.sigma, "amount": self.amount, "kernel_radius": self.kernel_radius}


@dataclass(frozen=True)
class GammaCorrection:
    gamma: float = 0.8
    key: ClassVar[str] = "gc"

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def apply(self, img: np.ndarray) -> np.ndarray:
        return gamma_correction(img, self.gamma)

    def params(self) -> dict:
        return {"gamma": self.gamma}


Stage = Union[GaussianDenoise, HorizontalFlip, WebpCompress, UnsharpMask, GammaCorrection]

_STAGE_KINDS: dict[str, type] = {
    cls.key: cls
    for cls in (GaussianDenoise, HorizontalFlip, WebpCompress, UnsharpMask, GammaCorrection)
}

_INT_PARAMS = {"quality", "kernel_radius"}


@dataclass(frozen=True)
class CorrectionPipeline:
    """Ordered list of frame transforms applied stage by stage."""

    stages: tuple[Stage, ...]

    def apply(self, img: np.ndarray) -> np.ndarray:
        for stage in self.stages:
            img = stage.apply(img)
        return img

    @property
    def mirror_boxes(self) -> bool:
        """True when downstream box mirroring is needed (odd number of flips)."""
        flips = sum(1 for s in self.stages if isinstance(s, HorizontalFlip))
        return flips % 2 == 1

    def describe(self) -> list[dict]:
        return [{"kind": s.key, **s.params()} for s in self.stages]

    @classmethod
    def parse(cls, spec: str) -> "CorrectionPipeline":
        """Parse a pipeline spec like ``wc:quality=30,um:sigma=1.0:amount=1.0``.

        Stages are comma-separated and applied in listed order; parameters
        are colon-separated key=value pairs.  Stage kinds: gd (gaussian
        denoise), hf (horizontal flip), wc (webp compress), um (unsharp
        mask), gc (gamma correction).
        """
        if not spec or not spec.strip():
            raise ValueError("empty pipeline spec")
        stages = []
        for token in spec.split(","):
            token = token.strip()
            if not token:
                raise ValueError(f"empty stage in pipeline spec {spec!r}")
            head, *param_tokens = token.split(":")
            kind = head.strip().lower()
            if kind not in _STAGE_KINDS:
                raise ValueError(
                    f"unknown stage {kind!r}; expected one of {sorted(_STAGE_KINDS)}"
                )
            kwargs = {}
            for param in param_tokens:
                name, eq, raw = param.partition("=")
                name = name.strip()
                if not eq or not name:
                    raise ValueError(f"malformed stage parameter {param!r}")
                try:
                    kwargs[name] = int(raw) if name in _INT_PARAMS else float(raw)
                except ValueError as exc:
                    raise ValueError(f"bad value for {name!r}: {raw!r}") from exc
            try:
                stages.append(_STAGE_KINDS[kind](**kwargs))
            except TypeError as exc:
                raise ValueError(f"bad parameters for stage {kind!r}: {exc}") from exc
        return cls(stages=tuple(stages))


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _list_frames(frames_dir: Path) -> list[Path]:
    return sorted(
        p
        for p in frames_dir.iterdir()
        if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES
    )


def _process_frame(src: Path, target: Path, pipeline: CorrectionPipeline) -> dict:
    if not pipeline.stages:
        data = src.read_bytes()
        target.write_bytes(data)
    else:
        with PILImage.open(src) as decoded:
            img = np.asarray(decoded.convert("RGB"), dtype=np.uint8)
        out = pipeline.apply(img)
        buffer = io.BytesIO()
        PILImage.fromarray(out, mode="RGB").save(buffer, format="PNG")
        data = buffer.getvalue()
        target.write_bytes(data)
    return {"input": src.name, "output": target.name, "sha256": _sha256(data)}


def apply_pipeline(
    frames_dir: Path | str,
    pipeline: CorrectionPipeline,
    out_dir: Path | str,
    overwrite: bool = False,
    workers: int = 1,
) -> dict:
    """Transform every frame in a directory and write a manifest.

    Outputs are PNG (an empty pipeline copies bytes verbatim instead).  A
    frame that fails to read or transform is recorded under "errors" and the
    remaining frames still process.  Existing output files abort the run
    unless overwrite is set.  Results are identical for any worker count;
    manifest entries are ordered by filename.
    """
    frames_dir = Path(frames_dir)
    out_dir = Path(out_dir)
    if not frames_dir.is_dir():
        raise ConfigurationError(f"frames directory {frames_dir} does not exist")
    frames = _list_frames(frames_dir)
    if not frames:
        raise ConfigurationError(f"no frames found in {frames_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    targets = {
        src: out_dir / (src.name if not pipeline.stages else src.stem + ".png")
        for src in frames
    }
    if not overwrite:
        existing = [t.name for t in targets.values() if t.exists()]
        if existing:
            raise ConfigurationError(
                f"output files already exist in {out_dir} (pass overwrite): {existing[:5]}"
            )

    def run_one(src: Path) -> tuple[dict | None, dict | None]:
        try:
            return _process_frame(src, targets[src], pipeline), None
        except Exception as exc:
            return None, {"input": src.name, "error": str(exc)}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_one, frames))
    else:
        outcomes = [run_one(src) for src in frames]

    files = sorted((entry for entry, _ in outcomes if entry), key=lambda e: e["input"])
    errors = sorted((err for _, err in outcomes if err), key=lambda e: e["input"])
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "source_dir": str(frames_dir),
        "output_dir": str(out_dir),
        "pipeline": pipeline.describe(),
        "mirror_boxes": pipeline.mirror_boxes,
        "files": files,
        "errors": errors,
    }
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between two same-shaped 8-bit images."""
    _require_rgb8(a)
    _require_rgb8(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)
