"""Image file handling: PNG (8/16-bit gray or RGB) and PGM, plus encoders
for the HTTP surface. Pixel data travels as float arrays in [0, 1]."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, InvalidArgument

__all__ = [
    "load_image",
    "save_image",
    "encode_png",
    "decode_image",
    "test_pattern",
]


def _to_float(img: Image.Image) -> np.ndarray:
    if img.mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(img, dtype=np.float64)
        return np.clip(arr / 65535.0, 0.0, 1.0)
    if img.mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    if img.mode in ("RGB", "RGBA"):
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
        return arr
    if img.mode == "P":
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    raise FormatError(f"unsupported image mode {img.mode!r}")


def load_image(path: str | Path) -> np.ndarray:
    """Read PNG or PGM into float [0,1]; (H,W) gray or (H,W,3) color."""
    try:
        with Image.open(path) as img:
            return _to_float(img)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise FormatError(f"cannot decode image {path}: {exc}") from exc


def decode_image(data: bytes) -> np.ndarray:
    """Decode in-memory PNG/PGM bytes (HTTP source uploads)."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            return _to_float(img)
    except OSError as exc:
        raise FormatError(f"cannot decode image bytes: {exc}") from exc


def _to_pil(image: np.ndarray, bit_depth: int) -> Image.Image:
    arr = np.asarray(image, dtype=float)
    if arr.ndim not in (2, 3):
        raise InvalidArgument(f"image must be HxW or HxWx3, got shape {arr.shape}")
    arr = np.clip(arr, 0.0, 1.0)
    if arr.ndim == 3:
        if arr.shape[2] not in (3, 4):
            raise InvalidArgument("color images need 3 or 4 channels")
        if bit_depth != 8:
            raise InvalidArgument("color output is 8-bit only")
        return Image.fromarray((arr[:, :, :3] * 255.0).round().astype(np.uint8), "RGB")
    if bit_depth == 8:
        return Image.fromarray((arr * 255.0).round().astype(np.uint8), "L")
    if bit_depth == 16:
        return Image.fromarray((arr * 65535.0).round().astype(np.uint16))
    raise InvalidArgument("bit_depth must be 8 or 16")


def save_image(path: str | Path, image: np.ndarray, *, bit_depth: int = 8) -> None:
    """Write PNG or PGM chosen by file extension."""
    path = Path(path)
    pil = _to_pil(image, bit_depth)
    suffix = path.suffix.lower()
    if suffix == ".png":
        pil.save(path, format="PNG")
    elif suffix == ".pgm":
        if pil.mode not in ("L", "I;16"):
            raise InvalidArgument("PGM holds grayscale only")
        pil.save(path, format="PPM")
    else:
        raise InvalidArgument(f"unsupported image extension {suffix!r}")


def encode_png(image: np.ndarray, *, bit_depth: int = 8) -> bytes:
    """PNG bytes for HTTP/WS responses."""
    buf = io.BytesIO()
    _to_pil(image, bit_depth).save(buf, format="PNG")
    return buf.getvalue()


def test_pattern(height: int = 256, width: int = 256) -> np.ndarray:
    """Resolution-chart style default source: bars, rings, and a ramp.

    Serves as the scene when nothing has been uploaded yet, so frames and
    streams work out of the box.
    """
    if height < 16 or width < 16:
        raise InvalidArgument("test pattern needs at least 16x16 pixels")
    y, x = np.mgrid[0:height, 0:width]
    u = x / (width - 1)
    v = y / (height - 1)
    img = np.full((height, width), 0.5)

    # vertical frequency sweep, top band
    band = v < 0.25
    freq = 4.0 + 60.0 * u
    img[band] = 0.5 + 0.5 * np.sign(np.sin(2.0 * np.pi * freq * u))[band]
    # concentric rings, center
    cy, cx = height / 2.0, width / 2.0
    r = np.hypot(y - cy, x - cx) / (0.5 * min(height, width))
    ring_zone = (v >= 0.25) & (v < 0.75)
    img[ring_zone] = 0.5 + 0.5 * np.cos(2.0 * np.pi * 8.0 * r[ring_zone] ** 2)
    # checkerboard, bottom left
    cells = 16
    checker = ((x * cells // width) + (y * cells // height)) % 2
    zone = (v >= 0.75) & (u < 0.5)
    img[zone] = checker[zone].astype(float)
    # linear ramp, bottom right
    zone = (v >= 0.75) & (u >= 0.5)
    img[zone] = (2.0 * (u[zone] - 0.5)).clip(0.0, 1.0)
    return np.clip(img, 0.0, 1.0)
