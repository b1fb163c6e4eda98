"""8-bit RGB pixel buffers and PNG file I/O.

PNG decode runs a chunk-level CRC pre-scan before handing the file to
Pillow, so corrupt files fail with PngCorrupt instead of a library-specific
exception.  Grayscale is replicated to RGB and alpha is composited over
white; other bit depths are rejected.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import PngCorrupt

MIN_SIDE = 8  # smallest side the pooled baseline embedder can handle

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class PixelImage:
    """Row-major 8-bit RGB buffer, shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise ValueError("PixelImage needs a (h, w, 3) uint8 array")
        if arr.shape[0] < MIN_SIDE or arr.shape[1] < MIN_SIDE:
            raise ValueError(f"image sides must be >= {MIN_SIDE}, got {arr.shape[:2]}")
        arr.setflags(write=False)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def same_pixels(self, other: "PixelImage") -> bool:
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)


def _check_png_chunks(raw: bytes):
    """Validate signature, chunk layout and CRC32 of every chunk."""
    if len(raw) < len(_PNG_SIGNATURE) or raw[: len(_PNG_SIGNATURE)] != _PNG_SIGNATURE:
        raise PngCorrupt("bad PNG signature")
    pos = len(_PNG_SIGNATURE)
    saw_iend = False
    while pos < len(raw):
        if pos + 8 > len(raw):
            raise PngCorrupt("truncated chunk header")
        (length,) = struct.unpack(">I", raw[pos : pos + 4])
        ctype = raw[pos + 4 : pos + 8]
        end = pos + 8 + length + 4
        if end > len(raw):
            raise PngCorrupt(f"truncated {ctype!r} chunk")
        data = raw[pos + 8 : pos + 8 + length]
        (crc,) = struct.unpack(">I", raw[pos + 8 + length : end])
        if zlib.crc32(ctype + data) & 0xFFFFFFFF != crc:
            raise PngCorrupt(f"CRC mismatch in {ctype!r} chunk")
        if ctype == b"IEND":
            saw_iend = True
        pos = end
    if not saw_iend:
        raise PngCorrupt("missing IEND chunk")


def decode_png(path: str | Path) -> PixelImage:
    """Decode an 8-bit PNG into an RGB PixelImage.

    Grayscale values are replicated across channels; RGBA/LA are composited
    over a white background.  16-bit and other exotic modes are rejected.
    """
    raw = Path(path).read_bytes()
    _check_png_chunks(raw)
    try:
        img = Image.open(BytesIO(raw))
        img.load()
    except Exception as exc:  # Pillow raises several types for broken streams
        raise PngCorrupt(f"{path}: {exc}") from exc
    if img.mode in ("I", "I;16", "I;16B", "F"):
        raise PngCorrupt(f"{path}: unsupported bit depth (mode {img.mode})")
    if img.mode == "P":
        img = img.convert("RGBA")
    if img.mode == "L":
        img = img.convert("RGB")
    elif img.mode in ("RGBA", "LA"):
        rgba = img.convert("RGBA")
        arr = np.asarray(rgba, dtype=np.float64)
        alpha = arr[:, :, 3:4] / 255.0
        rgb = arr[:, :, :3] * alpha + 255.0 * (1.0 - alpha)
        return PixelImage(np.round(rgb).astype(np.uint8))
    elif img.mode != "RGB":
        raise PngCorrupt(f"{path}: unsupported PNG mode {img.mode}")
    return PixelImage(np.asarray(img, dtype=np.uint8).copy())


def encode_png(img: PixelImage, path: str | Path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(img.data), mode="RGB").save(str(path), format="PNG")


def solid_image(width: int, height: int, rgb: tuple[int, int, int]) -> PixelImage:
    arr = np.empty((height, width, 3), dtype=np.uint8)
    arr[:, :] = rgb
    return PixelImage(arr)


def value_noise_image(seed: int, size: int, lattice: int = 5) -> PixelImage:
    """Deterministic smooth color field: a seeded low-res RGB lattice upsampled
    bilinearly to size x size.  Used by the stub generator and synthetic data."""
    if size < MIN_SIDE:
        raise ValueError(f"size must be >= {MIN_SIDE}")
    rng = np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    grid = rng.uniform(0.0, 255.0, size=(lattice, lattice, 3))
    # bilinear upsample of the lattice
    coords = np.linspace(0.0, lattice - 1.0, size)
    x0 = np.floor(coords).astype(int)
    x1 = np.minimum(x0 + 1, lattice - 1)
    fx = coords - x0
    rows = grid[x0] * (1 - fx)[:, None, None] + grid[x1] * fx[:, None, None]
    out = rows[:, x0] * (1 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]
    return PixelImage(np.clip(np.round(out), 0, 255).astype(np.uint8))
