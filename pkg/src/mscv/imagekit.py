"""Image and disparity-map I/O, colorspace conversion, resolution helpers.

Images are stored planar (channel, row, column) with samples in [0, 1].
Disparity maps carry full-resolution pixel units plus a per-pixel
validity flag; valid pixels satisfy 0 < d < MAX_DISPARITY.

Supported containers: binary PPM (P6) / PGM (P5) at maxval 255, and
grayscale PFM ("Pf", little-endian on write, rows bottom-to-top).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAX_DISPARITY = 192


class FormatError(ValueError):
    """Raised on malformed image or disparity files."""


@dataclass
class Image:
    """Planar raster, shape (channels, height, width), samples in [0, 1]."""

    data: np.ndarray  # float64, (C, H, W)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[0] not in (1, 3):
            raise ValueError(f"image must be (1|3, H, W), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image samples must be finite")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass
class DisparityMap:
    """Dense disparity field in full-resolution pixel units.

    ``valid`` marks pixels carrying a usable disparity; invalid pixels
    hold value 0.
    """

    values: np.ndarray  # float64, (H, W)
    valid: np.ndarray = field(default=None)  # bool, (H, W)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("disparity values must be 2-D")
        if self.valid is None:
            self.valid = np.isfinite(self.values) & (self.values > 0) & (
                self.values < MAX_DISPARITY
            )
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.values.shape:
            raise ValueError("validity mask shape mismatch")
        self.values = np.where(self.valid, self.values, 0.0)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# PPM / PGM codec
# ---------------------------------------------------------------------------


def _read_pnm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comments between header tokens.
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError(f"unexpected end of header at byte {start}")
    return buf[start:pos], pos


def read_image(path) -> Image:
    """Read a binary PPM (P6) or PGM (P5) file with maxval 255."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 2:
        raise FormatError("truncated file at byte 0")
    magic = buf[:2]
    if magic == b"P6":
        channels = 3
    elif magic == b"P5":
        channels = 1
    else:
        raise FormatError(f"bad magic {magic!r} at byte 0")
    pos = 2
    try:
        wtok, pos = _read_pnm_token(buf, pos)
        htok, pos = _read_pnm_token(buf, pos)
        mtok, pos = _read_pnm_token(buf, pos)
        width, height, maxval = int(wtok), int(htok), int(mtok)
    except ValueError as exc:
        raise FormatError(f"bad header near byte {pos}: {exc}") from exc
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval} (only 255) at byte {pos}")
    if width <= 0 or height <= 0:
        raise FormatError(f"bad dimensions {width}x{height}")
    pos += 1  # single whitespace after maxval
    need = width * height * channels
    payload = buf[pos : pos + need]
    if len(payload) != need:
        raise FormatError(
            f"truncated payload at byte {pos + len(payload)}: "
            f"expected {need} bytes, got {len(payload)}"
        )
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    data = raw.astype(np.float64).transpose(2, 0, 1) / 255.0
    return Image(data)


def write_image(image: Image, path) -> None:
    """Write PPM (3-channel) or PGM (1-channel) at maxval 255.

    Exact inverse of :func:`read_image` for files produced by it.
    """
    quant = np.rint(image.data * 255.0)
    quant = np.clip(quant, 0, 255).astype(np.uint8)
    magic = b"P6" if image.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    interleaved = quant.transpose(1, 2, 0)
    with open(path, "wb") as f:
        f.write(header)
        f.write(interleaved.tobytes())


# ---------------------------------------------------------------------------
# PFM codec (grayscale only)
# ---------------------------------------------------------------------------


def read_pfm(path) -> DisparityMap:
    """Read a grayscale PFM disparity file.

    Non-finite or out-of-range samples are marked invalid.
    """
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic == b"PF":
            raise FormatError("color PFM not supported")
        if magic != b"Pf":
            raise FormatError(f"bad magic {magic!r}")
        dims = f.readline().split()
        if len(dims) != 2:
            raise FormatError("bad dimensions line")
        width, height = int(dims[0]), int(dims[1])
        try:
            scale = float(f.readline())
        except ValueError as exc:
            raise FormatError(f"bad scale line: {exc}") from exc
        if scale == 0:
            raise FormatError("scale must be nonzero")
        endian = "<f4" if scale < 0 else ">f4"
        payload = f.read(4 * width * height)
    if len(payload) != 4 * width * height:
        raise FormatError("truncated PFM payload")
    rows = np.frombuffer(payload, dtype=endian).reshape(height, width)
    values = np.flipud(rows).astype(np.float64)  # stored bottom-to-top
    return DisparityMap(values)


def write_pfm(dmap: DisparityMap, path) -> None:
    """Write a grayscale little-endian PFM (scale -1.0), bottom-up rows."""
    values = np.where(dmap.valid, dmap.values, 0.0).astype("<f4")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(b"%d %d\n" % (dmap.width, dmap.height))
        f.write(b"-1.0\n")
        f.write(np.flipud(values).tobytes())


# ---------------------------------------------------------------------------
# Colorspace
# ---------------------------------------------------------------------------

# BT.601 full-range, chroma centered at 0 so U/V live in [-0.5, 0.5].
_RGB_TO_YUV = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YUV_TO_RGB = np.linalg.inv(_RGB_TO_YUV)


def rgb_to_yuv(image: Image) -> Image:
    """Convert 3-channel RGB in [0,1] to YUV (BT.601 full-range).

    Y stays in [0,1]; U and V are zero-centered in [-0.5, 0.5].
    """
    if image.channels != 3:
        raise ValueError("rgb_to_yuv requires a 3-channel image")
    flat = image.data.reshape(3, -1)
    yuv = _RGB_TO_YUV @ flat
    return Image(yuv.reshape(image.data.shape))


def yuv_to_rgb(image: Image) -> Image:
    """Analytic inverse of :func:`rgb_to_yuv`."""
    if image.channels != 3:
        raise ValueError("yuv_to_rgb requires a 3-channel image")
    flat = image.data.reshape(3, -1)
    rgb = _YUV_TO_RGB @ flat
    return Image(rgb.reshape(image.data.shape))


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------


def mean_pool_2x(image: Image) -> Image:
    """Halve resolution by averaging disjoint 2x2 blocks.

    Dimensions must be even; pad with :func:`pad_reflect` first.
    """
    c, h, w = image.data.shape
    if h % 2 or w % 2:
        raise ValueError(f"mean_pool_2x needs even dims, got {h}x{w}")
    blocks = image.data.reshape(c, h // 2, 2, w // 2, 2)
    return Image(blocks.mean(axis=(2, 4)))


def pad_reflect(image: Image, multiple: int) -> tuple[Image, tuple[int, int]]:
    """Reflect-pad right/bottom so dims divide ``multiple``.

    Returns the padded image and the original (height, width) for
    cropping network outputs back.
    """
    if multiple < 1:
        raise ValueError("multiple must be >= 1")
    h, w = image.height, image.width
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return image, (h, w)
    padded = np.pad(image.data, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    return Image(padded), (h, w)


def crop(image_data: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Crop trailing rows/columns back to original (height, width)."""
    h, w = dims
    return image_data[..., :h, :w]
