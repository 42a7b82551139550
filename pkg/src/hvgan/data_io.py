"""Image ingestion, bicubic downscaling, patch extraction, and CSV readers.

Images live as planar (C,H,W) float64 buffers with values in [0,1]. On disk
the package speaks binary PGM (P5, single channel) and PPM (P6, three
channel) with maxval 255: both are fully specified byte formats, so
round-trip behaviour is testable to the bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .moo import Orientation, PointSet

__all__ = [
    "ImageBuffer",
    "PatchPair",
    "load_image",
    "save_image",
    "bicubic_downscale",
    "nearest_upscale",
    "extract_patches",
    "augment",
    "read_points_csv",
    "bicubic_weights",
]

_BICUBIC_A = -0.5


@dataclass(frozen=True)
class ImageBuffer:
    """Planar (C,H,W) double-precision image with all values in [0,1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        if arr.ndim != 3 or arr.shape[0] not in (1, 3):
            raise ValueError(
                f"ImageBuffer: need (C,H,W) with C in {{1,3}}, got shape {arr.shape}"
            )
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"ImageBuffer: empty spatial extent {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ImageBuffer: values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(
                f"ImageBuffer: values must lie in [0,1], got range "
                f"[{arr.min()}, {arr.max()}]"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class PatchPair:
    """An aligned LR/HR patch pair; HR extents are exactly 4x the LR ones."""

    lr: ImageBuffer
    hr: ImageBuffer
    source_id: int
    top_left: tuple

    def __post_init__(self):
        if (
            self.hr.height != 4 * self.lr.height
            or self.hr.width != 4 * self.lr.width
            or self.hr.channels != self.lr.channels
        ):
            raise ValueError(
                f"PatchPair: HR {self.hr.data.shape} is not 4x LR {self.lr.data.shape}"
            )


# ---------------------------------------------------------------------------
# PGM / PPM
# ---------------------------------------------------------------------------

def _read_header_tokens(blob: bytes, count: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated tokens, skipping # comment lines."""
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(blob) and blob[i : i + 1].isspace():
            i += 1
        if i < len(blob) and blob[i : i + 1] == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(blob) and not blob[i : i + 1].isspace():
            i += 1
        if i == start:
            raise ValueError("truncated header")
        tokens.append(blob[start:i])
    # exactly one whitespace byte separates the header from the payload
    return tokens, i + 1


def load_image(path) -> ImageBuffer:
    """Load a binary PGM (P5) or PPM (P6) file with maxval 255."""
    blob = Path(path).read_bytes()
    try:
        tokens, offset = _read_header_tokens(blob, 4)
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from None
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported magic {magic!r} (need P5 or P6)")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ValueError(f"{path}: non-numeric header fields {tokens[1:]}") from None
    if maxval != 255:
        raise ValueError(f"{path}: maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise ValueError(f"{path}: bad dimensions {width}x{height}")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    payload = blob[offset : offset + need]
    if len(payload) != need:
        raise ValueError(
            f"{path}: truncated payload, expected {need} bytes, got {len(payload)}"
        )
    raw = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        data = raw.reshape(1, height, width)
    else:
        data = raw.reshape(height, width, 3).transpose(2, 0, 1)
    return ImageBuffer(data)


def save_image(img: ImageBuffer, path) -> None:
    """Write P5/P6 with round-half-up 8-bit quantization."""
    q = np.floor(img.data * 255.0 + 0.5)
    q = np.clip(q, 0, 255).astype(np.uint8)
    if img.channels == 1:
        magic, payload = b"P5", q[0].tobytes()
    else:
        magic, payload = b"P6", q.transpose(1, 2, 0).tobytes()
    header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + payload)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def _keys(t: np.ndarray) -> np.ndarray:
    """Keys cubic interpolation kernel with a = -0.5."""
    a = _BICUBIC_A
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def bicubic_weights(n_in: int, factor: int) -> np.ndarray:
    """(n_in/factor, n_in) row-stochastic resampling matrix, edge-clamped."""
    n_out = n_in // factor
    mat = np.zeros((n_out, n_in))
    for i in range(n_out):
        center = (i + 0.5) * factor - 0.5
        base = int(np.floor(center))
        for tap in range(base - 1, base + 3):
            w = float(_keys(np.asarray(center - tap)))
            mat[i, min(max(tap, 0), n_in - 1)] += w
    return mat


def bicubic_downscale(img: ImageBuffer, factor: int = 4) -> ImageBuffer:
    """Separable Keys bicubic downscale; output clamped back into [0,1]."""
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"bicubic_downscale: factor must be >= 1, got {factor}")
    if img.height % factor or img.width % factor:
        raise ValueError(
            f"bicubic_downscale: dimensions {img.height}x{img.width} not "
            f"divisible by {factor}"
        )
    wh = bicubic_weights(img.height, factor)
    ww = bicubic_weights(img.width, factor)
    out = np.einsum("ij,cjk,lk->cil", wh, img.data, ww)
    return ImageBuffer(np.clip(out, 0.0, 1.0))


def nearest_upscale(img: ImageBuffer, factor: int = 4) -> ImageBuffer:
    """Pixel-replication upscale (the no-learning baseline)."""
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"nearest_upscale: factor must be >= 1, got {factor}")
    data = np.repeat(np.repeat(img.data, factor, axis=1), factor, axis=2)
    return ImageBuffer(data)


# ---------------------------------------------------------------------------
# patches and augmentation
# ---------------------------------------------------------------------------

def random_patch_pair(
    img: ImageBuffer, patch_size: int, rng: np.random.Generator, source_id: int = 0
) -> PatchPair:
    """One random HR crop plus its bicubic x4 downscale (rng-stream driven)."""
    ps = int(patch_size)
    if ps % 4:
        raise ValueError(f"patch size must be divisible by 4, got {ps}")
    if ps > img.height or ps > img.width:
        raise ValueError(
            f"patch {ps}x{ps} larger than image {img.height}x{img.width}"
        )
    top = int(rng.integers(0, img.height - ps + 1))
    left = int(rng.integers(0, img.width - ps + 1))
    hr = ImageBuffer(img.data[:, top : top + ps, left : left + ps])
    return PatchPair(bicubic_downscale(hr, 4), hr, source_id, (top, left))


def extract_patches(
    img: ImageBuffer, patch_size: int, count: int, seed
) -> list[PatchPair]:
    """Seeded uniform-random patch pairs; count 0 gives an empty list."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    return [random_patch_pair(img, patch_size, rng) for _ in range(int(count))]


def augment_with_rng(pair: PatchPair, rng: np.random.Generator) -> PatchPair:
    """Random horizontal flip then k*90 degree rotation, same for LR and HR."""
    flip = bool(rng.random() < 0.5)
    k = int(rng.integers(0, 4))
    if k % 2 and (
        pair.hr.height != pair.hr.width or pair.lr.height != pair.lr.width
    ):
        raise ValueError(
            f"augment: odd quarter-turn needs square patches, got HR "
            f"{pair.hr.height}x{pair.hr.width}"
        )

    def apply(buf: ImageBuffer) -> ImageBuffer:
        data = buf.data
        if flip:
            data = data[:, :, ::-1]
        data = np.rot90(data, k, axes=(1, 2))
        return ImageBuffer(np.ascontiguousarray(data))

    return PatchPair(apply(pair.lr), apply(pair.hr), pair.source_id, pair.top_left)


def augment(pair: PatchPair, seed) -> PatchPair:
    return augment_with_rng(pair, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# points CSV
# ---------------------------------------------------------------------------

def read_points_csv(path, orientation: Orientation) -> PointSet:
    """Headerless CSV of objective vectors, one per line; errors name the line."""
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split(",")
        values = []
        for tok in fields:
            try:
                values.append(float(tok))
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: non-numeric field {tok.strip()!r}"
                ) from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ValueError(
                f"{path}: line {lineno}: expected {width} fields, got {len(values)}"
            )
        rows.append(values)
    return PointSet.from_rows(rows, orientation)
