"""Grayscale frames, affine patch warping, and the binary-mask run-length codec.

Pixel (row r, col c) occupies the unit square [c, c+1) x [r, r+1) in continuous
frame coordinates, so its center sits at (x, y) = (c + 0.5, r + 0.5).  All warp
sampling uses this convention; reads outside the frame return 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ContractError, DegenerateRegionError, FormatError

if TYPE_CHECKING:  # pragma: no cover
    from .geometry import QuadBB

GRAY_WEIGHTS = (0.299, 0.587, 0.114)  # BT.601 luma


@dataclass(frozen=True, eq=False)
class Frame:
    """Grayscale frame, intensities in [0, 1], shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise FormatError(f"frame must be 2-D with positive dims, got shape {p.shape}")
        if not np.isfinite(p).all():
            raise FormatError("frame contains non-finite intensities")
        if p.min() < 0.0 or p.max() > 1.0:
            raise FormatError("frame intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class PatchVector:
    """Flattened side x side patch sampled from a frame region."""

    values: np.ndarray  # (side * side,)
    side: int
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size != self.side * self.side:
            raise ContractError(f"patch length {v.size} != side^2 = {self.side ** 2}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean occupancy mask, shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2:
            raise FormatError(f"mask must be 2-D, got shape {b.shape}")
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


def to_grayscale(rgb: np.ndarray, width: int, height: int) -> Frame:
    """Convert interleaved 8-bit RGB to a grayscale Frame via BT.601 luma."""
    buf = np.asarray(rgb, dtype=np.float64).reshape(-1)
    if buf.size != 3 * width * height:
        raise FormatError(
            f"RGB buffer has {buf.size} values, expected 3*{width}*{height} = {3 * width * height}"
        )
    rgbv = buf.reshape(height, width, 3)
    gray = (GRAY_WEIGHTS[0] * rgbv[..., 0] + GRAY_WEIGHTS[1] * rgbv[..., 1]
            + GRAY_WEIGHTS[2] * rgbv[..., 2]) / 255.0
    return Frame(np.clip(gray, 0.0, 1.0))


def reference_corners(side: float) -> np.ndarray:
    """Corners of the origin-centered reference square, CCW from top-left."""
    h = side / 2.0
    return np.array([[-h, -h], [h, -h], [h, h], [-h, h]], dtype=np.float64)


def affine_from_quad(corners: np.ndarray, side: float) -> np.ndarray:
    """Least-squares affine (2x3) mapping the reference square onto `corners`.

    The reference-corner design matrix has orthogonal columns, so the solution
    is closed-form; it is exact whenever the quad is an affine image of the
    reference square.
    """
    c = np.asarray(corners, dtype=np.float64)
    h = side / 2.0
    # column signs of the reference corners (-h,-h), (h,-h), (h,h), (-h,h)
    du = (-c[0] + c[1] + c[2] - c[3]) / (4.0 * h)  # d(quad)/d(ref_x)
    dv = (-c[0] - c[1] + c[2] + c[3]) / (4.0 * h)  # d(quad)/d(ref_y)
    t = c.mean(axis=0)
    return np.array([[du[0], dv[0], t[0]], [du[1], dv[1], t[1]]])


def _quad_area(corners: np.ndarray) -> float:
    x, y = corners[:, 0], corners[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def bilinear_sample(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at continuous frame coords; outside reads 0."""
    h, w = pixels.shape
    u = np.asarray(xs, dtype=np.float64) - 0.5  # index space of pixel centers
    v = np.asarray(ys, dtype=np.float64) - 0.5
    j0 = np.floor(u).astype(np.int64)
    i0 = np.floor(v).astype(np.int64)
    fu = u - j0
    fv = v - i0

    def gather(ii, jj):
        valid = (ii >= 0) & (ii < h) & (jj >= 0) & (jj < w)
        out = np.zeros(ii.shape, dtype=np.float64)
        out[valid] = pixels[ii[valid], jj[valid]]
        return out

    p00 = gather(i0, j0)
    p01 = gather(i0, j0 + 1)
    p10 = gather(i0 + 1, j0)
    p11 = gather(i0 + 1, j0 + 1)
    top = p00 * (1.0 - fu) + p01 * fu
    bot = p10 * (1.0 - fu) + p11 * fu
    return top * (1.0 - fv) + bot * fv


def _grid_coords(side: int) -> tuple[np.ndarray, np.ndarray]:
    # sample-point coords in reference space, pixel centers of a side x side grid
    t = -side / 2.0 + np.arange(side, dtype=np.float64) + 0.5
    vv, uu = np.meshgrid(t, t, indexing="ij")  # row-major: v (y) varies slowest
    return uu.ravel(), vv.ravel()


def warp_affine(frame: Frame, affine: np.ndarray, side: int, normalize: bool = False) -> PatchVector:
    """Sample a side x side patch through a reference-to-frame affine map."""
    if side < 2:
        raise ContractError(f"template side must be >= 2, got {side}")
    a = np.asarray(affine, dtype=np.float64)
    if a.shape != (2, 3):
        raise ContractError(f"affine must be 2x3, got {a.shape}")
    uu, vv = _grid_coords(side)
    xs = a[0, 0] * uu + a[0, 1] * vv + a[0, 2]
    ys = a[1, 0] * uu + a[1, 1] * vv + a[1, 2]
    vals = bilinear_sample(frame.pixels, xs, ys)
    if normalize:
        norm = float(np.linalg.norm(vals))
        if norm > 0.0:
            vals = vals / norm
    return PatchVector(vals, side, normalized=normalize)


def warp_affine_batch(frame: Frame, affines: np.ndarray, side: int,
                      normalize: bool = False) -> np.ndarray:
    """Sample many patches at once; affines is (N, 2, 3), result is (N, side*side).

    Row-equivalent to calling warp_affine per matrix; all-zero rows stay
    all-zero under normalization.
    """
    a = np.asarray(affines, dtype=np.float64)
    if a.ndim != 3 or a.shape[1:] != (2, 3):
        raise ContractError(f"affines must be (N, 2, 3), got {a.shape}")
    uu, vv = _grid_coords(side)
    xs = a[:, 0, 0, None] * uu + a[:, 0, 1, None] * vv + a[:, 0, 2, None]
    ys = a[:, 1, 0, None] * uu + a[:, 1, 1, None] * vv + a[:, 1, 2, None]
    vals = bilinear_sample(frame.pixels, xs, ys)
    if normalize:
        norms = np.linalg.norm(vals, axis=1, keepdims=True)
        vals = np.divide(vals, norms, out=np.zeros_like(vals), where=norms > 0.0)
    return vals


def warp_patch(frame: Frame, quad: "QuadBB", side: int, normalize: bool = False) -> PatchVector:
    """Warp the region under `quad` into the fixed template space.

    The quad is interpreted as the affine image of the origin-centered
    reference square; sampling is bilinear with zero padding outside the frame.
    """
    corners = np.asarray(quad.corners, dtype=np.float64)
    if not np.isfinite(corners).all():
        raise ContractError("quad corners must be finite")
    if _quad_area(corners) < 1.0:
        raise DegenerateRegionError(f"quad area {_quad_area(corners):.3g} px^2 < 1")
    return warp_affine(frame, affine_from_quad(corners, side), side, normalize)


def rle_decode(counts: Sequence[int], size: tuple[int, int]) -> BinaryMask:
    """Decode column-major uncompressed run lengths (leading 0-run) to a mask."""
    h, w = int(size[0]), int(size[1])
    cnts = np.asarray(counts, dtype=np.int64)
    if cnts.size and cnts.min() < 0:
        raise FormatError("run lengths must be non-negative")
    total = int(cnts.sum())
    if total != h * w:
        raise FormatError(f"run lengths sum to {total}, expected {h}*{w} = {h * w}")
    values = np.zeros(cnts.size, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, cnts)
    return BinaryMask(flat.reshape((h, w), order="F"))


def rle_encode(mask: BinaryMask) -> list[int]:
    """Inverse of rle_decode: column-major run lengths starting with a 0-run."""
    flat = mask.bits.reshape(-1, order="F")
    if flat.size == 0:
        return []
    changes = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:  # convention: first count is always the leading 0-run
        counts = [0] + counts
    return [int(c) for c in counts]
