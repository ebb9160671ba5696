"""Grayscale chromosome image preprocessing.

Covers normalization + histogram equalization, boundary extraction,
boundary tracing, middle-line tangent fitting, centromere location,
vertical rotation with p-arm-up flipping, and nearest-neighbor resize.
All images are 2D float arrays with intensities in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.signal import find_peaks

from .errors import DegenerateGeometryError, InvalidInputError, NoBoundaryError

# Thresholds of the empirical boundary-finding recipe, in [0,1] intensity units.
DARK_FOREGROUND_THRESHOLD = 220.0 / 256.0
EDGE_GRADIENT_THRESHOLD = 150.0 / 256.0

HIST_BINS = 256
BACKGROUND_FILL = 1.0  # white background in G-band imagery

# |left_row - right_row| tolerance for a centromere waist pair to count
# as aligned.
CENTROMERE_ALIGN_TOL = 5
CURVATURE_WINDOW = 10


@dataclass(frozen=True)
class BoundaryTrace:
    """Ordered left/right boundary columns, one entry per row, top to bottom.

    ``rows`` is strictly increasing; ``left[i] <= right[i]`` for every i.
    ``centromere_row`` is an absolute image row index, or None when no
    aligned waist was found.
    """

    rows: np.ndarray
    left: np.ndarray
    right: np.ndarray
    centromere_row: int | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        left = np.asarray(self.left, dtype=float)
        right = np.asarray(self.right, dtype=float)
        if not (len(rows) == len(left) == len(right)):
            raise InvalidInputError("trace arrays must have equal length")
        if len(rows) < 2:
            raise NoBoundaryError("trace needs at least 2 rows")
        if np.any(np.diff(rows) <= 0):
            raise InvalidInputError("trace rows must be strictly increasing")
        if np.any(left > right + 1e-9):
            raise InvalidInputError("left boundary crossed right boundary")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def middle(self) -> np.ndarray:
        """Per-row average of the left and right boundary columns."""
        return (self.left + self.right) / 2.0

    @property
    def width(self) -> np.ndarray:
        return self.right - self.left

    def with_centromere(self, row: int | None) -> "BoundaryTrace":
        return BoundaryTrace(self.rows, self.left, self.right, row)


def _check_image(img) -> np.ndarray:
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidInputError("expected a nonempty 2D grayscale image")
    return arr


def load_image(path) -> np.ndarray:
    """Read an 8- or 16-bit single-channel PNG/TIFF as a [0,1] float array."""
    with Image.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B", "I;16L"):
            arr = np.asarray(im, dtype=float) / 65535.0
        else:
            arr = np.asarray(im.convert("L"), dtype=float) / 255.0
    return np.clip(arr, 0.0, 1.0)


def save_image(path, img) -> None:
    arr = np.clip(_check_image(img), 0.0, 1.0)
    Image.fromarray((arr * 255.0).round().astype(np.uint8)).save(path)


def normalize(img) -> np.ndarray:
    """Min-max normalize to [0,1]; a constant image maps to all zeros."""
    arr = _check_image(img)
    lo, hi = arr.min(), arr.max()
    if hi - lo < 1e-12:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def equalize_hist(img, bins: int = HIST_BINS) -> np.ndarray:
    """Histogram equalization via the empirical CDF over ``bins`` bins."""
    arr = _check_image(img)
    idx = np.minimum((arr * bins).astype(int), bins - 1)
    counts = np.bincount(idx.ravel(), minlength=bins)
    cdf = np.cumsum(counts) / arr.size
    return cdf[idx]


def normalize_and_equalize(img) -> np.ndarray:
    """Min-max normalize, then 256-bin histogram equalization."""
    return equalize_hist(normalize(img))


def find_boundary(img) -> np.ndarray:
    """Empirical chromosome boundary mask (edge pixels = 1).

    Steps: normalize; Gaussian smooth (variance 1, +-3 sigma kernel);
    mark dark pixels (< 220/256) as foreground; close with a disk of
    radius 2; Sobel x/y gradients; gradient intensity as the sum of the
    squared gradients (no square root), renormalized to [0,1]; keep
    pixels at or above 150/256.
    """
    arr = normalize(_check_image(img))
    smoothed = ndimage.gaussian_filter(arr, sigma=1.0, truncate=3.0)
    fg = (smoothed < DARK_FOREGROUND_THRESHOLD).astype(np.uint8)
    # pad with edge values so closing does not erode at the canvas border
    pad = 3
    fg = np.pad(fg, pad, mode="edge")
    fg = ndimage.binary_closing(fg, structure=_disk(2)).astype(np.uint8)
    fg = fg[pad:-pad, pad:-pad]
    gx = ndimage.sobel(fg.astype(float), axis=1)
    gy = ndimage.sobel(fg.astype(float), axis=0)
    grad = gx * gx + gy * gy
    peak = grad.max()
    if peak < 1e-12:
        return np.zeros_like(fg)
    grad = grad / peak
    return (grad >= EDGE_GRADIENT_THRESHOLD).astype(np.uint8)


def _disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (yy * yy + xx * xx <= r * r).astype(np.uint8)


def trace_boundary(mask) -> BoundaryTrace:
    """Convert a boundary mask into ordered per-row left/right columns.

    Rows inside the occupied span with no mask pixels are filled by
    linear interpolation of their neighbors.
    """
    m = np.asarray(mask)
    if m.ndim != 2:
        raise InvalidInputError("mask must be 2D")
    occupied = np.flatnonzero(m.any(axis=1))
    if len(occupied) < 2:
        raise NoBoundaryError("mask has fewer than 2 occupied rows")
    r0, r1 = occupied[0], occupied[-1]
    rows = np.arange(r0, r1 + 1)
    left_known = np.array([np.flatnonzero(m[r])[0] for r in occupied], dtype=float)
    right_known = np.array([np.flatnonzero(m[r])[-1] for r in occupied], dtype=float)
    left = np.interp(rows, occupied, left_known)
    right = np.interp(rows, occupied, right_known)
    return BoundaryTrace(rows.astype(float), left, right)


def middle_line_tangent(trace: BoundaryTrace) -> float:
    """Least-squares slope of middle column as a function of row.

    Solved by the closed-form normal equations x = (A^T A)^-1 A^T b with
    A = [rows, 1] and b = middle columns.
    """
    rows = trace.rows
    mid = trace.middle
    if len(rows) < 2 or np.ptp(rows) < 1e-12:
        raise DegenerateGeometryError("middle line spans fewer than 2 distinct rows")
    A = np.column_stack([rows, np.ones_like(rows)])
    ata = A.T @ A
    if abs(np.linalg.det(ata)) < 1e-12:
        raise DegenerateGeometryError("singular normal equations")
    x = np.linalg.solve(ata, A.T @ mid)
    return float(x[0])


def curvature_at(rows, cols, center_idx: int, window: int = CURVATURE_WINDOW) -> float:
    """Curvature (2 * quadratic coefficient) of an LS quadratic fit over a
    window of boundary points centered at ``center_idx``."""
    rows = np.asarray(rows, dtype=float)
    cols = np.asarray(cols, dtype=float)
    half = window // 2
    lo = max(0, center_idx - half)
    hi = min(len(rows), center_idx + window - half)
    r = rows[lo:hi]
    c = cols[lo:hi]
    if len(r) < 3 or np.ptp(r) < 1e-12:
        return 0.0
    coeffs = np.polyfit(r, c, 2)
    return float(2.0 * coeffs[0])


def locate_centromere(trace: BoundaryTrace, img=None) -> int | None:
    """Find the centromere row from the width profile and boundary curvature.

    The 10 most prominent width minima are candidate waists; each side
    keeps its 3 highest-curvature candidates; the aligned left/right pair
    with the highest combined prominence wins. Returns None when no pair
    aligns within the tolerance. ``img`` is accepted for interface
    symmetry but the procedure is purely geometric.
    """
    width = trace.width
    peaks, props = find_peaks(-width, prominence=1e-9)
    if len(peaks) == 0:
        return None
    prominences = props["prominences"]
    order = np.argsort(-prominences, kind="stable")[:10]
    cand_idx = peaks[order]
    cand_prom = prominences[order]

    def top3_by_curvature(cols):
        curv = np.array(
            [abs(curvature_at(trace.rows, cols, int(i))) for i in cand_idx]
        )
        keep = np.argsort(-curv, kind="stable")[:3]
        return set(int(k) for k in keep)

    left_set = top3_by_curvature(trace.left)
    right_set = top3_by_curvature(trace.right)

    best = None
    best_prom = -np.inf
    for a in left_set:
        for b in right_set:
            row_a = trace.rows[cand_idx[a]]
            row_b = trace.rows[cand_idx[b]]
            if abs(row_a - row_b) > CENTROMERE_ALIGN_TOL:
                continue
            combined = cand_prom[a] + cand_prom[b]
            if combined > best_prom:
                best_prom = combined
                best = (row_a + row_b) / 2.0
    if best is None:
        return None
    return int(round(best))


def _rotate_nn(img: np.ndarray, theta: float, fill: float) -> np.ndarray:
    """Rotate by ``theta`` radians about the image center, nearest neighbor,
    growing the canvas to contain the rotated extent."""
    h, w = img.shape
    c, s = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    corners = np.array([[-cy, -cx], [-cy, cx], [cy, -cx], [cy, cx]])
    rot = np.array([[c, -s], [s, c]])
    rc = corners @ rot.T
    out_h = int(math.ceil(rc[:, 0].max() - rc[:, 0].min())) + 1
    out_w = int(math.ceil(rc[:, 1].max() - rc[:, 1].min())) + 1
    oy, ox = (out_h - 1) / 2.0, (out_w - 1) / 2.0
    rr, cc = np.mgrid[0:out_h, 0:out_w]
    # inverse map: output -> input
    dy = rr - oy
    dx = cc - ox
    src_r = np.rint(c * dy + s * dx + cy).astype(int)
    src_c = np.rint(-s * dy + c * dx + cx).astype(int)
    valid = (src_r >= 0) & (src_r < h) & (src_c >= 0) & (src_c < w)
    out = np.full((out_h, out_w), fill, dtype=float)
    out[valid] = img[src_r[valid], src_c[valid]]
    return out


def rotate_point(shape, out_shape, theta, row, col):
    """Map an input (row, col) through the same rotation _rotate_nn applies."""
    h, w = shape
    oh, ow = out_shape
    c, s = math.cos(theta), math.sin(theta)
    dy = row - (h - 1) / 2.0
    dx = col - (w - 1) / 2.0
    return (
        c * dy - s * dx + (oh - 1) / 2.0,
        s * dy + c * dx + (ow - 1) / 2.0,
    )


def rotate_vertical(img, trace: BoundaryTrace) -> np.ndarray:
    """Rotate so the middle line is vertical, then flip 180 degrees if the
    centromere lands in the lower half (shorter p-arm goes up)."""
    arr = _check_image(img)
    slope = middle_line_tangent(trace)
    theta = -math.atan(slope)
    out = _rotate_nn(arr, theta, fill=BACKGROUND_FILL)
    if trace.centromere_row is not None:
        i = int(np.argmin(np.abs(trace.rows - trace.centromere_row)))
        new_row, _ = rotate_point(
            arr.shape, out.shape, theta, trace.rows[i], trace.middle[i]
        )
        if new_row > (out.shape[0] - 1) / 2.0:
            out = np.rot90(out, 2)
    return out


def resize_nn(img, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize: src_i = floor(i * h / out_h)."""
    arr = _check_image(img)
    if out_h <= 0 or out_w <= 0:
        raise InvalidInputError("target dimensions must be positive")
    h, w = arr.shape
    src_i = (np.arange(out_h) * h // out_h).astype(int)
    src_j = (np.arange(out_w) * w // out_w).astype(int)
    return arr[np.ix_(src_i, src_j)]
