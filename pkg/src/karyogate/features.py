"""Engineered morphological/structural features and the LoG descriptor.

Profiles sample the chromosome along 334 uniformly spaced rows of its
trace span; the curvature profile uses 30 row bands. Structural features
are 21 scalars (13 specified, 8 reserved). The descriptor is a
simplified multi-scale LoG keypoint + orientation-histogram scheme with
the two tuned knobs (keypoint count and orientation bin count).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.signal import find_peaks

from .errors import (
    FeatureUnavailableError,
    InternalError,
    InvalidConfigError,
    InvalidInputError,
)
from .imaging import BoundaryTrace, curvature_at

PROFILE_LEN = 334
CURVATURE_LEN = 30
N_STRUCTURAL = 21

KEYPOINT_CHOICES = (5, 25, 50)
ORIENTATION_CHOICES = (32, 64, 128, 256)

STRUCTURAL_NAMES = [
    "sum_of_proportions",
    "q_to_p_ratio",
    "relative_length",
    "std_below_centromere",
    "density_near_centromere",
    "length1",
    "length2",
    "highest_peak_rel_distance",
    "centromere_curvature_left",
    "centromere_curvature_right",
    "centromere_width",
    "area",
    "thickness",
] + [f"reserved_{i}" for i in range(14, 22)]


@dataclass(frozen=True)
class DescriptorConfig:
    n_keypoints: int = 50
    n_orientations: int = 128
    gradient_floor: float = 1e-3

    def __post_init__(self):
        if self.n_keypoints not in KEYPOINT_CHOICES:
            raise InvalidConfigError(f"n_keypoints must be one of {KEYPOINT_CHOICES}")
        if self.n_orientations not in ORIENTATION_CHOICES:
            raise InvalidConfigError(
                f"n_orientations must be one of {ORIENTATION_CHOICES}"
            )


@dataclass(frozen=True)
class FeatureLayout:
    """Ordered (name, offset, length) segments describing one vector layout."""

    segments: tuple

    @property
    def total_length(self) -> int:
        return sum(length for _, _, length in self.segments)

    def __post_init__(self):
        expected = 0
        for name, offset, length in self.segments:
            if offset != expected:
                raise InternalError(f"layout segment {name} not contiguous")
            expected = offset + length

    def names(self):
        return [name for name, _, _ in self.segments]

    def slice_of(self, name: str) -> slice:
        for seg_name, offset, length in self.segments:
            if seg_name == name:
                return slice(offset, offset + length)
        raise KeyError(name)

    def column_names(self):
        cols = []
        for name, _, length in self.segments:
            if length == 1:
                cols.append(name)
            else:
                cols.extend(f"{name}[{i}]" for i in range(length))
        return cols


def _make_layout(spec) -> FeatureLayout:
    segments = []
    offset = 0
    for name, length in spec:
        segments.append((name, offset, length))
        offset += length
    return FeatureLayout(tuple(segments))


ENGINEERED_LAYOUT = _make_layout(
    [
        ("intensity", PROFILE_LEN),
        ("width", PROFILE_LEN),
        ("shape", PROFILE_LEN),
        ("weighted_intensity", PROFILE_LEN),
        ("high_peak", PROFILE_LEN),
        ("curvature", CURVATURE_LEN),
        ("tangent", 1),
        ("width_variance", 1),
        ("height_variance", 1),
        ("structural", N_STRUCTURAL),
    ]
)


@dataclass
class FeatureVector:
    values: np.ndarray
    layout: FeatureLayout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != self.layout.total_length:
            raise InternalError(
                f"vector length {len(self.values)} != layout "
                f"{self.layout.total_length}"
            )


def _resample_trace(trace: BoundaryTrace, n: int = PROFILE_LEN):
    """Uniform row samples over the trace span with interpolated columns."""
    t = np.linspace(trace.rows[0], trace.rows[-1], n)
    left = np.interp(t, trace.rows, trace.left)
    right = np.interp(t, trace.rows, trace.right)
    return t, left, right


def _require_trace(trace):
    if trace is None:
        raise FeatureUnavailableError("no boundary trace available")


def intensity_profile(img, trace: BoundaryTrace, n: int = PROFILE_LEN) -> np.ndarray:
    """Mean in-boundary intensity per sampled row."""
    _require_trace(trace)
    arr = np.asarray(img, dtype=float)
    t, left, right = _resample_trace(trace, n)
    out = np.zeros(n)
    h, w = arr.shape
    for k in range(n):
        r = min(max(int(round(t[k])), 0), h - 1)
        c0 = min(max(int(round(left[k])), 0), w - 1)
        c1 = min(max(int(round(right[k])), 0), w - 1)
        out[k] = arr[r, c0:c1 + 1].mean()
    return out


def width_profile(trace: BoundaryTrace, n: int = PROFILE_LEN) -> np.ndarray:
    """Right-minus-left boundary column distance per sampled row."""
    _require_trace(trace)
    _, left, right = _resample_trace(trace, n)
    return right - left


def curvature_profile(trace: BoundaryTrace, n: int = CURVATURE_LEN) -> np.ndarray:
    """Per-band middle-line curvature: 2x the quadratic LS coefficient.

    The trace rows are split into ``n`` equal bands; degenerate bands
    (fewer than 3 points) yield 0.
    """
    _require_trace(trace)
    rows = trace.rows
    mid = trace.middle
    edges = np.linspace(0, len(rows), n + 1).astype(int)
    out = np.zeros(n)
    for b in range(n):
        lo, hi = edges[b], edges[b + 1]
        r = rows[lo:hi]
        c = mid[lo:hi]
        if len(r) < 3 or np.ptp(r) < 1e-12:
            continue
        out[b] = 2.0 * np.polyfit(r, c, 2)[0]
    return out


def shape_profile(img, trace: BoundaryTrace, n: int = PROFILE_LEN) -> np.ndarray:
    """Intensity-weighted mean squared distance from the middle line,
    per sampled row: sum(g * d^2) / sum(g). All-zero rows yield 0."""
    _require_trace(trace)
    arr = np.asarray(img, dtype=float)
    t, left, right = _resample_trace(trace, n)
    mid = (left + right) / 2.0
    out = np.zeros(n)
    h, w = arr.shape
    for k in range(n):
        r = min(max(int(round(t[k])), 0), h - 1)
        c0 = min(max(int(round(left[k])), 0), w - 1)
        c1 = min(max(int(round(right[k])), 0), w - 1)
        cols = np.arange(c0, c1 + 1)
        g = arr[r, c0:c1 + 1]
        d2 = (cols - mid[k]) ** 2
        denom = g.sum()
        if denom > 1e-12:
            out[k] = float((g * d2).sum() / denom)
    return out


def weighted_intensity_profile(
    img, trace: BoundaryTrace, n: int = PROFILE_LEN
) -> np.ndarray:
    """Distance-squared-weighted mean intensity per sampled row:
    sum(g * d^2) / sum(d^2). All-zero-distance rows fall back to the
    plain row mean (the continuous limit)."""
    _require_trace(trace)
    arr = np.asarray(img, dtype=float)
    t, left, right = _resample_trace(trace, n)
    mid = (left + right) / 2.0
    out = np.zeros(n)
    h, w = arr.shape
    for k in range(n):
        r = min(max(int(round(t[k])), 0), h - 1)
        c0 = min(max(int(round(left[k])), 0), w - 1)
        c1 = min(max(int(round(right[k])), 0), w - 1)
        cols = np.arange(c0, c1 + 1)
        g = arr[r, c0:c1 + 1]
        d2 = (cols - mid[k]) ** 2
        denom = d2.sum()
        if denom > 1e-12:
            out[k] = float((g * d2).sum() / denom)
        else:
            out[k] = float(g.mean())
    return out


def high_peak_features(trace: BoundaryTrace, n: int = PROFILE_LEN) -> np.ndarray:
    """Largest local-maximum distances of boundary points to the vertical
    reference line, sorted descending and zero-padded to ``n``."""
    _require_trace(trace)
    _, left, right = _resample_trace(trace, n)
    ref = (left + right).mean() / 2.0
    peaks = []
    for side in (np.abs(left - ref), np.abs(right - ref)):
        idx, _ = find_peaks(side)
        peaks.extend(side[idx])
    peaks = sorted(peaks, reverse=True)[:n]
    out = np.zeros(n)
    out[: len(peaks)] = peaks
    return out


def sum_of_proportions(d_uq: float, d_dq: float, d_up: float, d_dp: float) -> float:
    """Band-distance proportion ratio (d_uq/d_dq) / (d_up/d_dp).

    Distances run from the highest Q-band / P-band peaks to the
    chromosome top (u) and bottom (d). Symmetric placements (equal
    ratios) yield exactly 1.0.
    """
    if min(d_dq, d_up, d_dp) <= 0:
        return 0.0
    return (d_uq / d_dq) / (d_up / d_dp)


def _darkness_peaks(profile: np.ndarray) -> np.ndarray:
    """Indices of dark-band peaks of an intensity profile (dark = band)."""
    darkness = 1.0 - profile
    idx, _ = find_peaks(darkness)
    if len(idx) == 0:
        idx = np.array([int(np.argmax(darkness))])
    return idx


@dataclass
class StructuralFeatures:
    values: dict = field(default_factory=dict)
    centromere_missing: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.values.get(name, 0.0) for name in STRUCTURAL_NAMES])

    def __getitem__(self, name):
        return self.values.get(name, 0.0)


def structural_features(img, trace: BoundaryTrace) -> StructuralFeatures:
    """The 21 structural scalars.

    Centromere-dependent scalars degrade to 0 (with a flag) when the
    trace carries no centromere.
    """
    _require_trace(trace)
    arr = np.asarray(img, dtype=float)
    n = PROFILE_LEN
    prof = intensity_profile(arr, trace, n)
    wprof = width_profile(trace, n)
    rows = trace.rows
    vals = {}

    thickness = float(wprof.mean())
    vals["area"] = float(wprof.sum())
    vals["thickness"] = thickness
    vals["length1"] = float(rows[-1] - rows[0] + 1)

    # half the boundary point count over the chromosome thickness; the
    # traced boundary is already 1 px per row per side.
    n_points = 2 * len(rows) - int(np.sum(trace.width < 0.5))
    vals["length2"] = (n_points / 2.0) / thickness if thickness > 1e-12 else 0.0

    # middle-line intensity sum over the root of the whole-image sum
    mid_cols = np.clip(np.rint(trace.middle).astype(int), 0, arr.shape[1] - 1)
    mid_rows = np.clip(np.rint(rows).astype(int), 0, arr.shape[0] - 1)
    total = arr.sum()
    if total > 1e-12:
        vals["relative_length"] = float(arr[mid_rows, mid_cols].sum() / np.sqrt(total))

    dark_idx = _darkness_peaks(prof)
    darkness = 1.0 - prof
    highest = int(dark_idx[np.argmax(darkness[dark_idx])])
    if highest > 0:
        vals["highest_peak_rel_distance"] = float((n - 1 - highest) / highest)

    cen = trace.centromere_row
    missing = cen is None
    if not missing:
        span = rows[-1] - rows[0]
        c_idx = int(round((cen - rows[0]) / span * (n - 1))) if span > 0 else 0
        c_idx = min(max(c_idx, 0), n - 1)

        above = rows[-1] - cen
        below = cen - rows[0]
        if below > 1e-12:
            vals["q_to_p_ratio"] = float(above / below)

        p_peaks = dark_idx[dark_idx < c_idx]
        q_peaks = dark_idx[dark_idx > c_idx]
        if len(p_peaks) and len(q_peaks):
            p_top = int(p_peaks[np.argmax(darkness[p_peaks])])
            q_top = int(q_peaks[np.argmax(darkness[q_peaks])])
            d_up, d_dp = p_top, n - 1 - p_top
            d_uq, d_dq = q_top, n - 1 - q_top
            vals["sum_of_proportions"] = float(
                sum_of_proportions(d_uq, d_dq, d_up, d_dp)
            )
            # nearest dark peaks bracketing the centromere
            nearest_above = p_peaks[np.argmin(c_idx - p_peaks)]
            nearest_below = q_peaks[np.argmin(q_peaks - c_idx)]
            seg = prof[nearest_above:nearest_below + 1]
            if len(seg) and prof.mean() > 1e-12 and arr.mean() > 1e-12:
                vals["density_near_centromere"] = float(seg.mean() / arr.mean())
            between = prof[c_idx + 1:nearest_below]
            if len(between) >= 1:
                vals["std_below_centromere"] = float(np.std(between))
        ci = int(np.argmin(np.abs(rows - cen)))
        vals["centromere_curvature_left"] = curvature_at(rows, trace.left, ci)
        vals["centromere_curvature_right"] = curvature_at(rows, trace.right, ci)
        vals["centromere_width"] = float(trace.right[ci] - trace.left[ci])

    return StructuralFeatures(values=vals, centromere_missing=missing)


def sift_lite(img, cfg: DescriptorConfig = DescriptorConfig()) -> FeatureVector:
    """Multi-scale LoG keypoints with pruned orientation histograms.

    Keypoints are the strongest scale-space extrema of the absolute
    scale-normalized LoG response. Each keypoint contributes an
    orientation histogram (``cfg.n_orientations`` bins) of gradient
    directions over a 16x16 patch, with gradients below
    ``cfg.gradient_floor`` pruned. Descriptors concatenate in keypoint
    order and zero-pad to ``cfg.n_keypoints`` slots.
    """
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2 or min(arr.shape) < 16:
        raise InvalidInputError("image min side must be >= 16")
    sigmas = (1.0, 2.0, 4.0, 8.0)
    stack = np.stack(
        [np.abs(s * s * ndimage.gaussian_laplace(arr, s)) for s in sigmas]
    )
    local_max = stack == ndimage.maximum_filter(stack, size=3, mode="nearest")
    cand = np.argwhere(local_max & (stack > 1e-9))
    if len(cand) == 0:
        return FeatureVector(
            np.zeros(cfg.n_keypoints * cfg.n_orientations),
            _descriptor_layout(cfg),
        )
    responses = stack[cand[:, 0], cand[:, 1], cand[:, 2]]
    order = np.argsort(-responses, kind="stable")[: cfg.n_keypoints]
    keypoints = cand[order]

    grads = {}
    for s_idx, s in enumerate(sigmas):
        smooth = ndimage.gaussian_filter(arr, s)
        gy, gx = np.gradient(smooth)
        grads[s_idx] = (np.hypot(gx, gy), np.mod(np.arctan2(gy, gx), 2 * np.pi))

    descriptor = np.zeros(cfg.n_keypoints * cfg.n_orientations)
    for slot, (s_idx, r, c) in enumerate(keypoints):
        mag, ori = grads[s_idx]
        r0, r1 = max(0, r - 8), min(arr.shape[0], r + 8)
        c0, c1 = max(0, c - 8), min(arr.shape[1], c + 8)
        m = mag[r0:r1, c0:c1].ravel()
        o = ori[r0:r1, c0:c1].ravel()
        keep = m > cfg.gradient_floor
        hist, _ = np.histogram(
            o[keep], bins=cfg.n_orientations, range=(0.0, 2 * np.pi),
            weights=m[keep],
        )
        start = slot * cfg.n_orientations
        descriptor[start:start + cfg.n_orientations] = hist
    return FeatureVector(descriptor, _descriptor_layout(cfg))


def _descriptor_layout(cfg: DescriptorConfig) -> FeatureLayout:
    return _make_layout(
        [(f"keypoint_{k}", cfg.n_orientations) for k in range(cfg.n_keypoints)]
    )


def assemble_feature_vector(
    profiles: dict,
    structurals: StructuralFeatures,
    tangent: float,
    width_variance: float,
    height_variance: float,
) -> FeatureVector:
    """Concatenate all engineered components in the published layout order."""
    parts = []
    for name in ("intensity", "width", "shape", "weighted_intensity", "high_peak",
                 "curvature"):
        if name not in profiles:
            raise InvalidInputError(f"missing profile: {name}")
        parts.append(np.asarray(profiles[name], dtype=float))
    parts.append(np.array([tangent, width_variance, height_variance]))
    parts.append(structurals.as_array())
    values = np.concatenate(parts)
    return FeatureVector(values, ENGINEERED_LAYOUT)


def extract_engineered(img) -> FeatureVector:
    """Full engineered-feature chain for one raw chromosome crop.

    Normalizes, finds and traces the boundary, locates the centromere,
    rotates upright, re-traces, then computes every profile, the tangent,
    the width/height variances, and the structural scalars.

    Raises FeatureUnavailableError when no usable boundary exists.
    """
    from . import imaging

    arr = imaging.normalize(img)
    try:
        trace = imaging.trace_boundary(imaging.find_boundary(arr))
        trace = trace.with_centromere(imaging.locate_centromere(trace))
        upright = imaging.rotate_vertical(arr, trace)
        trace_up = imaging.trace_boundary(imaging.find_boundary(upright))
        trace_up = trace_up.with_centromere(imaging.locate_centromere(trace_up))
    except (InvalidInputError, FeatureUnavailableError) as exc:
        raise FeatureUnavailableError(f"boundary extraction failed: {exc}") from exc

    profiles = {
        "intensity": intensity_profile(upright, trace_up),
        "width": width_profile(trace_up),
        "shape": shape_profile(upright, trace_up),
        "weighted_intensity": weighted_intensity_profile(upright, trace_up),
        "high_peak": high_peak_features(trace_up),
        "curvature": curvature_profile(trace_up),
    }
    try:
        tangent = imaging.middle_line_tangent(trace_up)
    except InvalidInputError:
        tangent = 0.0
    width_var = float(np.var(profiles["width"]))
    try:
        mask_t = imaging.find_boundary(upright.T)
        trace_t = imaging.trace_boundary(mask_t)
        height_var = float(np.var(width_profile(trace_t)))
    except InvalidInputError:
        height_var = 0.0
    structurals = structural_features(upright, trace_up)
    return assemble_feature_vector(profiles, structurals, tangent, width_var,
                                   height_var)


def extract_engineered_batch(images) -> np.ndarray:
    """Engineered features for a sequence of images, one row each.

    Instances whose boundary cannot be traced yield an all-zero row, so
    downstream matrices stay aligned with their manifest.
    """
    rows = []
    for img in images:
        try:
            rows.append(extract_engineered(img).values)
        except FeatureUnavailableError:
            rows.append(np.zeros(ENGINEERED_LAYOUT.total_length))
    return np.vstack(rows) if rows else np.zeros((0, ENGINEERED_LAYOUT.total_length))


def save_features(path, matrix: np.ndarray, layout: FeatureLayout) -> None:
    """Columnar text: header of column names, one row per instance, plus a
    sidecar ``<path>.layout`` manifest of (name, offset, length) lines."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[1] != layout.total_length:
        raise InternalError("matrix width does not match layout")
    with open(path, "w") as f:
        f.write("\t".join(layout.column_names()) + "\n")
        for row in matrix:
            f.write("\t".join(repr(float(v)) for v in row) + "\n")
    with open(str(path) + ".layout", "w") as f:
        for name, offset, length in layout.segments:
            f.write(f"{name}\t{offset}\t{length}\n")


def load_features(path):
    """Inverse of :func:`save_features`; returns (matrix, layout)."""
    try:
        with open(str(path) + ".layout") as f:
            segments = []
            for line in f:
                name, offset, length = line.split("\t")
                segments.append((name, int(offset), int(length)))
        layout = FeatureLayout(tuple(segments))
        with open(path) as f:
            header = f.readline()
            rows = [
                [float(tok) for tok in line.split()] for line in f if line.strip()
            ]
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot load features from {path}: {exc}") from exc
    matrix = np.array(rows, dtype=float)
    if matrix.size == 0:
        matrix = matrix.reshape(0, layout.total_length)
    if matrix.shape[1] != layout.total_length:
        raise InvalidInputError("feature file width does not match layout")
    return matrix, layout
