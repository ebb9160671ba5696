"""Deterministic synthetic banded-chromosome corpus generator.

Renders stadium-shaped silhouettes with per-class band layouts, lengths
and centromere waists, then applies per-instance prune-class effects
(curvature warp, overlap composite, garbage scrambling), blur and
noise. Everything derives from the spec seed, so identical specs
produce byte-identical corpora. Band templates are loosely
ideogram-inspired but synthetic; no biological fidelity is claimed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidConfigError
from .pipeline import Instance

PRUNE_KINDS = ("semi_straight", "curved", "overlap", "garbage")
SUBJECT_CHUNKS = (7, 7, 6)  # cycles to ~6.7 images per subject
MARGIN = 10
BODY_INTENSITY = 0.72
WAIST_DEPTH = 0.45
WAIST_SIGMA = 0.05


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 24
    length_range: tuple = (60, 152)
    base_width: int = 26
    noise_sigma: float = 0.02
    blur_sigma: float = 0.8
    curvature_amplitude: float = 10.0
    curved_prob: float = 0.0
    overlap_prob: float = 0.0
    garbage_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for p in (self.curved_prob, self.overlap_prob, self.garbage_prob):
            if not 0.0 <= p <= 1.0:
                raise InvalidConfigError("prune probabilities must be in [0,1]")
        if self.curved_prob + self.overlap_prob + self.garbage_prob > 1.0:
            raise InvalidConfigError("prune probabilities exceed 1")
        if self.n_classes < 2:
            raise InvalidConfigError("need at least 2 classes")


def class_params(spec: SynthSpec, class_idx: int) -> dict:
    """Deterministic per-class geometry and band template."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 7919, class_idx]))
    lo, hi = spec.length_range
    if spec.n_classes > 1:
        length = int(round(lo + (hi - lo) * class_idx / (spec.n_classes - 1)))
    else:
        length = int(lo)
    centromere_rel = 0.25 + 0.20 * ((class_idx * 7) % spec.n_classes) / spec.n_classes
    n_bands = 3 + class_idx % 4
    positions = np.sort(rng.uniform(0.08, 0.92, size=n_bands))
    widths = rng.uniform(0.02, 0.05, size=n_bands)
    darkness = rng.uniform(0.25, 0.55, size=n_bands)
    return {
        "length": length,
        "width": spec.base_width,
        "centromere_rel": centromere_rel,
        "bands": list(zip(positions, widths, darkness)),
    }


def _render_body(length, width, centromere_rel, bands, length_jitter=0):
    """White canvas with one upright banded chromosome body.

    Returns (image, centromere_row)."""
    length = max(20, length + length_jitter)
    h = length + 2 * MARGIN
    w = width + 2 * MARGIN
    img = np.ones((h, w))
    half = width / 2.0
    center_col = (w - 1) / 2.0
    cen_row = MARGIN + int(round(centromere_rel * (length - 1)))
    for r in range(length):
        rel = r / (length - 1)
        cap = min(1.0, np.sqrt(max(rel, 1e-9) * max(1 - rel, 1e-9)) / 0.12)
        waist = 1.0 - WAIST_DEPTH * np.exp(
            -(((rel - centromere_rel) / WAIST_SIGMA) ** 2)
        )
        hw = half * cap * waist
        if hw < 1.0:
            hw = 1.0
        c0 = int(round(center_col - hw))
        c1 = int(round(center_col + hw))
        dark = 0.0
        for pos, bw, dk in bands:
            dark += dk * np.exp(-(((rel - pos) / bw) ** 2))
        img[MARGIN + r, c0:c1 + 1] = np.clip(BODY_INTENSITY - dark, 0.05, 0.9)
    return img, cen_row


def _curve_warp(img, amplitude, rng):
    """Shift each row sideways along a half-sine to bend the chromosome."""
    h, w = img.shape
    phase = rng.uniform(0.8, 1.2)
    out = np.ones_like(img)
    for r in range(h):
        shift = int(round(amplitude * np.sin(np.pi * phase * r / h)))
        if shift >= 0:
            out[r, shift:] = img[r, : w - shift] if shift else img[r]
        else:
            out[r, :shift] = img[r, -shift:]
    return out


def _overlap_composite(img, spec, rng):
    """Overlay a rotated second chromosome; darker pixel wins."""
    other_class = int(rng.integers(0, spec.n_classes))
    params = class_params(spec, other_class)
    other, _ = _render_body(
        params["length"], params["width"], params["centromere_rel"], params["bands"]
    )
    angle_deg = rng.uniform(40, 90)
    rot = ndimage.rotate(other, angle_deg, order=0, cval=1.0, reshape=True)
    h, w = img.shape
    canvas = np.ones((h, w))
    rh, rw = rot.shape
    r0 = max(0, (h - rh) // 2)
    c0 = max(0, (w - rw) // 2)
    rr = min(rh, h - r0)
    cc = min(rw, w - c0)
    canvas[r0:r0 + rr, c0:c0 + cc] = rot[:rr, :cc]
    return np.minimum(img, canvas)


def _garbage(img, rng):
    """Scramble row blocks and splatter blotches."""
    h, w = img.shape
    out = img.copy()
    block = max(4, h // 8)
    order = rng.permutation(h // block)
    blocks = [img[i * block:(i + 1) * block] for i in range(h // block)]
    for dst, src in enumerate(order):
        out[dst * block:(dst + 1) * block] = blocks[src]
    for _ in range(6):
        r = int(rng.integers(0, h))
        c = int(rng.integers(0, w))
        rad = int(rng.integers(2, 6))
        rr, cc = np.ogrid[:h, :w]
        out[(rr - r) ** 2 + (cc - c) ** 2 <= rad * rad] = rng.uniform(0.0, 0.5)
    return out


def render_instance(spec: SynthSpec, class_idx: int, instance_idx: int,
                    prune_kind: str):
    """One fully seeded instance; returns (image, info dict)."""
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.seed, class_idx, instance_idx])
    )
    params = class_params(spec, class_idx)
    jitter = int(rng.integers(-2, 3))
    img, cen_row = _render_body(
        params["length"], params["width"], params["centromere_rel"],
        params["bands"], length_jitter=jitter,
    )
    if prune_kind == "curved":
        img = _curve_warp(img, spec.curvature_amplitude, rng)
    elif prune_kind == "overlap":
        img = _overlap_composite(img, spec, rng)
    elif prune_kind == "garbage":
        img = _garbage(img, rng)
    if spec.blur_sigma > 0:
        img = ndimage.gaussian_filter(img, spec.blur_sigma)
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    return img, {"centromere_row": cen_row, "length": params["length"] + jitter}


def generate(spec: SynthSpec, n_per_class: int):
    """Render a full corpus.

    Returns (images, instances, infos): instance records carry the
    chromosome label (1-based), synthetic subject id and prune label;
    infos carry ground truth (centromere row) for verification.
    """
    draw_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 104729]))
    images, instances, infos = [], [], []
    for c in range(spec.n_classes):
        for k in range(n_per_class):
            u = draw_rng.uniform()
            if u < spec.curved_prob:
                kind = "curved"
            elif u < spec.curved_prob + spec.overlap_prob:
                kind = "overlap"
            elif u < spec.curved_prob + spec.overlap_prob + spec.garbage_prob:
                kind = "garbage"
            else:
                kind = "semi_straight"
            img, info = render_instance(spec, c, k, kind)
            images.append(img)
            infos.append(info)
            instances.append(
                Instance(
                    path=f"img_c{c + 1:02d}_i{k:04d}.png",
                    label=c + 1,
                    subject="",
                    prune_label=kind,
                )
            )
    # subject ids group shuffled instances into chunks averaging ~6.7
    subj_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1299709]))
    order = subj_rng.permutation(len(instances))
    subject_of = {}
    pos = 0
    subj = 0
    while pos < len(order):
        size = SUBJECT_CHUNKS[subj % len(SUBJECT_CHUNKS)]
        for idx in order[pos:pos + size]:
            subject_of[int(idx)] = f"subj_{subj:04d}"
        pos += size
        subj += 1
    instances = [
        Instance(inst.path, inst.label, subject_of[i], inst.prune_label, inst.split)
        for i, inst in enumerate(instances)
    ]
    return images, instances, infos
