import numpy as np
import pytest

from karyogate import features, pipeline, synthgen


class Corpus:
    def __init__(self, images, instances, infos, X):
        self.images = images
        self.instances = instances
        self.infos = infos
        self.X = X
        self.y = np.array([inst.label for inst in instances])
        self.prune = np.array([inst.prune_label for inst in instances])
        self.split = np.array([inst.split for inst in instances])


def build_corpus(spec, n_per_class, fractions=(0.8, 0.2, 0.0), seed=None):
    images, instances, infos = synthgen.generate(spec, n_per_class)
    instances = pipeline.split_by_subject(
        instances, fractions, seed=spec.seed if seed is None else seed
    )
    X = features.extract_engineered_batch(images)
    return Corpus(images, instances, infos, X)


@pytest.fixture(scope="session")
def corpus24():
    """Default 24-class corpus, 50 instances per class, features extracted."""
    return build_corpus(synthgen.SynthSpec(seed=11), 50)


@pytest.fixture(scope="session")
def corpus_mixed():
    """Corpus with ~20% curved/overlapped instances for cascade tests."""
    spec = synthgen.SynthSpec(
        n_classes=12, curved_prob=0.13, overlap_prob=0.07, seed=42
    )
    return build_corpus(spec, 30, fractions=(0.6, 0.4, 0.0))


def hourglass_image(h, w, waist_rel, depth, rng=None):
    """Dark hourglass silhouette on white; returns (image, waist row)."""
    img = np.ones((h, w))
    body = h - 20
    ccol = (w - 1) / 2
    for r in range(body):
        rel = r / (body - 1)
        cap = min(1.0, np.sqrt(max(rel, 1e-9) * max(1 - rel, 1e-9)) / 0.12)
        waist = 1 - depth * np.exp(-(((rel - waist_rel) / 0.05) ** 2))
        hw = max(2.0, (w / 2 - 6) * cap * waist)
        if rng is not None:
            hw += rng.normal(0, 0.3)
        c0 = int(round(ccol - hw))
        c1 = int(round(ccol + hw))
        img[10 + r, c0:c1 + 1] = 0.3
    return img, 10 + int(round(waist_rel * (body - 1)))
