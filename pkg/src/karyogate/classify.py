"""Scoring classifiers: every model maps a feature vector to a full
per-label score vector.

Includes a one-vs-one linear SVM whose label scores aggregate
ReLU-rectified pair margins, a KNN scorer with neighbor-frequency
scores, and an ingestion path for score matrices computed by external
models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ParseError


@dataclass
class ScoreVector:
    """Per-label real scores for one instance; argmax is the estimate,
    ties broken by lowest index."""

    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float).ravel()
        if len(self.scores) < 2:
            raise InvalidInputError("score vector needs at least 2 labels")

    @property
    def n_labels(self) -> int:
        return len(self.scores)

    @property
    def estimated_label(self) -> int:
        return int(np.argmax(self.scores))


def _hinge_subgradient_svm(X, y01, sample_weight, reg, epochs, lr0):
    """Deterministic full-batch subgradient descent on the weighted
    soft-margin hinge objective; returns the tail-averaged iterate.

    ``y01`` holds +-1 labels; bias is an augmented feature.
    """
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    w = np.zeros(d + 1)
    avg = np.zeros(d + 1)
    tail = max(1, epochs // 4)
    for t in range(epochs):
        margins = y01 * (Xa @ w)
        active = margins < 1.0
        grad = reg * np.concatenate([w[:-1], [0.0]])
        if active.any():
            grad -= (sample_weight[active] * y01[active]) @ Xa[active]
        lr = lr0 / (1.0 + 0.01 * t)
        w -= lr * grad
        if t >= epochs - tail:
            avg += w
    return avg / tail


class OvOSvm:
    """One-vs-one linear SVM with weighted hinge loss.

    For each unordered label pair a binary model is trained by
    deterministic subgradient descent; per-instance weights default to
    inverse class frequency within the pair, which makes duplicating a
    class's instances a no-op.
    """

    def __init__(self, regularization: float = 1e-4, epochs: int = 300,
                 lr0: float = 1.0):
        self.regularization = regularization
        self.epochs = epochs
        self.lr0 = lr0

    def fit(self, X, y, class_weights: dict | None = None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        labels = np.unique(y)
        if len(labels) < 2:
            raise InvalidInputError("need at least 2 classes")
        self.labels_ = labels
        self.d_in_ = X.shape[1]
        self.pair_models_ = {}
        for ai in range(len(labels)):
            for bi in range(ai + 1, len(labels)):
                a, b = labels[ai], labels[bi]
                sel = (y == a) | (y == b)
                Xp = X[sel]
                yp = np.where(y[sel] == a, 1.0, -1.0)
                if class_weights is not None:
                    sw = np.array(
                        [class_weights[a] if v > 0 else class_weights[b] for v in yp]
                    )
                else:
                    # inverse pair frequency: each class contributes mass 1/2
                    n_a = float((yp > 0).sum())
                    n_b = float((yp < 0).sum())
                    sw = np.where(yp > 0, 1.0 / (2.0 * n_a), 1.0 / (2.0 * n_b))
                wb = _hinge_subgradient_svm(
                    Xp, yp, sw, self.regularization, self.epochs, self.lr0
                )
                self.pair_models_[(ai, bi)] = (wb[:-1], float(wb[-1]))
        return self

    def pair_margin(self, x, ai: int, bi: int) -> float:
        """Signed margin of ``x`` toward label index ``ai`` under the
        (ai, bi) binary model."""
        lo, hi = min(ai, bi), max(ai, bi)
        w, b = self.pair_models_[(lo, hi)]
        f = float(w @ x + b)
        return f if ai == lo else -f

    def score(self, x) -> ScoreVector:
        x = np.asarray(x, dtype=float).ravel()
        if len(x) != self.d_in_:
            raise InvalidInputError(f"expected {self.d_in_} features, got {len(x)}")
        k = len(self.labels_)
        scores = np.zeros(k)
        for i in range(k):
            for j in range(k):
                if i == j:
                    continue
                scores[i] += max(0.0, 1.0 + self.pair_margin(x, i, j))
        return ScoreVector(scores)

    def score_batch(self, X) -> list:
        return [self.score(x) for x in np.atleast_2d(X)]

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write("labels\t" + "\t".join(str(v) for v in self.labels_) + "\n")
            f.write(f"d_in\t{self.d_in_}\n")
            for (ai, bi), (w, b) in sorted(self.pair_models_.items()):
                row = "\t".join(repr(float(v)) for v in w)
                f.write(f"pair\t{ai}\t{bi}\t{float(b)!r}\t{row}\n")

    @classmethod
    def load(cls, path) -> "OvOSvm":
        model = cls()
        model.pair_models_ = {}
        try:
            with open(path) as f:
                _, *labels = f.readline().rstrip("\n").split("\t")
                model.labels_ = _parse_labels(labels)
                model.d_in_ = int(f.readline().split("\t")[1])
                for line in f:
                    _, ai, bi, b, *w = line.split("\t")
                    model.pair_models_[(int(ai), int(bi))] = (
                        np.array([float(v) for v in w]),
                        float(b),
                    )
        except (OSError, ValueError) as exc:
            raise ParseError(f"cannot load SVM bundle from {path}: {exc}") from exc
        return model


def _parse_labels(tokens):
    try:
        return np.array([int(t) for t in tokens])
    except ValueError:
        return np.array(tokens)


class Knn:
    """K-nearest-neighbors with neighbor-frequency label scores."""

    def __init__(self, k: int = 20):
        if k < 1:
            raise InvalidInputError("k must be >= 1")
        self.k = k

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if len(X) == 0:
            raise InvalidInputError("empty training set")
        if self.k > len(X):
            raise InvalidInputError(f"k={self.k} exceeds n_train={len(X)}")
        self.X_ = X
        self.labels_ = np.unique(y)
        self.y_idx_ = np.searchsorted(self.labels_, y)
        return self

    def score(self, x) -> ScoreVector:
        x = np.asarray(x, dtype=float).ravel()
        d = np.linalg.norm(self.X_ - x, axis=1)
        # stable sort: distance ties resolve by training index
        nearest = np.argsort(d, kind="stable")[: self.k]
        counts = np.bincount(self.y_idx_[nearest], minlength=len(self.labels_))
        return ScoreVector(counts / self.k)

    def score_batch(self, X) -> list:
        return [self.score(x) for x in np.atleast_2d(X)]

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write("labels\t" + "\t".join(str(v) for v in self.labels_) + "\n")
            f.write(f"k\t{self.k}\n")
            for yi, row in zip(self.y_idx_, self.X_):
                f.write(f"{yi}\t" + "\t".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "Knn":
        try:
            with open(path) as f:
                _, *labels = f.readline().rstrip("\n").split("\t")
                k = int(f.readline().split("\t")[1])
                y_idx, rows = [], []
                for line in f:
                    yi, *vals = line.split("\t")
                    y_idx.append(int(yi))
                    rows.append([float(v) for v in vals])
        except (OSError, ValueError) as exc:
            raise ParseError(f"cannot load KNN bundle from {path}: {exc}") from exc
        model = cls(k=k)
        model.labels_ = _parse_labels(labels)
        model.X_ = np.array(rows)
        model.y_idx_ = np.array(y_idx)
        return model


class ExternalScores:
    """Precomputed score matrix (e.g. from a CNN) behind the scorer contract."""

    def __init__(self, score_vectors: list, labels=None):
        self.score_vectors = list(score_vectors)
        if labels is not None:
            self.labels_ = np.asarray(labels)
        elif self.score_vectors:
            self.labels_ = np.arange(self.score_vectors[0].n_labels)
        else:
            self.labels_ = np.array([], dtype=int)

    def score_batch(self, X=None) -> list:
        return list(self.score_vectors)


def load_external_scores(path, has_ids: bool = False) -> list:
    """Parse a whitespace-separated decimal score file, one instance per
    row. Estimated labels are always recomputed locally, never read."""
    vectors = []
    width = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            tokens = line.split()
            if has_ids:
                tokens = tokens[1:]
            try:
                row = [float(t) for t in tokens]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric cell") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(
                    f"{path}:{lineno}: ragged row ({len(row)} vs {width} columns)"
                )
            vectors.append(ScoreVector(np.array(row)))
    return vectors
