"""Two-stage supervised dimensionality reduction.

Stage 1 projects onto the subspace of least within-class variance
(smallest eigenvalues of the class-centered scatter); stage 2 projects
that subspace onto the directions of highest between-class pairwise
scatter (largest eigenvalues). The pairwise sum over differently
labeled pairs is computed with the counts-and-means identity; the
brute-force pair loop lives in the tests as an oracle.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ParseError


def within_class_scatter(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Scatter of the class-mean-centered data: Xc^T Xc."""
    Xc = X.astype(float).copy()
    for label in np.unique(y):
        m = y == label
        Xc[m] -= Xc[m].mean(axis=0)
    return Xc.T @ Xc


def between_class_pairwise_scatter(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sum over ordered pairs (i, j) with differing labels of
    (x_i - x_j)(x_i - x_j)^T, via the counts-and-means identity."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    S = X.T @ X
    m = X.sum(axis=0)
    total = 2.0 * n * S - 2.0 * np.outer(m, m)
    same = np.zeros_like(total)
    for label in np.unique(y):
        sel = X[y == label]
        nc = len(sel)
        Sc = sel.T @ sel
        mc = sel.sum(axis=0)
        same += 2.0 * nc * Sc - 2.0 * np.outer(mc, mc)
    return total - same


class FukunagaTransform:
    """least-within-variance then highest-between-variance projection."""

    def __init__(self, d_mid: int | None = None, d_out: int | None = None):
        self.d_mid = d_mid
        self.d_out = d_out

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2:
            raise InvalidInputError("X must be 2D")
        labels, counts = np.unique(y, return_counts=True)
        if len(labels) < 2:
            raise InvalidInputError("need at least 2 classes")
        if counts.min() < 2:
            raise InvalidInputError("every class needs at least 2 instances")
        n, d_in = X.shape
        d_mid = self.d_mid if self.d_mid is not None else min(d_in, n - len(labels))
        d_out = self.d_out if self.d_out is not None else len(labels) - 1
        if not (1 <= d_mid <= d_in):
            raise InvalidConfigError(f"d_mid={d_mid} outside [1, {d_in}]")
        if not (1 <= d_out <= d_mid):
            raise InvalidConfigError(f"d_out={d_out} outside [1, {d_mid}]")

        sw = within_class_scatter(X, y)
        evals, evecs = np.linalg.eigh(sw)  # ascending; ties keep solver order
        self.w_within_ = evecs[:, :d_mid].T

        Xw = X @ self.w_within_.T
        sb = between_class_pairwise_scatter(Xw, y)
        evals_b, evecs_b = np.linalg.eigh(sb)
        self.w_between_ = evecs_b[:, ::-1][:, :d_out].T

        self.d_in_ = d_in
        self.d_mid_ = d_mid
        self.d_out_ = d_out
        self.class_labels_ = labels
        return self

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d_in_:
            raise InvalidInputError(
                f"expected {self.d_in_} columns, got {X.shape[1]}"
            )
        return X @ self.w_within_.T @ self.w_between_.T

    def fit_transform(self, X, y) -> np.ndarray:
        return self.fit(X, y).transform(X)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(f"dims\t{self.d_in_}\t{self.d_mid_}\t{self.d_out_}\n")
            f.write("labels\t" + "\t".join(str(v) for v in self.class_labels_) + "\n")
            for row in self.w_within_:
                f.write("within\t" + "\t".join(repr(float(v)) for v in row) + "\n")
            for row in self.w_between_:
                f.write("between\t" + "\t".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "FukunagaTransform":
        within, between = [], []
        try:
            with open(path) as f:
                tag, *dims = f.readline().split("\t")
                if tag != "dims":
                    raise ParseError("model bundle missing dims header")
                d_in, d_mid, d_out = (int(v) for v in dims)
                _, *labels = f.readline().rstrip("\n").split("\t")
                for line in f:
                    tag, *vals = line.split("\t")
                    row = [float(v) for v in vals]
                    (within if tag == "within" else between).append(row)
        except (OSError, ValueError) as exc:
            raise ParseError(f"cannot load model from {path}: {exc}") from exc
        model = cls(d_mid=d_mid, d_out=d_out)
        model.d_in_, model.d_mid_, model.d_out_ = d_in, d_mid, d_out
        model.class_labels_ = np.array(labels)
        model.w_within_ = np.array(within)
        model.w_between_ = np.array(between)
        if model.w_within_.shape != (d_mid, d_in) or model.w_between_.shape != (
            d_out,
            d_mid,
        ):
            raise ParseError("model bundle dimensions inconsistent")
        return model
