"""Reliability metrics over score vectors, per-label threshold
calibration, and per-instance gating.

Five metrics quantify decision certainty from a classifier's score
vector. Thresholds are learned per label, either as the mean metric
value over correctly classified calibration instances (strategy
``mean``) or by a precision-maximizing sweep subject to a recall
cut-off (strategy ``recall_sweep``). Gating uses a strict
greater-than comparison; an instance at or below its label's threshold
is returned as uncertain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classify import ScoreVector
from .errors import InvalidConfigError, InvalidInputError, MetricArityError, ParseError

METRICS = ("I", "II", "III", "IV", "V")
STRATEGIES = ("mean", "recall_sweep")
DEFAULT_RECALL_CUTOFF = 0.5

# How far below the lowest observed metric value the gating-disabled
# fallback threshold sits (thresholds stay finite).
_DISABLED_MARGIN = 1.0


def metric_value(metric: str, s: ScoreVector) -> float:
    """Evaluate one reliability metric on a score vector.

    I: estimated label's score. II: estimated score minus the mean of
    the top 4 remaining scores (needs >= 5 labels). III: highest minus
    second-highest score. IV: population variance of all scores.
    V: estimated score minus the minimum score.
    """
    if metric not in METRICS:
        raise InvalidConfigError(f"unknown metric {metric!r}")
    scores = s.scores
    est = s.estimated_label
    if metric == "II" and len(scores) < 5:
        raise MetricArityError("metric II needs at least 5 labels")
    if len(scores) < 2:
        raise MetricArityError("metrics need at least 2 labels")
    if metric == "I":
        return float(scores[est])
    if metric == "II":
        others = np.delete(scores, est)
        top4 = np.sort(others)[-4:]
        return float(scores[est] - top4.mean())
    if metric == "III":
        top2 = np.sort(scores)[-2:]
        return float(top2[1] - top2[0])
    if metric == "IV":
        return float(np.var(scores))
    return float(scores[est] - scores.min())


@dataclass
class GatedPrediction:
    estimated_label: int
    reliable: bool
    metric_value: float


@dataclass
class ThresholdTable:
    """Per-label calibrated thresholds for one (metric, strategy) pair.

    ``thresholds[label] is None`` marks an UNSET label (no correctly
    classified calibration instances); gating treats UNSET as
    unconditionally unreliable.
    """

    metric: str
    strategy: str
    recall_cutoff: float
    thresholds: dict = field(default_factory=dict)

    def get(self, label):
        return self.thresholds.get(label)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(f"metric\t{self.metric}\n")
            f.write(f"strategy\t{self.strategy}\n")
            f.write(f"recall_cutoff\t{self.recall_cutoff!r}\n")
            for label in sorted(self.thresholds):
                t = self.thresholds[label]
                f.write(f"{label}\t{'UNSET' if t is None else repr(float(t))}\n")

    @classmethod
    def load(cls, path) -> "ThresholdTable":
        try:
            with open(path) as f:
                metric = f.readline().split("\t")[1].strip()
                strategy = f.readline().split("\t")[1].strip()
                cutoff = float(f.readline().split("\t")[1])
                thresholds = {}
                for line in f:
                    label, value = line.split("\t")
                    value = value.strip()
                    thresholds[int(label)] = None if value == "UNSET" else float(value)
        except (OSError, ValueError, IndexError) as exc:
            raise ParseError(f"cannot load thresholds from {path}: {exc}") from exc
        return cls(metric, strategy, cutoff, thresholds)


def _sweep_label(values_est, correct_est, n_true, cutoff):
    """Precision-maximizing threshold for one label.

    ``values_est``/``correct_est`` describe the instances predicted as
    this label; ``n_true`` counts all calibration instances truly of
    this label. Candidates are the observed metric values plus a
    gating-disabled value below all of them. Among candidates whose
    gated recall meets the cut-off, the highest-precision one wins
    (higher threshold on ties). Returns the disabled-equivalent
    candidate when no candidate is feasible.
    """
    disabled = float(np.min(values_est)) - _DISABLED_MARGIN
    candidates = sorted(set(values_est)) + [disabled]
    best_tau, best_prec = disabled, -1.0
    for tau in candidates:
        accepted = values_est > tau
        n_acc = int(accepted.sum())
        n_tp = int((accepted & correct_est).sum())
        recall = n_tp / n_true if n_true else 0.0
        if recall < cutoff:
            continue
        precision = n_tp / n_acc if n_acc else 0.0
        if precision > best_prec or (precision == best_prec and tau > best_tau):
            best_prec = precision
            best_tau = tau
    return best_tau


def calibrate_thresholds(
    score_vectors,
    y_true,
    metric: str,
    recall_cutoff: float = DEFAULT_RECALL_CUTOFF,
    strategy: str = "recall_sweep",
) -> ThresholdTable:
    """Learn one threshold per label from calibration score vectors.

    Labels here are score-vector indices; ``y_true`` must already be
    index-encoded. A label with no correctly classified instance gets
    an UNSET threshold.
    """
    if strategy not in STRATEGIES:
        raise InvalidConfigError(f"unknown strategy {strategy!r}")
    if not (0.0 <= recall_cutoff <= 1.0):
        raise InvalidConfigError("recall_cutoff must be in [0, 1]")
    y_true = np.asarray(y_true)
    if len(score_vectors) != len(y_true):
        raise InvalidInputError("scores and labels must align")

    values = np.array([metric_value(metric, s) for s in score_vectors])
    est = np.array([s.estimated_label for s in score_vectors])
    n_labels = score_vectors[0].n_labels if score_vectors else 0

    thresholds = {}
    for label in range(n_labels):
        correct_mask = (est == label) & (y_true == label)
        if not correct_mask.any():
            thresholds[label] = None
            continue
        if strategy == "mean":
            thresholds[label] = float(values[correct_mask].mean())
        else:
            est_mask = est == label
            thresholds[label] = _sweep_label(
                values[est_mask],
                (y_true[est_mask] == label),
                int((y_true == label).sum()),
                recall_cutoff,
            )
    return ThresholdTable(metric, strategy, recall_cutoff, thresholds)


def assess(s: ScoreVector, table: ThresholdTable) -> GatedPrediction:
    """Gate one prediction: reliable iff the metric value strictly
    exceeds the estimated label's threshold; UNSET is never reliable."""
    value = metric_value(table.metric, s)
    tau = table.get(s.estimated_label)
    reliable = tau is not None and value > tau
    return GatedPrediction(s.estimated_label, reliable, value)
