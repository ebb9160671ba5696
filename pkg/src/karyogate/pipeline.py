"""Cascade orchestration and evaluation.

Wires the 4-class pruner in front of the 24-class identifier, gates
identifier predictions with a calibrated threshold table, accumulates
the contingency matrix and rejection counts, and emits per-label
precision/recall reports plus the cross-metric comparison table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .classify import ScoreVector
from .errors import InvalidInputError, ParseError
from .reliability import METRICS, ThresholdTable, assess, calibrate_thresholds

SPLITS = ("train", "valid", "test")
PRUNE_LABELS = ("semi_straight", "garbage", "curved", "overlap")
SEMI_STRAIGHT = "semi_straight"
PRECISION_FLOOR = 0.8  # "improved" labels must clear this gated precision


@dataclass(frozen=True)
class Instance:
    path: str
    label: int  # chromosome label 1-24 (23 = Y, 24 = X)
    subject: str
    prune_label: str = "UNKNOWN"
    split: str = "UNKNOWN"


def save_manifest(path, instances) -> None:
    with open(path, "w") as f:
        f.write("path\tlabel\tsubject\tprune_label\tsplit\n")
        for inst in instances:
            f.write(
                f"{inst.path}\t{inst.label}\t{inst.subject}\t"
                f"{inst.prune_label}\t{inst.split}\n"
            )


def load_manifest(path) -> list:
    instances = []
    try:
        with open(path) as f:
            header = f.readline().rstrip("\n").split("\t")
            if header[:3] != ["path", "label", "subject"]:
                raise ParseError(f"{path}: unexpected manifest header")
            for lineno, line in enumerate(f, start=2):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 5:
                    raise ParseError(f"{path}:{lineno}: expected 5 columns")
                instances.append(
                    Instance(parts[0], int(parts[1]), parts[2], parts[3], parts[4])
                )
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot load manifest from {path}: {exc}") from exc
    return instances


def split_by_subject(instances, fractions, seed: int = 0) -> list:
    """Assign subject-disjoint splits by greedy deficit matching.

    ``fractions`` aligns with (train, valid, test) and must sum to 1.
    Each subject goes whole to the split with the largest remaining
    deficit; subjects are visited largest first (seeded shuffle breaks
    size ties).
    """
    fractions = tuple(float(v) for v in fractions)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidInputError("split fractions must sum to 1")
    subjects = {}
    for inst in instances:
        subjects.setdefault(inst.subject, []).append(inst)
    active = [i for i, frac in enumerate(fractions) if frac > 0]
    if len(subjects) < len(active):
        raise InvalidInputError("fewer subjects than nonzero splits")

    rng = np.random.default_rng(seed)
    order = sorted(subjects)
    rng.shuffle(order)
    order.sort(key=lambda s: -len(subjects[s]))  # stable: shuffle breaks ties

    total = len(instances)
    assigned = [0.0] * len(fractions)
    choice = {}
    for subj in order:
        deficits = [
            fractions[i] * total - assigned[i] if i in active else -np.inf
            for i in range(len(fractions))
        ]
        best = int(np.argmax(deficits))
        choice[subj] = SPLITS[best]
        assigned[best] += len(subjects[subj])
    return [replace(inst, split=choice[inst.subject]) for inst in instances]


@dataclass
class ContingencyMatrix:
    """True-label by estimated-label counts plus per-true-label rejections."""

    counts: np.ndarray
    rejected_per_label: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ContingencyMatrix":
        return cls(np.zeros((n, n), dtype=int), np.zeros(n, dtype=int))


def precision_recall(counts: np.ndarray):
    """Per-label precision (diagonal over column sum) and recall
    (diagonal over row sum); zero denominators yield NaN (UNDEFINED)."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise InvalidInputError("contingency matrix must be square")
    diag = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / np.where(col > 0, col, 1), np.nan)
        recall = np.where(row > 0, diag / np.where(row > 0, row, 1), np.nan)
    return precision, recall


@dataclass
class EvalReport:
    """Gated vs ungated cascade evaluation over one instance set."""

    labels: np.ndarray  # identifier label values, index-aligned with matrices
    gated: ContingencyMatrix
    ungated: ContingencyMatrix
    n_total: int
    n_pruned_out: int
    metric: str | None = None
    thresholds: dict = field(default_factory=dict)

    @property
    def n_stage2(self) -> int:
        return self.n_total - self.n_pruned_out

    @property
    def rejection_rate(self) -> float:
        # pruned-out instances never reach the identifier; count them as
        # rejected so a fully pruned batch reports 1.0, not 0.0
        if self.n_total == 0:
            return 0.0
        rejected = self.n_pruned_out + int(self.gated.rejected_per_label.sum())
        return float(rejected) / self.n_total

    def per_label_rows(self) -> list:
        gp, gr = precision_recall(self.gated.counts)
        up, ur = precision_recall(self.ungated.counts)
        # recall counting rejections as misses
        row_tot = self.gated.counts.sum(axis=1) + self.gated.rejected_per_label
        with np.errstate(invalid="ignore", divide="ignore"):
            gr_strict = np.where(
                row_tot > 0,
                np.diag(self.gated.counts) / np.where(row_tot > 0, row_tot, 1),
                np.nan,
            )
        rows = []
        for i, label in enumerate(self.labels):
            rows.append(
                {
                    "label": int(label),
                    "gated_precision": float(gp[i]),
                    "gated_recall_excl_rejected": float(gr[i]),
                    "gated_recall_rejected_as_miss": float(gr_strict[i]),
                    "ungated_precision": float(up[i]),
                    "ungated_recall": float(ur[i]),
                    "rejected": int(self.gated.rejected_per_label[i]),
                    "threshold": self.thresholds.get(i),
                }
            )
        return rows

    def to_json(self) -> str:
        payload = {
            "metric": self.metric,
            "n_total": self.n_total,
            "n_pruned_out": self.n_pruned_out,
            "rejection_rate": self.rejection_rate,
            "per_label": [
                {k: (None if isinstance(v, float) and np.isnan(v) else v)
                 for k, v in row.items()}
                for row in self.per_label_rows()
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_text(self) -> str:
        def fmt(v):
            if v is None or (isinstance(v, float) and np.isnan(v)):
                return "UNDEF"
            if isinstance(v, float):
                return f"{v:.5f}"
            return str(v)

        headers = [
            "label", "gated_P", "gated_R_excl", "gated_R_miss",
            "ungated_P", "ungated_R", "rejected", "threshold",
        ]
        keys = [
            "label", "gated_precision", "gated_recall_excl_rejected",
            "gated_recall_rejected_as_miss", "ungated_precision",
            "ungated_recall", "rejected", "threshold",
        ]
        lines = ["\t".join(headers)]
        for row in self.per_label_rows():
            lines.append("\t".join(fmt(row[k]) for k in keys))
        lines.append(f"rejection_rate\t{self.rejection_rate:.5f}")
        lines.append(f"pruned_out\t{self.n_pruned_out}/{self.n_total}")
        return "\n".join(lines) + "\n"


def _score_all(model, X) -> list:
    """Full score vectors for every row of X under any scorer model."""
    return model.score_batch(X)


def run_cascade(
    instances,
    id_features,
    identifier,
    table: ThresholdTable | None = None,
    pruner=None,
    prune_features=None,
) -> EvalReport:
    """Prune, score, gate, and tally one instance set.

    When ``pruner`` is given, only instances it classifies as
    semi-straight reach the identifier. Gated counts exclude rejected
    instances (they are tallied per true label instead); ungated counts
    cover every stage-2 instance.
    """
    labels = identifier.labels_
    label_to_idx = {int(v): i for i, v in enumerate(labels)}
    n = len(labels)
    gated = ContingencyMatrix.zeros(n)
    ungated = ContingencyMatrix.zeros(n)

    prune_scores = None
    if pruner is not None:
        if prune_features is None:
            prune_features = id_features
        prune_scores = _score_all(pruner, prune_features)
        prune_names = list(pruner.labels_)

    id_scores = _score_all(identifier, id_features)
    if len(id_scores) != len(instances):
        raise InvalidInputError("scores and instances must align")
    if table is not None and len(table.thresholds) not in (0, n):
        raise InvalidInputError("threshold table label space mismatch")

    pruned_out = 0
    for i, inst in enumerate(instances):
        if prune_scores is not None:
            if prune_names[prune_scores[i].estimated_label] != SEMI_STRAIGHT:
                pruned_out += 1
                continue
        sv = id_scores[i]
        if sv.n_labels != n:
            raise InvalidInputError("identifier score arity mismatch")
        t = label_to_idx.get(int(inst.label))
        if t is None:
            raise InvalidInputError(f"true label {inst.label} unknown to identifier")
        est = sv.estimated_label
        ungated.counts[t, est] += 1
        if table is None:
            gated.counts[t, est] += 1
        else:
            g = assess(sv, table)
            if g.reliable:
                gated.counts[t, est] += 1
            else:
                gated.rejected_per_label[t] += 1

    return EvalReport(
        labels=np.asarray(labels),
        gated=gated,
        ungated=ungated,
        n_total=len(instances),
        n_pruned_out=pruned_out,
        metric=table.metric if table is not None else None,
        thresholds=dict(table.thresholds) if table is not None else {},
    )


def compare_metrics_report(
    calib_scores,
    calib_y_idx,
    eval_scores,
    eval_y_idx,
    recall_cutoff: float = 0.5,
    strategy: str = "recall_sweep",
    precision_floor: float = PRECISION_FLOOR,
    metrics=METRICS,
) -> list:
    """Evaluate every reliability metric on one calibration/eval pair.

    Returns one row per metric: best gated per-label precision, best
    precision improvement over ungated, and the count of labels whose
    gated precision both improved and cleared the floor.
    """
    n = calib_scores[0].n_labels
    eval_y_idx = np.asarray(eval_y_idx)
    est = np.array([s.estimated_label for s in eval_scores])
    ungated = np.zeros((n, n), dtype=int)
    for t, e in zip(eval_y_idx, est):
        ungated[t, e] += 1
    up, _ = precision_recall(ungated)

    rows = []
    for metric in metrics:
        table = calibrate_thresholds(
            calib_scores, calib_y_idx, metric, recall_cutoff, strategy
        )
        gated = np.zeros((n, n), dtype=int)
        for t, sv in zip(eval_y_idx, eval_scores):
            g = assess(sv, table)
            if g.reliable:
                gated[t, g.estimated_label] += 1
        gp, _ = precision_recall(gated)
        improvement = gp - up
        improved = (
            ~np.isnan(gp) & ~np.isnan(up) & (improvement > 0)
            & (gp > precision_floor)
        )
        rows.append(
            {
                "metric": metric,
                "best_precision": float(np.nanmax(gp)) if np.any(~np.isnan(gp)) else float("nan"),
                "best_improvement": (
                    float(np.nanmax(improvement))
                    if np.any(~np.isnan(improvement))
                    else float("nan")
                ),
                "n_labels_improved": int(improved.sum()),
            }
        )
    return rows


def comparison_to_text(rows) -> str:
    lines = ["metric\tbest_precision\tbest_improvement\tn_labels_improved"]
    for row in rows:
        lines.append(
            f"{row['metric']}\t{row['best_precision']:.5f}\t"
            f"{row['best_improvement']:.5f}\t{row['n_labels_improved']}"
        )
    return "\n".join(lines) + "\n"
