"""Train/test splitting and classification quality metrics.

ROC-AUC is computed from the exact step ROC with tied scores batched per
group; the trapezoid sum is accumulated in integers so it agrees bit-for-bit
with the pairwise-comparison formulation.  Average precision is the
step-interpolated sum over the descending-score sweep, accumulated in exact
rationals.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

from .errors import EvaluationError
from .forest import ForestConfig, LabeledPair, predict_proba, train_forest
from .seeds import derive_seed


@dataclass
class EvalReport:
    test_fraction: float | None
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float | None
    average_precision: float | None
    roc_points: tuple[tuple[float, float], ...]
    pr_points: tuple[tuple[float, float], ...]
    chance_level: float
    n_scored: int

    def to_dict(self) -> dict:
        return {
            "test_fraction": self.test_fraction,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "roc_auc": self.roc_auc,
            "average_precision": self.average_precision,
            "roc_points": [list(p) for p in self.roc_points],
            "pr_points": [list(p) for p in self.pr_points],
            "chance_level": self.chance_level,
            "n_scored": self.n_scored,
        }


def split(data: Sequence, test_fraction: float, seed: int) -> tuple[list, list]:
    """Uniform random split without stratification.

    The test size is round-half-up of ``fraction * n``; both sides keep the
    original relative order.  An empty side is an error.
    """
    data = list(data)
    if not 0.0 < test_fraction < 1.0:
        raise EvaluationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if len(data) < 2:
        raise EvaluationError("need at least two items to split")
    test_size = int(len(data) * test_fraction + 0.5)
    if test_size == 0 or test_size == len(data):
        raise EvaluationError(
            f"split leaves an empty side (n={len(data)}, test_fraction={test_fraction})")
    rng = random.Random(seed)
    indices = list(range(len(data)))
    rng.shuffle(indices)
    test_idx = sorted(indices[:test_size])
    train_idx = sorted(indices[test_size:])
    return [data[i] for i in train_idx], [data[i] for i in test_idx]


def compute_metrics(scores: Sequence[float], labels: Sequence[bool],
                    threshold: float = 0.5, test_fraction: float | None = None) -> EvalReport:
    """Thresholded confusion metrics plus ROC-AUC and average precision.

    With a single class present, AUC and AP are reported as None and the
    threshold metrics are still computed.  Precision (and recall) default to
    0.0 when their denominator is empty.
    """
    scores = [float(s) for s in scores]
    labels = [bool(b) for b in labels]
    if len(scores) != len(labels) or not scores:
        raise EvaluationError("scores and labels must be non-empty and of equal length")
    n = len(scores)
    tp = sum(1 for s, l in zip(scores, labels) if l and s >= threshold)
    fp = sum(1 for s, l in zip(scores, labels) if not l and s >= threshold)
    fn = sum(1 for s, l in zip(scores, labels) if l and s < threshold)
    tn = n - tp - fp - fn
    n_pos = tp + fn
    n_neg = fp + tn
    accuracy = (tp + tn) / n
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / n_pos if n_pos else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    chance = n_pos / n

    roc_auc = average_precision = None
    roc_points: tuple[tuple[float, float], ...] = ()
    pr_points: tuple[tuple[float, float], ...] = ()
    if n_pos and n_neg:
        ranked = sorted(zip(scores, labels), key=lambda t: -t[0])
        cum_tp = cum_fp = 0
        auc_twice = 0  # 2 * AUC * n_pos * n_neg, exact
        ap_sum = Fraction(0)
        roc: list[tuple[float, float]] = [(0.0, 0.0)]
        pr: list[tuple[float, float]] = [(0.0, 1.0)]
        i = 0
        while i < n:
            j = i
            group_tp = group_fp = 0
            while j < n and ranked[j][0] == ranked[i][0]:
                group_tp += ranked[j][1]
                group_fp += not ranked[j][1]
                j += 1
            prev_tp = cum_tp
            cum_tp += group_tp
            cum_fp += group_fp
            auc_twice += group_fp * (prev_tp + cum_tp)
            if group_tp:
                ap_sum += Fraction(group_tp, n_pos) * Fraction(cum_tp, cum_tp + cum_fp)
            roc.append((cum_fp / n_neg, cum_tp / n_pos))
            pr.append((cum_tp / n_pos, cum_tp / (cum_tp + cum_fp)))
            i = j
        roc_auc = auc_twice / (2 * n_pos * n_neg)
        average_precision = float(ap_sum)
        roc_points = tuple(roc)
        pr_points = tuple(pr)

    return EvalReport(test_fraction, accuracy, precision, recall, f1,
                      roc_auc, average_precision, roc_points, pr_points, chance, n)


@dataclass
class EvalSummary:
    """Per-fraction means over the repeated splits, with AUC/AP from one
    dedicated half split (flagged in the metadata)."""

    n_splits: int
    fractions: dict[float, dict[str, float]]
    roc_auc: float | None
    average_precision: float | None
    roc_points: tuple[tuple[float, float], ...]
    pr_points: tuple[tuple[float, float], ...]
    chance_level: float
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "n_splits": self.n_splits,
            "fractions": {repr(frac): metrics for frac, metrics in sorted(self.fractions.items())},
            "roc_auc": self.roc_auc,
            "average_precision": self.average_precision,
            "roc_points": [list(p) for p in self.roc_points],
            "pr_points": [list(p) for p in self.pr_points],
            "chance_level": self.chance_level,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def repeated_eval(pairs: Sequence[LabeledPair], forest_cfg: ForestConfig, *,
                  seed: int, n_splits: int = 15,
                  fractions: Sequence[float] = (0.25, 0.5),
                  threshold: float = 0.5) -> EvalSummary:
    """Mean accuracy/precision/recall/F1 over ``n_splits`` seeded splits per
    test fraction; the classifier is retrained on every split.

    The ROC-AUC / AP figures come from one dedicated 50% split, independent of
    the fraction sweep, and the scoring pass is recorded in the metadata.
    """
    pairs = list(pairs)
    per_fraction: dict[float, dict[str, float]] = {}
    for fraction in fractions:
        reports = []
        for i in range(n_splits):
            train, test = split(pairs, fraction, derive_seed(seed, f"split:{fraction}:{i}"))
            model = train_forest(train, replace(forest_cfg,
                                                rng_seed=derive_seed(seed, f"forest:{fraction}:{i}")))
            scores = [predict_proba(model, p.features) for p in test]
            reports.append(compute_metrics(scores, [p.label for p in test],
                                           threshold, test_fraction=fraction))
        per_fraction[float(fraction)] = {
            "accuracy": sum(r.accuracy for r in reports) / n_splits,
            "precision": sum(r.precision for r in reports) / n_splits,
            "recall": sum(r.recall for r in reports) / n_splits,
            "f1": sum(r.f1 for r in reports) / n_splits,
        }
    train, test = split(pairs, 0.5, derive_seed(seed, "auc-ap-split"))
    model = train_forest(train, replace(forest_cfg, rng_seed=derive_seed(seed, "auc-ap-forest")))
    scores = [predict_proba(model, p.features) for p in test]
    headline = compute_metrics(scores, [p.label for p in test], threshold, test_fraction=0.5)
    return EvalSummary(
        n_splits=n_splits,
        fractions=per_fraction,
        roc_auc=headline.roc_auc,
        average_precision=headline.average_precision,
        roc_points=headline.roc_points,
        pr_points=headline.pr_points,
        chance_level=headline.chance_level,
        metadata={"auc_ap_test_fraction": 0.5, "auc_ap_split": "dedicated",
                  "threshold": threshold},
    )
