"""
Accuracy metrics over checkpoint runs, leaderboards and the ratio arithmetic
used when comparing checkpoints.
"""

from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal

from ..common.errors import MissingSampleError
from ..llm_inference.parse import compare


@dataclass(frozen=True)
class Metrics:
    overall_acc: float
    event_acc: float
    useful_acc: float
    aid_acc: float
    invalid_fraction: float
    n_samples: int

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def score_predictions(predictions, truths):
    """
    Args:
    - predictions: dict sample_id -> PartialLabelTriple (or ParsedResponse).
    - truths: dict sample_id -> LabelTriple.

    Returns:
    - Metrics over the samples of `predictions`.

    Raises:
    - ValueError: no predictions.
    - MissingSampleError: a predicted sample has no truth.
    """
    n = len(predictions)
    if n == 0:
        raise ValueError("Cannot score an empty prediction set.")
    overall = event = useful = aid = invalid = 0
    for sample_id, pred in predictions.items():
        if sample_id not in truths:
            raise MissingSampleError(sample_id, "truths")
        match = compare(pred, truths[sample_id])
        overall += match.overall_correct
        event += match.event_correct
        useful += match.useful_correct
        aid += match.aid_correct
        labels = getattr(pred, "labels", pred)
        invalid += not labels.complete
    return Metrics(overall / n, event / n, useful / n, aid / n, invalid / n, n)


def score_run(run, truths):
    """Metrics of a run's final (post-regeneration) parses."""
    return score_predictions(run.final_labels(), truths)


def one_shot_metrics(run, truths):
    """Metrics of a run's first-generation parses."""
    return score_predictions(
        {sid: run.predictions[sid].one_shot.labels for sid in run.sample_order}, truths)


def leaderboard(runs, truths, k):
    """
    Top-k runs by overall accuracy, descending; ties by name ascending.

    Returns:
    - list of (name, Metrics) with min(k, len(runs)) entries.
    """
    if k < 1:
        raise ValueError("k must be >= 1, got {}".format(k))
    scored = [(run.name, score_run(run, truths)) for run in runs]
    scored.sort(key=lambda item: (-item[1].overall_acc, item[0]))
    return scored[:k]


def decrease_ratio(acc_same_template, acc_diff_template):
    """Relative accuracy drop when inference uses a different template."""
    if acc_same_template <= 0:
        raise ValueError("Same-template accuracy must be > 0, got {}"
                         .format(acc_same_template))
    return (acc_same_template - acc_diff_template) / acc_same_template


def relative_performance(a, b):
    if b == 0:
        raise ValueError("Reference accuracy must be non-zero.")
    return a / b


def improvement(a, b):
    """Relative improvement of a over b."""
    if b == 0:
        raise ValueError("Reference accuracy must be non-zero.")
    return (a - b) / b


def format_percent(ratio):
    """0.14519 -> "14.5%" (one decimal, rounded half-up)."""
    value = (Decimal(repr(float(ratio))) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return "{}%".format(value)
