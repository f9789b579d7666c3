"""
Majority-vote ensembling over the top-N checkpoints.

Two schemes: TRIPLE votes on whole (event, useful, aid) predictions, PER_LABEL
votes on each field separately. A missing field votes as its own value
(None). Ties go to the candidate predicted by the best-ranked checkpoint.
"""

import enum
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Tuple

import pandas as pd

from ..common.errors import MissingSampleError
from ..common.labels import PartialLabelTriple
from .metrics import leaderboard, score_predictions

logger = logging.getLogger(__name__)

MAX_N = 15


class VoteType(enum.Enum):
    TRIPLE = 1
    PER_LABEL = 2


@dataclass(frozen=True)
class EnsembleConfig:
    n: int
    vote: VoteType
    ranking: Tuple[str, ...]

    def __post_init__(self):
        if not 1 <= self.n <= MAX_N:
            raise ValueError("n must be in [1, {}], got {}".format(MAX_N, self.n))
        if self.n > len(self.ranking):
            raise ValueError("n={} exceeds the {} ranked checkpoints"
                             .format(self.n, len(self.ranking)))


def _majority(values):
    """Most frequent value; ties resolved by earliest position in `values`."""
    counts = Counter(values)
    top = max(counts.values())
    for value in values:
        if counts[value] == top:
            return value


def vote_triple(preds):
    """
    Args:
    - preds: list of PartialLabelTriple in checkpoint-ranking order.

    Returns:
    - the most frequent whole prediction.
    """
    if not preds:
        raise ValueError("Cannot vote over zero predictions.")
    return _majority(list(preds))


def vote_per_label(preds):
    """Each field voted independently; the result may match no single input."""
    if not preds:
        raise ValueError("Cannot vote over zero predictions.")
    return PartialLabelTriple(
        _majority([p.event for p in preds]),
        _majority([p.useful for p in preds]),
        _majority([p.aid for p in preds]))


_VOTERS = {VoteType.TRIPLE: vote_triple, VoteType.PER_LABEL: vote_per_label}


def rank_runs(runs, truths):
    """Run names ordered by overall accuracy (leaderboard order)."""
    if not runs:
        return ()
    return tuple(name for name, _ in leaderboard(runs, truths, len(runs)))


def ensemble_predictions(runs, config):
    """sample_id -> voted PartialLabelTriple over the top-n runs of the ranking."""
    by_name = {run.name: run for run in runs}
    selected = [by_name[name] for name in config.ranking[:config.n]]
    finals = [run.final_labels() for run in selected]
    vote = _VOTERS[config.vote]
    sample_ids = selected[0].sample_order
    voted = {}
    for sid in sample_ids:
        column = []
        for run, labels in zip(selected, finals):
            if sid not in labels:
                raise MissingSampleError(sid, "run {}".format(run.name))
            column.append(labels[sid])
        voted[sid] = vote(column)
    return voted


def ensemble_accuracy(runs, truths, config):
    """Metrics of the voted predictions against the truths."""
    return score_predictions(ensemble_predictions(runs, config), truths)


def sweep_n(runs, truths, n_max=MAX_N, ranking=None):
    """
    Ensemble accuracy for n = 1..n_max under both vote types.

    The sweep stops at len(runs) when fewer runs exist.

    Returns:
    - pandas DataFrame with columns n, vote_type, overall_acc, event_acc,
      useful_acc, aid_acc, invalid_fraction; 2 rows per n, TRIPLE first.
    """
    if not 1 <= n_max <= MAX_N:
        raise ValueError("n_max must be in [1, {}], got {}".format(MAX_N, n_max))
    if ranking is None:
        ranking = rank_runs(runs, truths)
    top = min(n_max, len(ranking))
    if top < n_max:
        logger.warning("only %d runs available, sweep truncated at n=%d (asked %d)",
                       len(ranking), top, n_max)
    rows = []
    for n in range(1, top + 1):
        for vote in VoteType:
            m = ensemble_accuracy(runs, truths, EnsembleConfig(n, vote, tuple(ranking)))
            rows.append({"n": n, "vote_type": vote.name, "overall_acc": m.overall_acc,
                         "event_acc": m.event_acc, "useful_acc": m.useful_acc,
                         "aid_acc": m.aid_acc, "invalid_fraction": m.invalid_fraction})
    return pd.DataFrame(rows, columns=["n", "vote_type", "overall_acc", "event_acc",
                                       "useful_acc", "aid_acc", "invalid_fraction"])


def best_n(sweep):
    """vote_type name -> (n, overall_acc) maximizing overall accuracy, smallest n on ties."""
    best = {}
    for vote_type, group in sweep.groupby("vote_type", sort=True):
        group = group.sort_values(["overall_acc", "n"], ascending=[False, True])
        row = group.iloc[0]
        best[vote_type] = (int(row["n"]), float(row["overall_acc"]))
    return best
