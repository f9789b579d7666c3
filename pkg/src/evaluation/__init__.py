from .metrics import (Metrics, score_run, score_predictions, one_shot_metrics,
                      leaderboard, decrease_ratio, relative_performance,
                      improvement, format_percent)
from .ensemble import (VoteType, EnsembleConfig, vote_triple, vote_per_label,
                       ensemble_accuracy, sweep_n, best_n, rank_runs)

__version__ = '0.1.0'
name = 'evaluation'
