"""
Report generation from persisted run files: leaderboard, per-run metrics,
template-mismatch decrease ratios and the ensemble sweep (CSV, SVG, markdown).
"""

import logging
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
from jinja2 import Environment, FileSystemLoader  # noqa: E402

from ..common.manifest import write_text_atomic  # noqa: E402
from ..evaluation.ensemble import MAX_N, best_n, sweep_n  # noqa: E402
from ..evaluation.metrics import (decrease_ratio, format_percent, improvement,  # noqa: E402
                                  leaderboard, one_shot_metrics, relative_performance,
                                  score_run)

logger = logging.getLogger(__name__)

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.realpath(__file__)), "templates")
TOP_K = 10

# Untuned chat model after regeneration; shown for orientation, never computed.
ZERO_SHOT_REFERENCE = (
    ("overall", "4.27%"),
    ("event type", "29.18%"),
    ("informativeness", "53.4%"),
    ("humanitarian aid type", "23.9%"),
)

METRIC_COLUMNS = ["name", "template", "overall_acc", "event_acc", "useful_acc", "aid_acc",
                  "invalid_fraction", "one_shot_overall_acc", "one_shot_invalid_fraction",
                  "excluded", "n_samples", "adaptation", "rank"]
LEADERBOARD_COLUMNS = ["rank", "name", "overall_acc", "event_acc", "useful_acc", "aid_acc",
                       "invalid_fraction", "excluded"]
DECREASE_COLUMNS = ["name", "same_template", "diff_template", "acc_same", "acc_diff",
                    "decrease_ratio"]


def select_runs(runs, template_id):
    return [run for run in runs if run.template == template_id]


def metrics_table(runs, truths):
    """One row per run, sorted by name then template."""
    rows = []
    for run in sorted(runs, key=lambda r: (r.name, r.template.value)):
        m = score_run(run, truths)
        rows.append({
            "name": run.name, "template": run.template.name,
            "overall_acc": m.overall_acc, "event_acc": m.event_acc,
            "useful_acc": m.useful_acc, "aid_acc": m.aid_acc,
            "invalid_fraction": m.invalid_fraction,
            "one_shot_overall_acc": one_shot_metrics(run, truths).overall_acc,
            "one_shot_invalid_fraction": run.one_shot_invalid_fraction,
            "excluded": run.excluded_from_regeneration,
            "n_samples": m.n_samples,
            "adaptation": run.endpoint.adaptation.name if run.endpoint.adaptation else None,
            "rank": run.endpoint.rank,
        })
    return pd.DataFrame(rows, columns=METRIC_COLUMNS)


def leaderboard_table(runs, truths, k=TOP_K):
    excluded = {run.name: run.excluded_from_regeneration for run in runs}
    rows = []
    if runs:
        for i, (name, m) in enumerate(leaderboard(runs, truths, k), 1):
            rows.append({"rank": i, "name": name, "overall_acc": m.overall_acc,
                         "event_acc": m.event_acc, "useful_acc": m.useful_acc,
                         "aid_acc": m.aid_acc, "invalid_fraction": m.invalid_fraction,
                         "excluded": excluded[name]})
    return pd.DataFrame(rows, columns=LEADERBOARD_COLUMNS)


def decrease_ratio_table(runs, truths):
    """
    Pairs each endpoint's run on the template it was trained with against its
    runs on other templates.

    Endpoints without a declared trained template, or without both kinds of
    run, contribute no rows. A same-template accuracy of 0 is skipped with a
    warning.
    """
    by_name = {}
    for run in runs:
        by_name.setdefault(run.name, []).append(run)
    rows = []
    for name in sorted(by_name):
        group = by_name[name]
        trained = group[0].endpoint.trained_template
        same = [r for r in group if r.template.name == trained]
        if trained is None or not same:
            continue
        acc_same = score_run(same[0], truths).overall_acc
        for other in sorted(group, key=lambda r: r.template.value):
            if other.template.name == trained:
                continue
            acc_diff = score_run(other, truths).overall_acc
            if acc_same <= 0:
                logger.warning("%s: same-template accuracy is 0, no decrease ratio", name)
                continue
            rows.append({"name": name, "same_template": trained,
                         "diff_template": other.template.name,
                         "acc_same": acc_same, "acc_diff": acc_diff,
                         "decrease_ratio": decrease_ratio(acc_same, acc_diff)})
    return pd.DataFrame(rows, columns=DECREASE_COLUMNS)


def plot_sweep(sweep, path):
    """Overall accuracy against n, one line per vote type, as a static SVG."""
    with plt.rc_context({"svg.hashsalt": "ensemble-sweep", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for vote_type, group in sweep.groupby("vote_type", sort=True):
            ax.plot(group["n"], group["overall_acc"], marker="o", label=vote_type)
        ax.set_xlabel("number of checkpoints (n)")
        ax.set_ylabel("overall accuracy")
        ax.legend()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def write_csv(df, path):
    write_text_atomic(path, df.to_csv(index=False, lineterminator="\n"))


def _environment():
    env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), trim_blocks=True,
                      lstrip_blocks=True, keep_trailing_newline=True)
    env.filters["percent"] = format_percent
    return env


def write_report(runs, truths, out_dir, template_id, runs_dir="", n_max=MAX_N, top_k=TOP_K):
    """
    Write report.md, leaderboard.csv and metrics.csv; decrease_ratio.csv when
    template pairs exist; sweep.csv and sweep.svg when at least one run uses
    `template_id`.

    Args:
    - runs: all loaded CheckpointRun objects.
    - truths: dict sample_id -> LabelTriple.
    - out_dir: output directory, created if needed.
    - template_id: template whose runs are ranked and ensembled.

    Returns:
    - list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    selected = select_runs(runs, template_id)
    written = []

    def out(name):
        path = os.path.join(out_dir, name)
        written.append(path)
        return path

    board = leaderboard_table(selected, truths, top_k)
    write_csv(board, out("leaderboard.csv"))
    metrics = metrics_table(runs, truths)
    write_csv(metrics, out("metrics.csv"))

    decrease = decrease_ratio_table(runs, truths)
    if len(decrease):
        write_csv(decrease, out("decrease_ratio.csv"))

    best = {}
    ensemble_gain = runner_up_share = None
    if selected:
        sweep = sweep_n(selected, truths, n_max)
        write_csv(sweep, out("sweep.csv"))
        plot_sweep(sweep, out("sweep.svg"))
        best = best_n(sweep)
        top = board["overall_acc"].tolist()
        if top[0] > 0:
            ensemble_gain = improvement(max(acc for _, acc in best.values()), top[0])
            if len(top) > 1:
                runner_up_share = relative_performance(top[1], top[0])

    selected_names = {run.name for run in selected}
    content = _environment().get_template("report.md.j2").render(
        template=template_id.name,
        runs_dir=runs_dir,
        n_runs=len(selected),
        leaderboard=board.to_dict("records"),
        metrics=[row for row in metrics.to_dict("records")
                 if row["template"] == template_id.name and row["name"] in selected_names],
        decrease=decrease.to_dict("records"),
        best_n=best,
        ensemble_gain=ensemble_gain,
        runner_up_share=runner_up_share,
        zero_shot=ZERO_SHOT_REFERENCE,
    )
    write_text_atomic(out("report.md"), content)
    logger.info("report for %d runs (%s) written to %s", len(selected), template_id.name, out_dir)
    return written
