"""
Command-line entry point.

    python -m src.pipeline.cli [--config FILE] [--log-level LEVEL] <command> ...

Commands:
    build     corpus -> train/test splits, instruction instances, manifest
    infer     query every configured endpoint over the test split
    report    leaderboard, metrics, decrease ratios and ensemble sweep
    ensemble  ensemble sweep only
    lora      toy low-rank adaptation training and gradient check

Exit codes: 0 success, 1 usage or configuration error, 2 data or validation
error, 3 I/O error.
"""

import argparse
import io
import logging
import os
import sys

from ..common.errors import ConfigError, MissingSampleError, PipelineError
from ..common.manifest import (ExperimentManifest, canonical_json, read_manifest, sha256_bytes,
                               sha256_file, write_manifest, write_text_atomic)
from ..common.tweet_utils import label_distribution, load_records_file, save_records
from ..evaluation.ensemble import MAX_N, best_n, sweep_n
from ..evaluation.metrics import format_percent, one_shot_metrics, score_run
from ..instruct_dataset.build import build_instances, export_instances, split_dataset
from ..instruct_dataset.templates import template_digest
from ..llm_inference.orchestrate import load_runs, run_experiment, run_filename
from ..lora.layer import init_layer, param_report, random_layer
from ..lora.train import (TOY_RANK_GRID, TrainConfig, grad_check, make_toy_dataset,
                          random_sample, train_toy, write_grad_check_csv, write_loss_csv,
                          write_param_report_csv)
from . import config as cfg
from .report import select_runs, write_csv, write_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

INSTANCES_FILE = "instances.jsonl"
TRAIN_FILE = "train.jsonl"
TEST_FILE = "test.jsonl"
MANIFEST_FILE = "manifest.json"
GRAD_CHECK_TOLERANCE = 1e-5


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _load_truths(test_path):
    return {r.id: r.truth for r in load_records_file(test_path)}


def _serialized(write, items, **kwargs):
    sink = io.StringIO()
    write(items, sink, **kwargs)
    return sink.getvalue()


def cmd_build(args, config):
    settings = cfg.build_settings(config, seed=args.seed, train_fraction=args.train_fraction,
                                  out_dir=args.out)
    records = load_records_file(args.corpus)
    train, test = split_dataset(records, settings.train_fraction, settings.seed)
    instances = build_instances(records)
    files = {
        TRAIN_FILE: _serialized(save_records, train),
        TEST_FILE: _serialized(save_records, test),
        INSTANCES_FILE: _serialized(export_instances, instances,
                                    with_text={r.id: r for r in records}),
    }
    manifest = ExperimentManifest(
        corpus_path=args.corpus,
        corpus_digest=sha256_file(args.corpus),
        template_digest=template_digest(),
        seed=settings.seed,
        train_fraction=settings.train_fraction,
        record_count=len(records),
        train_count=len(train),
        test_count=len(test),
        instance_count=len(instances),
        label_distribution=label_distribution(records),
        file_digests={name: sha256_bytes(content.encode("utf-8"))
                      for name, content in files.items()})
    out = settings.out_dir
    manifest_path = os.path.join(out, MANIFEST_FILE)
    if not args.force:
        # raises before any data file is touched when a different build is there
        write_manifest(manifest, manifest_path)
    for name, content in files.items():
        write_text_atomic(os.path.join(out, name), content)
    if args.force:
        manifest_path = write_manifest(manifest, manifest_path, new_version=True)
    logger.info("built %d instances from %d records (%d train, %d test), manifest %s",
                len(instances), len(records), len(train), len(test), manifest_path)
    return EXIT_OK


def cmd_infer(args, config):
    settings = cfg.inference_settings(
        config, runs_dir=args.runs_dir, template=args.template,
        max_concurrency=args.max_concurrency, temperature=args.temperature,
        request_timeout=args.request_timeout)
    endpoints = cfg.load_endpoints(cfg.load_config(args.endpoints) if args.endpoints
                                   else config, settings)
    template_id = settings.template_id()
    manifest = read_manifest(args.manifest)
    test_path = os.path.join(os.path.dirname(args.manifest), TEST_FILE)
    test_set = load_records_file(test_path)
    if len(test_set) != manifest.test_count:
        raise ValueError("test split has {} records, manifest says {}"
                         .format(len(test_set), manifest.test_count))
    expected = manifest.file_digests.get(TEST_FILE)
    if expected is not None and sha256_file(test_path) != expected:
        raise ValueError("{} does not match manifest {}".format(test_path, args.manifest))
    truths = {r.id: r.truth for r in test_set}
    runs = run_experiment(endpoints, test_set, template_id, settings.runs_dir, manifest)
    for run in runs:
        m = score_run(run, truths)
        summary = dict(m.to_dict(), name=run.name, template=template_id.name,
                       one_shot_overall_acc=one_shot_metrics(run, truths).overall_acc,
                       one_shot_invalid_fraction=run.one_shot_invalid_fraction,
                       excluded_from_regeneration=run.excluded_from_regeneration)
        path = os.path.join(settings.runs_dir, "metrics",
                            run_filename(run.name, template_id)[:-len(".jsonl")] + ".json")
        write_text_atomic(path, canonical_json(summary))
        logger.info("%s: overall %s, invalid %s, excluded %s", run.name,
                    format_percent(m.overall_acc), format_percent(m.invalid_fraction),
                    run.excluded_from_regeneration)
    return EXIT_OK


def _runs_and_truths(args):
    runs = load_runs(args.runs_dir)
    truths = _load_truths(args.test) if runs else {}
    return runs, truths


def cmd_report(args, config):
    settings = cfg.inference_settings(config, template=args.template)
    runs, truths = _runs_and_truths(args)
    out = args.out or os.path.join(args.runs_dir, "report")
    write_report(runs, truths, out, settings.template_id(), runs_dir=args.runs_dir,
                 n_max=args.n_max, top_k=args.top_k)
    return EXIT_OK


def cmd_ensemble(args, config):
    settings = cfg.inference_settings(config, template=args.template)
    runs, truths = _runs_and_truths(args)
    selected = select_runs(runs, settings.template_id())
    if not selected:
        raise ValueError("no {} runs in {}".format(settings.template, args.runs_dir))
    sweep = sweep_n(selected, truths, args.n_max)
    out = args.out or os.path.join(args.runs_dir, "report")
    os.makedirs(out, exist_ok=True)
    write_csv(sweep, os.path.join(out, "sweep.csv"))
    for vote_type, (n, acc) in best_n(sweep).items():
        logger.info("%s: best n = %d, overall %s", vote_type, n, format_percent(acc))
    return EXIT_OK


def cmd_lora(args, config):
    train_config = TrainConfig(learning_rate=args.learning_rate, steps=args.steps,
                               rank=args.rank, seed=args.seed, rank_grid=TOY_RANK_GRID)
    X, y = make_toy_dataset(seed=args.seed)
    layer = init_layer(X.shape[1], int(y.max()) + 1, train_config.rank, train_config.seed)
    result = train_toy(layer, (X, y), train_config)
    os.makedirs(args.out, exist_ok=True)
    write_loss_csv(result.losses, os.path.join(args.out, "loss.csv"))

    errors = [(seed, grad_check(random_layer(5, 4, 2, seed), random_sample(5, 4, seed)))
              for seed in range(args.grad_check_seeds)]
    write_grad_check_csv(errors, os.path.join(args.out, "grad_check.csv"))
    worst = max(error for _, error in errors) if errors else 0.0
    if worst >= GRAD_CHECK_TOLERANCE:
        logger.warning("gradient check: max relative error %.3e >= %.0e",
                       worst, GRAD_CHECK_TOLERANCE)
    else:
        logger.info("gradient check: max relative error %.3e over %d seeds",
                    worst, len(errors))
    write_param_report_csv(param_report(args.d_in, args.d_out),
                           os.path.join(args.out, "param_report.csv"))
    return EXIT_OK


def build_parser():
    parser = _ArgumentParser(prog="python -m src.pipeline.cli",
                             description="Crisis tweet instruction-tuning pipeline.")
    parser.add_argument("--config", type=str, default=None, help="TOML configuration file")
    parser.add_argument("--log-level", type=str, default=None, help="DEBUG, INFO, WARNING, ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build", help="build splits, instances and manifest")
    build.add_argument("-c", "--corpus", type=str, required=True)
    build.add_argument("-o", "--out", type=str, default=None)
    build.add_argument("--seed", type=int, default=None)
    build.add_argument("--train-fraction", type=float, default=None)
    build.add_argument("--force", action="store_true",
                       help="write manifest.v2.json, ... instead of failing on a conflict")
    build.set_defaults(func=cmd_build)

    infer = sub.add_parser("infer", help="run every endpoint over the test split")
    infer.add_argument("-m", "--manifest", type=str, required=True)
    infer.add_argument("-e", "--endpoints", type=str, default=None,
                       help="TOML file with [[endpoint]] tables (default: --config)")
    infer.add_argument("--runs-dir", type=str, default=None)
    infer.add_argument("-t", "--template", type=str, default=None)
    infer.add_argument("--max-concurrency", type=int, default=None)
    infer.add_argument("--temperature", type=float, default=None)
    infer.add_argument("--request-timeout", type=float, default=None)
    infer.set_defaults(func=cmd_infer)

    for name, func, help_text in (("report", cmd_report, "write the experiment report"),
                                  ("ensemble", cmd_ensemble, "ensemble sweep over n")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-r", "--runs-dir", type=str, required=True)
        p.add_argument("--test", type=str, required=True, help="test split (test.jsonl)")
        p.add_argument("-o", "--out", type=str, default=None)
        p.add_argument("-t", "--template", type=str, default=None)
        p.add_argument("--n-max", type=int, default=MAX_N)
        if name == "report":
            p.add_argument("--top-k", type=int, default=10)
        p.set_defaults(func=func)

    lora = sub.add_parser("lora", help="toy LoRA training and gradient check")
    lora.add_argument("-o", "--out", type=str, default="lora_out")
    lora.add_argument("--steps", type=int, default=200)
    lora.add_argument("--learning-rate", type=float, default=0.2)
    lora.add_argument("--rank", type=int, default=2)
    lora.add_argument("--seed", type=int, default=0)
    lora.add_argument("--grad-check-seeds", type=int, default=100)
    lora.add_argument("--d-in", type=int, default=4096, help="dimensions for the parameter report")
    lora.add_argument("--d-out", type=int, default=4096)
    lora.set_defaults(func=cmd_lora)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        config = cfg.load_config(args.config)
        logging.basicConfig(level=cfg.log_level(config, args.log_level), format=LOG_FORMAT)
        return args.func(args, config)
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except MissingSampleError as e:
        logger.error("%s", e)
        return EXIT_DATA
    except (ValueError, PipelineError) as e:
        logger.error("%s", e)
        return EXIT_DATA
    except OSError as e:
        logger.error("%s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
