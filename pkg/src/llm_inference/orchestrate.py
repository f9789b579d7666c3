"""
Inference over checkpoint endpoints.

A checkpoint run has two phases:
  1. one generation per test sample;
  2. unless more than half of the phase-1 parses are invalid (the checkpoint
     is then excluded), every invalid sample is regenerated until its parse
     is valid or it has used 5 attempts. The phase-1 generation counts as
     attempt 1.

The final prediction of a sample is the parse of its stopping attempt; fields
are never merged across attempts.
"""

import json
import logging
import os
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List

from ..common.manifest import sha256_bytes, write_manifest, write_text_atomic
from ..instruct_dataset.templates import TemplateId, render_prompt, template_digest
from .client import CompletionClient, EndpointConfig, generate_once
from .parse import ParsedResponse, parse_response

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 5
EXCLUSION_THRESHOLD = 0.5
MANIFEST_DIR = "manifests"

# EndpointConfig fields that describe how requests are scheduled rather than
# what is generated; they are left out of run files so the bytes do not
# depend on them.
_SCHEDULING_FIELDS = ("base_url", "max_concurrency", "request_timeout", "retry_delay")


@dataclass(frozen=True)
class GenerationAttempt:
    sample_id: str
    attempt_index: int
    raw: str
    parsed: ParsedResponse
    transport_failed: bool = False

    def __post_init__(self):
        if not 1 <= self.attempt_index <= MAX_ATTEMPTS:
            raise ValueError("attempt_index must be in [1, {}], got {}"
                             .format(MAX_ATTEMPTS, self.attempt_index))


@dataclass(frozen=True)
class SamplePrediction:
    sample_id: str
    attempts: tuple

    @property
    def final(self):
        return self.attempts[-1].parsed

    @property
    def one_shot(self):
        return self.attempts[0].parsed

    @property
    def attempts_used(self):
        return len(self.attempts)


@dataclass
class CheckpointRun:
    endpoint: EndpointConfig
    template: TemplateId
    predictions: Dict[str, SamplePrediction] = field(default_factory=dict)
    sample_order: List[str] = field(default_factory=list)
    one_shot_invalid_fraction: float = 0.0
    excluded_from_regeneration: bool = False
    manifest_digest: str = None

    @property
    def name(self):
        return self.endpoint.name

    def final_labels(self):
        """sample_id -> PartialLabelTriple of the final parse."""
        return {sid: self.predictions[sid].final.labels for sid in self.sample_order}

    def header(self):
        return {
            "endpoint": run_identity(self.endpoint),
            "template": self.template.name,
            "n_samples": len(self.sample_order),
            "samples_digest": samples_digest(self.sample_order),
            "one_shot_invalid_fraction": self.one_shot_invalid_fraction,
            "excluded_from_regeneration": self.excluded_from_regeneration,
            "manifest_digest": self.manifest_digest,
        }

    def to_jsonl(self):
        lines = [json.dumps(self.header(), sort_keys=True, ensure_ascii=False)]
        for sid in self.sample_order:
            prediction = self.predictions[sid]
            lines.append(json.dumps({
                "sample_id": sid,
                "attempts_used": prediction.attempts_used,
                "attempts": [{"attempt_index": a.attempt_index,
                              "raw": a.raw,
                              "transport_failed": a.transport_failed}
                             for a in prediction.attempts],
                "final": prediction.final.to_dict(),
            }, sort_keys=True, ensure_ascii=False))
        return "\n".join(lines) + "\n"


def run_identity(endpoint):
    d = endpoint.to_dict()
    for key in _SCHEDULING_FIELDS:
        d.pop(key)
    return d


def samples_digest(sample_ids):
    return sha256_bytes("\n".join(sample_ids).encode("utf-8"))


def run_filename(endpoint_name, template_id):
    safe = re.sub(r"[^A-Za-z0-9_.\-]+", "_", endpoint_name)
    return "{}__{}.jsonl".format(safe, template_id.name)


def load_run(path, endpoint=None):
    """Read a run file back into a CheckpointRun.

    Raw attempts are re-parsed, so the stored `final` block is informational.
    The scheduling fields of the endpoint come from `endpoint` when given.
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = [line for line in f.read().split("\n") if line]
    if not lines:
        raise ValueError("empty run file {}".format(path))
    header = json.loads(lines[0])
    identity = dict(header["endpoint"])
    if endpoint is not None:
        for key in _SCHEDULING_FIELDS:
            identity[key] = getattr(endpoint, key)
    else:
        identity["base_url"] = ""
    run = CheckpointRun(EndpointConfig.from_dict(identity), TemplateId[header["template"]])
    run.one_shot_invalid_fraction = header["one_shot_invalid_fraction"]
    run.excluded_from_regeneration = header["excluded_from_regeneration"]
    run.manifest_digest = header.get("manifest_digest")
    for line in lines[1:]:
        obj = json.loads(line)
        sid = obj["sample_id"]
        attempts = tuple(
            GenerationAttempt(sid, a["attempt_index"], a["raw"], parse_response(a["raw"]),
                              a.get("transport_failed", False))
            for a in obj["attempts"])
        run.predictions[sid] = SamplePrediction(sid, attempts)
        run.sample_order.append(sid)
    return run


def load_runs(runs_dir):
    """All run files of a directory, sorted by file name."""
    if not os.path.isdir(runs_dir):
        return []
    names = sorted(n for n in os.listdir(runs_dir) if n.endswith(".jsonl"))
    return [load_run(os.path.join(runs_dir, n)) for n in names]


class _ClientPool:
    """One CompletionClient per worker thread."""

    def __init__(self, endpoint):
        self.endpoint = endpoint
        self._local = threading.local()
        self._clients = []
        self._lock = threading.Lock()

    def get(self):
        client = getattr(self._local, "client", None)
        if client is None:
            client = CompletionClient(self.endpoint)
            self._local.client = client
            with self._lock:
                self._clients.append(client)
        return client

    def close(self):
        for client in self._clients:
            client.close()


def _attempt(client, prompt, sample_id, attempt_index):
    raw, failed = generate_once(client, prompt, sample_id)
    return GenerationAttempt(sample_id, attempt_index, raw, parse_response(raw), failed)


def generate_with_regeneration(client, prompt, sample_id, first_attempt=None,
                               max_attempts=MAX_ATTEMPTS):
    """Generate until the parse is valid or `max_attempts` are used.

    Args:
        client: CompletionClient.
        prompt: RenderedPrompt (multi-label template).
        sample_id: sample identity, forwarded to the endpoint.
        first_attempt: an already made GenerationAttempt counted as attempt 1.
        max_attempts: attempt budget, at most 5.

    Returns:
        A tuple (final ParsedResponse, attempts_used, attempts).
    """
    if not 1 <= max_attempts <= MAX_ATTEMPTS:
        raise ValueError("max_attempts must be in [1, {}]".format(MAX_ATTEMPTS))
    if set(prompt.template.encoded_fields) != {"event", "useful", "aid"}:
        raise ValueError("Regeneration needs a multi-label template, got {}"
                         .format(prompt.template.name))
    attempts = [first_attempt] if first_attempt is not None else []
    while not attempts or (not attempts[-1].parsed.valid and len(attempts) < max_attempts):
        attempts.append(_attempt(client, prompt, sample_id, len(attempts) + 1))
    return attempts[-1].parsed, len(attempts), tuple(attempts)


def run_checkpoint(endpoint, test_set, template_id, manifest_digest=None):
    """Run one checkpoint over the test set.

    Args:
        endpoint: EndpointConfig.
        test_set: non-empty list of TweetRecord.
        template_id: TemplateId used to render prompts.
        manifest_digest: digest of the experiment manifest, stored in the run.

    Returns:
        CheckpointRun. Transport failures never abort the run; they show up
        as empty, invalid attempts.
    """
    if not test_set:
        raise ValueError("test_set must be non-empty.")
    prompts = {r.id: render_prompt(template_id, r.text) for r in test_set}
    order = [r.id for r in test_set]
    pool = _ClientPool(endpoint)

    def phase_one(sample_id):
        return _attempt(pool.get(), prompts[sample_id], sample_id, 1)

    def phase_two(first):
        _, _, attempts = generate_with_regeneration(
            pool.get(), prompts[first.sample_id], first.sample_id, first)
        return attempts

    try:
        with ThreadPoolExecutor(max_workers=endpoint.max_concurrency) as executor:
            logger.info("%s: one-shot generation for %d samples (%s)",
                        endpoint.name, len(order), template_id.name)
            first = dict(zip(order, executor.map(phase_one, order)))
            invalid = [sid for sid in order if not first[sid].parsed.valid]
            fraction = len(invalid) / len(order)
            excluded = fraction > EXCLUSION_THRESHOLD
            attempts = {sid: (first[sid],) for sid in order}
            if excluded:
                logger.warning("%s: %.1f%% of one-shot responses invalid, "
                               "excluded from regeneration", endpoint.name, 100 * fraction)
            elif invalid:
                logger.info("%s: regenerating %d invalid samples", endpoint.name, len(invalid))
                regenerated = executor.map(phase_two, [first[sid] for sid in invalid])
                attempts.update(zip(invalid, regenerated))
    finally:
        pool.close()

    run = CheckpointRun(endpoint, template_id, manifest_digest=manifest_digest)
    run.sample_order = order
    run.predictions = {sid: SamplePrediction(sid, attempts[sid]) for sid in order}
    run.one_shot_invalid_fraction = fraction
    run.excluded_from_regeneration = excluded
    return run


def run_manifest(manifest, endpoint, template_id):
    """The manifest a persisted run references: the build manifest with the
    endpoint identity, the template and the current template digest filled in.
    """
    return replace(manifest, endpoints=[run_identity(endpoint)], template=template_id.name,
                   template_digest=template_digest(), parent_digest=manifest.digest)


def run_manifest_path(runs_dir, endpoint_name, template_id):
    stem = run_filename(endpoint_name, template_id)[:-len(".jsonl")]
    return os.path.join(runs_dir, MANIFEST_DIR, stem + ".json")


def _matches(path, endpoint, template_id, order, manifest_digest):
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = json.loads(f.readline())
    except (OSError, ValueError):
        return False
    return (header.get("endpoint") == run_identity(endpoint)
            and header.get("template") == template_id.name
            and header.get("samples_digest") == samples_digest(order)
            and header.get("manifest_digest") == manifest_digest)


def run_experiment(endpoints, test_set, template_id, runs_dir=None, manifest=None):
    """Run every endpoint and persist each run as soon as it completes.

    With `manifest` (the build ExperimentManifest), every run references its
    own run manifest (see run_manifest) by digest; with `runs_dir` too, that
    manifest is written append-only under `runs_dir/manifests/`, a changed
    one going to a new version file.

    With `runs_dir`, an endpoint whose run file already exists for the same
    endpoint identity, template, test set and manifest is loaded instead of
    re-run, so an interrupted experiment resumes where it stopped.

    Returns:
        list of CheckpointRun, one per endpoint, in endpoint order.
    """
    names = [e.name for e in endpoints]
    if len(set(names)) != len(names):
        raise ValueError("Endpoint names must be unique: {}".format(names))
    order = [r.id for r in test_set]
    runs = []
    for i, endpoint in enumerate(endpoints):
        digest = None
        if manifest is not None:
            endpoint_manifest = run_manifest(manifest, endpoint, template_id)
            digest = endpoint_manifest.digest
            if runs_dir is not None:
                write_manifest(endpoint_manifest,
                               run_manifest_path(runs_dir, endpoint.name, template_id),
                               new_version=True)
        path = None
        if runs_dir is not None:
            path = os.path.join(runs_dir, run_filename(endpoint.name, template_id))
            if os.path.exists(path) and _matches(path, endpoint, template_id, order, digest):
                logger.info("endpoint %d of %d (%s): resumed from %s",
                            i + 1, len(endpoints), endpoint.name, path)
                runs.append(load_run(path, endpoint))
                continue
        logger.info("endpoint %d of %d (%s)", i + 1, len(endpoints), endpoint.name)
        run = run_checkpoint(endpoint, test_set, template_id, digest)
        if path is not None:
            write_text_atomic(path, run.to_jsonl())
        runs.append(run)
    return runs
