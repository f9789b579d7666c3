"""Builders for synthetic checkpoint runs used by the evaluation tests."""

from ..common.labels import PartialLabelTriple
from ..instruct_dataset.templates import TemplateId
from ..llm_inference.client import EndpointConfig
from ..llm_inference.orchestrate import CheckpointRun, GenerationAttempt, SamplePrediction
from ..llm_inference.parse import ParsedResponse


def make_run(name, labels, template_id=TemplateId.T4_MULTI, one_shot=None, **endpoint_fields):
    """A CheckpointRun whose final parses are `labels`.

    Args:
    - name: endpoint name.
    - labels: dict sample_id -> PartialLabelTriple (or LabelTriple), in
      sample order.
    - one_shot: optional dict sample_id -> PartialLabelTriple for a first
      attempt that differs from the final one.
    """
    run = CheckpointRun(EndpointConfig(name, "http://127.0.0.1:9", **endpoint_fields),
                        template_id)
    for sid, label in labels.items():
        if not isinstance(label, PartialLabelTriple):
            label = label.as_partial()
        attempts = []
        if one_shot is not None and one_shot.get(sid, label) != label:
            attempts.append(GenerationAttempt(sid, 1, "",
                                              ParsedResponse("", one_shot[sid])))
        attempts.append(GenerationAttempt(sid, len(attempts) + 1, "",
                                          ParsedResponse("", label)))
        run.predictions[sid] = SamplePrediction(sid, tuple(attempts))
        run.sample_order.append(sid)
    return run


def make_run_with_accuracy(name, truths, n_correct, **kwargs):
    """A run that gets the first `n_correct` samples of `truths` right and
    predicts nothing for the rest."""
    labels = {}
    for i, (sid, truth) in enumerate(truths.items()):
        labels[sid] = truth.as_partial() if i < n_correct else PartialLabelTriple()
    return make_run(name, labels, **kwargs)
