"""
Instruction dataset construction: every labeled tweet becomes four
(instruction, output) instances, one per single-task template plus the
multi-label template.
"""

import json
from dataclasses import dataclass

import numpy as np

from .templates import (TRAINING_TEMPLATES, TemplateId, render_prompt,
                        render_target, render_training_text)


@dataclass(frozen=True)
class InstructionInstance:
    record_id: str
    template: TemplateId
    instruction: str
    output: str

    def __post_init__(self):
        if self.template not in TRAINING_TEMPLATES:
            raise ValueError("Template {} is inference-only.".format(self.template.name))

    def to_dict(self):
        return {
            "record_id": self.record_id,
            "template": self.template.name,
            "instruction": self.instruction,
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(str(d["record_id"]), TemplateId[d["template"]],
                   d["instruction"], d["output"])


def build_instances(records):
    """
    Args:
    - records: list of validated TweetRecord.

    Returns:
    - list of InstructionInstance of length 4 * len(records), grouped by
      record in input order, templates T1..T4 within each group.
    """
    instances = []
    for record in records:
        for template_id in TRAINING_TEMPLATES:
            instances.append(InstructionInstance(
                record.id,
                template_id,
                render_prompt(template_id, record.text).body,
                render_target(template_id, record.truth)))
    return instances


def split_dataset(records, train_fraction, seed):
    """
    Deterministic seeded train/test partition.

    The train split takes round(train_fraction * n) records, clamped so both
    sides are non-empty; both splits keep the input order of the records
    they contain.

    Raises:
    - ValueError: train_fraction outside (0, 1) or fewer than 2 records.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1), got {}".format(train_fraction))
    n = len(records)
    if n < 2:
        raise ValueError("Need at least 2 records to split, got {}".format(n))
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    permutation = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(permutation[:n_train])
    test_idx = np.sort(permutation[n_train:])
    return ([records[i] for i in train_idx], [records[i] for i in test_idx])


def export_instances(instances, sink, with_text=None):
    """
    Write instances as JSON lines with keys record_id, template, instruction,
    output. If `with_text` maps record_id -> TweetRecord, each line also gets
    a `text` key holding the full training text.

    Returns:
    - number of lines written.
    """
    count = 0
    for instance in instances:
        obj = instance.to_dict()
        if with_text is not None:
            record = with_text[instance.record_id]
            obj["text"] = render_training_text(instance.template, record.text,
                                               record.truth)
        sink.write(json.dumps(obj, ensure_ascii=False) + "\n")
        count += 1
    return count


def import_instances(source):
    instances = []
    for line_number, line in enumerate(source, 1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        try:
            instances.append(InstructionInstance.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError) as e:
            raise ValueError("line {}: bad instance ({})".format(line_number, e))
    return instances
