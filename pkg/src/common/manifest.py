"""
Content digests and the experiment manifest written next to every artifact.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

ARTIFACT_VERSION = "0.1.0"


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj):
    """Serialize with sorted keys and fixed separators so equal objects give
    equal bytes."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


@dataclass
class ExperimentManifest:
    """
    Provenance of one artifact set. A build manifest describes the corpus,
    the split and the instance file; a run manifest is a copy of it with
    `endpoints`, `template` and `parent_digest` (the build manifest digest)
    filled in.
    """
    corpus_path: str
    corpus_digest: str
    template_digest: str
    seed: int
    train_fraction: float
    record_count: int
    train_count: int
    test_count: int
    instance_count: int
    label_distribution: dict = field(default_factory=dict)
    file_digests: dict = field(default_factory=dict)
    endpoints: list = field(default_factory=list)
    template: str = None
    parent_digest: str = None
    artifact_version: str = ARTIFACT_VERSION

    def to_json(self):
        return canonical_json(asdict(self))

    @property
    def digest(self):
        return sha256_bytes(self.to_json().encode("utf-8"))

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def versioned_path(path, version):
    """manifest.json -> manifest.v2.json for version 2; version 1 is path."""
    if version == 1:
        return path
    root, ext = os.path.splitext(path)
    return "{}.v{}{}".format(root, version, ext)


def write_manifest(manifest, path, new_version=False):
    """
    Write the manifest. Manifests are append-only and never rewritten.

    If `path` already holds identical content nothing is written. If it holds
    different content a ValueError is raised, unless `new_version` is set: the
    manifest then goes to the first of path.v2, path.v3, ... that is free or
    already identical.

    Returns:
    - the path the manifest is stored at.
    """
    content = manifest.to_json()
    version = 1
    candidate = path
    while os.path.exists(candidate):
        with open(candidate, "r", encoding="utf-8") as f:
            if f.read() == content:
                return candidate
        if not new_version:
            raise ValueError(
                "manifest {} already exists with different content".format(candidate))
        version += 1
        candidate = versioned_path(path, version)
    write_text_atomic(candidate, content)
    return candidate


def read_manifest(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return ExperimentManifest.from_dict(json.load(f))
    except OSError as e:
        raise OSError("cannot read manifest {}: {}".format(path, e.strerror)) from e


def write_text_atomic(path, content):
    """Write to a sibling temp file and rename it into place."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp_path = path + ".tmp"
    try:
        with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(content)
        os.replace(tmp_path, path)
    except OSError as e:
        raise OSError("cannot write {}: {}".format(path, e.strerror)) from e
