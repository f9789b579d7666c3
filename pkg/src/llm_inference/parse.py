"""
Turn free-text model output into predicted labels.

The scan:
  1. keep only the text after the last "Response:" header (any case, any
     number of leading '#'), or the whole text if there is none;
  2. find `key:` markers in it, tolerating JSON, Python-dict and plain
     line syntax;
  3. map keys onto the three label fields by containment and read a value
     only after a key that maps; any other key is skipped up to its colon, so
     wrappers such as `{"answer": {...}}` or `Classification: ...` do not
     hide the pairs that follow them;
  4. a field with no usable key-value pair stays None.
"""

import re
from dataclasses import dataclass

from ..common.labels import PartialLabelTriple, normalize_label, parse_useful

_RESPONSE_HEADER = re.compile(r"response\s*:", re.IGNORECASE)

# key: letters, spaces, '_' and '-', optionally wrapped in quotes or markdown
# emphasis, then a colon.
_KEY = re.compile(r"(?P<key>[A-Za-z][A-Za-z _\-]*?)[\s\"'*]*:")

# value: a quoted string or a bare run up to the next comma, closing brace or
# end of line.
_VALUE = re.compile(r"[ \t]*(?P<value>\"[^\"\n]*\"|'[^'\n]*'|[^,}\n]*)")

# Label values a model uses to say it has no answer.
_ABSENT_VALUES = frozenset(["NONE", "NULL"])


@dataclass(frozen=True)
class ParsedResponse:
    raw: str
    labels: PartialLabelTriple

    @property
    def valid(self):
        return self.labels.complete

    def to_dict(self):
        return dict(self.labels.to_dict(), valid=self.valid)


@dataclass(frozen=True)
class MatchResult:
    event_correct: bool
    useful_correct: bool
    aid_correct: bool

    @property
    def overall_correct(self):
        return self.event_correct and self.useful_correct and self.aid_correct


def classify_key(key):
    """Return "event", "useful", "aid" or None for a raw key."""
    k = " ".join(key.lower().replace("_", " ").split())
    if "useful" in k:
        return "useful"
    if "event type" in k:
        return "event"
    if "human" in k and "aid" in k:
        return "aid"
    return None


def response_region(raw):
    """Text after the last response header, or all of raw."""
    last = None
    for last in _RESPONSE_HEADER.finditer(raw):
        pass
    if last is None:
        return raw
    return raw[last.end():]


def _field_value(field, value):
    if field == "useful":
        return parse_useful(value)
    label = normalize_label(value) or None
    if label in _ABSENT_VALUES:
        return None
    return label


def parse_response(raw):
    """Parse one generation. Never raises.

    Each field takes the value of its first usable occurrence: a non-empty
    label, or a recognizable boolean for useful. An occurrence whose value is
    empty, a literal None or null, or an unrecognizable boolean is skipped,
    so `event type: None` followed later by `event type: FLOOD` gives FLOOD,
    while `event type: FLOOD` followed by `event type: FIRE` keeps FLOOD.
    Out-of-vocabulary labels are kept as they are.

    Args:
        raw: generated text, possibly empty or unrelated to the task.

    Returns:
        ParsedResponse.
    """
    if raw is None:
        raw = ""
    region = response_region(raw)
    found = {}
    pos = 0
    while len(found) < 3:
        key_match = _KEY.search(region, pos)
        if key_match is None:
            break
        pos = key_match.end()
        field = classify_key(key_match.group("key"))
        if field is None:
            continue
        value_match = _VALUE.match(region, pos)
        pos = value_match.end()
        if field in found:
            continue
        parsed = _field_value(field, value_match.group("value"))
        if parsed is not None:
            found[field] = parsed
    labels = PartialLabelTriple(found.get("event"), found.get("useful"), found.get("aid"))
    return ParsedResponse(raw, labels)


def compare(pred, truth):
    """Exact per-field match against ground truth; None counts as wrong."""
    labels = pred.labels if isinstance(pred, ParsedResponse) else pred
    return MatchResult(
        labels.event is not None and labels.event == truth.event,
        labels.useful is not None and labels.useful == truth.useful,
        labels.aid is not None and labels.aid == truth.aid)
