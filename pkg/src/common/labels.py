"""
Closed label vocabularies for disaster tweets and the record types built on
them.

Canonical label form is uppercase words separated by single spaces, exactly as
the prompt templates spell the categories.
"""

import re
from dataclasses import dataclass
from typing import Optional

EVENT_TYPES = (
    "HURRICANE",
    "FLOOD",
    "EARTHQUAKE",
    "DISASTER EVENTS",
    "EXPLOSION",
    "BOMBING",
    "FIRE",
    "LANDSLIDE",
    "CRASH",
    "DISEASE",
    "SHOOTING",
    "COLLAPSE",
    "HAZARD",
    "VOLCANO",
)

AID_TYPES = (
    "NOT HUMANITARIAN",
    "OTHER RELEVANT INFORMATION",
    "DONATION AND VOLUNTEERING",
    "REQUESTS OR NEEDS",
    "SYMPATHY AND SUPPORT",
    "INFRASTRUCTURE AND UTILITY DAMAGE",
    "AFFECTED INDIVIDUAL",
    "CAUTION AND ADVICE",
    "INJURED OR DEAD PEOPLE",
    "DISEASE RELATED",
    "RESPONSE EFFORTS",
    "PERSONAL UPDATE",
    "MISSING AND FOUND PEOPLE",
    "DISPLACED AND EVACUATION",
    "PHYSICAL LANDSLIDE",
    "TERRORISM RELATED",
)

_EVENT_SET = frozenset(EVENT_TYPES)
_AID_SET = frozenset(AID_TYPES)

assert len(_EVENT_SET) == 14 and len(_AID_SET) == 16
assert not (_EVENT_SET & _AID_SET)

# Characters peeled off both ends of a raw label. Repeated until stable so the
# result is idempotent.
_STRIP_CHARS = " \t\r\n\"'`[](){},.;*"
_WHITESPACE = re.compile(r"\s+")

_TRUE_WORDS = frozenset(["true", "yes"])
_FALSE_WORDS = frozenset(["false", "no"])


def normalize_label(raw):
    """Map a raw label string to canonical form.

    Uppercases, turns underscores into spaces, strips surrounding quotes,
    brackets, commas and periods, and collapses whitespace runs. Total and
    idempotent.

    Args:
        raw: any string.

    Returns:
        The canonical string (possibly empty).
    """
    text = str(raw).upper().replace("_", " ")
    text = _WHITESPACE.sub(" ", text)
    previous = None
    while previous != text:
        previous = text
        text = text.strip(_STRIP_CHARS)
    return _WHITESPACE.sub(" ", text)


def parse_useful(raw):
    """Parse the binary usefulness label.

    Returns:
        True for "true"/"yes", False for "false"/"no" (case-insensitive,
        surrounding punctuation ignored), None for anything else.
    """
    if isinstance(raw, bool):
        return raw
    word = normalize_label(raw).lower()
    if word in _TRUE_WORDS:
        return True
    if word in _FALSE_WORDS:
        return False
    return None


def is_event_type(label):
    return label in _EVENT_SET


def is_aid_type(label):
    return label in _AID_SET


@dataclass(frozen=True)
class LabelTriple:
    """Complete ground-truth labels of one tweet."""
    event: str
    useful: bool
    aid: str

    def __post_init__(self):
        if self.event not in _EVENT_SET:
            raise ValueError("Unknown event type: {!r}".format(self.event))
        if self.aid not in _AID_SET:
            raise ValueError("Unknown humanitarian aid type: {!r}".format(self.aid))
        if not isinstance(self.useful, bool):
            raise ValueError("useful must be a bool, got {!r}".format(self.useful))

    def as_partial(self):
        return PartialLabelTriple(self.event, self.useful, self.aid)


@dataclass(frozen=True)
class PartialLabelTriple:
    """Predicted labels; any field may be None.

    Present strings are canonical but need not be in-vocabulary.
    """
    event: Optional[str] = None
    useful: Optional[bool] = None
    aid: Optional[str] = None

    @property
    def complete(self):
        return (self.event is not None and self.useful is not None
                and self.aid is not None)

    def to_dict(self):
        return {"event": self.event, "useful": self.useful, "aid": self.aid}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("event"), d.get("useful"), d.get("aid"))


@dataclass(frozen=True)
class TweetRecord:
    id: str
    text: str
    truth: LabelTriple

    def __post_init__(self):
        if not self.text:
            raise ValueError("Tweet text must be non-empty (record {!r}).".format(self.id))
