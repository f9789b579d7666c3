"""
The five prompt templates and their renderers.

Template bodies live in `templates/type{1..5}.txt`. `{text}` marks where the
tweet goes and `{REPOSE}` where the supervised response goes; everything from
`{REPOSE}` on is cut off when rendering an inference prompt.
"""

import enum
import json
import os
from dataclasses import dataclass
from functools import lru_cache

from ..common.manifest import sha256_bytes

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.realpath(__file__)), "templates")

TEXT_SLOT = "{text}"
RESPONSE_SLOT = "{REPOSE}"

KEY_EVENT = "event type"
KEY_USEFUL = "useful"
KEY_AID = "humanitarian aid type"


class TemplateId(enum.Enum):
    T1_EVENT = 1
    T2_USEFUL = 2
    T3_AID = 3
    T4_MULTI = 4
    T5_MULTI_INST = 5

    @property
    def filename(self):
        return "type{}.txt".format(self.value)

    @property
    def encoded_fields(self):
        """Label fields ("event", "useful", "aid") this template's target encodes."""
        return _ENCODED_FIELDS[self]

    @classmethod
    def parse(cls, name):
        """Accept "T4_MULTI", "t4_multi", "4" or "type4"."""
        key = str(name).strip()
        if key.lower().startswith("type"):
            key = key[4:]
        if key.isdigit():
            return cls(int(key))
        try:
            return cls[key.upper()]
        except KeyError:
            raise ValueError("Unknown template id: {!r}".format(name))


_ENCODED_FIELDS = {
    TemplateId.T1_EVENT: ("event",),
    TemplateId.T2_USEFUL: ("useful",),
    TemplateId.T3_AID: ("aid",),
    TemplateId.T4_MULTI: ("event", "useful", "aid"),
    TemplateId.T5_MULTI_INST: ("event", "useful", "aid"),
}

TRAINING_TEMPLATES = (TemplateId.T1_EVENT, TemplateId.T2_USEFUL,
                      TemplateId.T3_AID, TemplateId.T4_MULTI)


@dataclass(frozen=True)
class RenderedPrompt:
    template: TemplateId
    text_slot: str
    body: str


def _read_template_bytes(template_id):
    path = os.path.join(TEMPLATE_DIR, template_id.filename)
    with open(path, "rb") as f:
        return f.read()


@lru_cache(maxsize=None)
def template_body(template_id):
    """Full template text, including the response slot and `</s>`.

    A single trailing newline from the file is not part of the template.
    """
    body = _read_template_bytes(template_id).decode("utf-8")
    if body.endswith("\n"):
        body = body[:-1]
    if body.count(TEXT_SLOT) != 1 or body.count(RESPONSE_SLOT) != 1:
        raise ValueError("Template {} must contain {} and {} exactly once."
                         .format(template_id.filename, TEXT_SLOT, RESPONSE_SLOT))
    if body.index(TEXT_SLOT) > body.index(RESPONSE_SLOT):
        raise ValueError("Template {}: text slot must precede the response slot."
                         .format(template_id.filename))
    return body


def _split(template_id):
    body = template_body(template_id)
    cut = body.index(RESPONSE_SLOT)
    return body[:cut], body[cut + len(RESPONSE_SLOT):]


def _fill_text(prefix, tweet_text):
    head, tail = prefix.split(TEXT_SLOT)
    return head + tweet_text + tail


def render_prompt(template_id, tweet_text):
    """Render an inference prompt.

    The body stops where the model's response begins: right after the
    `### Response:` line for types 1-4, after `[/INST]` for type 5.

    Args:
        template_id: TemplateId.
        tweet_text: non-empty tweet text, inserted verbatim.

    Returns:
        RenderedPrompt.

    Raises:
        ValueError: empty tweet text.
    """
    if not tweet_text:
        raise ValueError("Tweet text must be non-empty.")
    prefix, _ = _split(template_id)
    return RenderedPrompt(template_id, tweet_text, _fill_text(prefix, tweet_text))


def detect_template(prompt_body):
    """The TemplateId whose rendered prompts have the shape of `prompt_body`,
    or None. When several fit, the one with the longest fixed text wins.
    """
    best, best_length = None, -1
    for template_id in TemplateId:
        head, tail = _split(template_id)[0].split(TEXT_SLOT)
        fixed = len(head) + len(tail)
        if (len(prompt_body) > fixed and prompt_body.startswith(head)
                and prompt_body.endswith(tail) and fixed > best_length):
            best, best_length = template_id, fixed
    return best


def render_target(template_id, truth):
    """Render the expected response for a LabelTriple.

    Keys are emitted in the order event type, useful, humanitarian aid type,
    restricted to the fields the template encodes; `useful` is a JSON boolean.
    """
    fields = template_id.encoded_fields
    obj = {}
    if "event" in fields:
        obj[KEY_EVENT] = truth.event
    if "useful" in fields:
        obj[KEY_USEFUL] = truth.useful
    if "aid" in fields:
        obj[KEY_AID] = truth.aid
    return json.dumps(obj, ensure_ascii=False)


def render_training_text(template_id, tweet_text, truth):
    """Prompt + target + end-of-sequence marker, as one fine-tuning text."""
    prefix, suffix = _split(template_id)
    return _fill_text(prefix, tweet_text) + render_target(template_id, truth) + suffix


def template_digest():
    """sha256 over the five template files in id order."""
    return sha256_bytes(b"".join(_read_template_bytes(t) for t in TemplateId))
