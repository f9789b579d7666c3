import json
from collections import Counter

from .errors import DatasetError
from .labels import (LabelTriple, TweetRecord, is_aid_type, is_event_type,
                     normalize_label, parse_useful)


def _decode(line, line_number):
    if not isinstance(line, bytes):
        return line
    try:
        return line.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DatasetError("invalid UTF-8 at byte {}".format(e.start), line_number) from e


def load_records(source):
    """
    Load labeled tweets from a JSON-lines stream.

    Each line is an object with keys `text`, `event_type`, `informative`,
    `humanitarian_type` and optionally `id` (the 0-based line index is used
    when absent). Labels are accepted in any casing/underscore variant and
    normalized; ground truth must be in-vocabulary. Blank lines are skipped.

    Args:
    - source: binary or text stream.

    Returns:
    - list of TweetRecord in input order.

    Raises:
    - DatasetError: malformed line or invalid UTF-8, missing key, or out-of-vocabulary label.
    """
    records = []
    seen_ids = set()
    for index, line in enumerate(source):
        line_number = index + 1
        line = _decode(line, line_number)
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DatasetError("malformed JSON ({})".format(e.msg), line_number)
        if not isinstance(obj, dict):
            raise DatasetError("expected a JSON object", line_number)
        try:
            text = obj["text"]
            raw_event = obj["event_type"]
            raw_informative = obj["informative"]
            raw_aid = obj["humanitarian_type"]
        except KeyError as e:
            raise DatasetError("missing key {}".format(e), line_number)

        event = normalize_label(raw_event)
        if not is_event_type(event):
            raise DatasetError(
                "event_type {!r} is not one of the 14 event types".format(raw_event),
                line_number, value=raw_event)
        aid = normalize_label(raw_aid)
        if not is_aid_type(aid):
            raise DatasetError(
                "humanitarian_type {!r} is not one of the 16 aid types".format(raw_aid),
                line_number, value=raw_aid)
        useful = parse_useful(raw_informative)
        if useful is None:
            raise DatasetError(
                "informative {!r} is not a boolean".format(raw_informative),
                line_number, value=raw_informative)
        if not isinstance(text, str) or not text:
            raise DatasetError("text must be a non-empty string", line_number)

        record_id = str(obj["id"]) if "id" in obj else str(index)
        if record_id in seen_ids:
            raise DatasetError("duplicate id {!r}".format(record_id), line_number,
                               value=record_id)
        seen_ids.add(record_id)
        records.append(TweetRecord(record_id, text, LabelTriple(event, useful, aid)))
    return records


def save_records(records, sink):
    """
    Write records in the format load_records reads. Returns the count written.
    """
    count = 0
    for record in records:
        line = json.dumps({
            "id": record.id,
            "text": record.text,
            "event_type": record.truth.event,
            "informative": record.truth.useful,
            "humanitarian_type": record.truth.aid,
        }, ensure_ascii=False)
        sink.write(line + "\n")
        count += 1
    return count


def load_records_file(path):
    try:
        with open(path, "rb") as f:
            return load_records(f)
    except OSError as e:
        raise OSError("cannot read corpus {}: {}".format(path, e.strerror)) from e


def save_records_file(records, path):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            return save_records(records, f)
    except OSError as e:
        raise OSError("cannot write {}: {}".format(path, e.strerror)) from e


def label_distribution(records):
    """
    Count each label value per field.

    Returns:
    - dict with keys "event", "useful", "aid", each a dict label -> count,
      ordered by count descending, then label.
    """
    events = Counter(r.truth.event for r in records)
    useful = Counter("TRUE" if r.truth.useful else "FALSE" for r in records)
    aids = Counter(r.truth.aid for r in records)
    return {
        "event": dict(sorted(events.items(), key=lambda kv: (-kv[1], kv[0]))),
        "useful": dict(sorted(useful.items(), key=lambda kv: (-kv[1], kv[0]))),
        "aid": dict(sorted(aids.items(), key=lambda kv: (-kv[1], kv[0]))),
    }
