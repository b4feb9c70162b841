"""QuickDraw simplified-drawing interchange: parsing and serialization.

One drawing per line of newline-delimited JSON.  Each record carries the
category word and a stroke list where every stroke is a pair of x- and
y-arrays on the 0-255 canvas:

    {"word": "cat", "drawing": [[[x0, x1, ...], [y0, y1, ...]], ...]}
"""

from __future__ import annotations

import json
from collections.abc import Iterator, Mapping
from pathlib import Path

from sketchembed.sketch import Sketch, SketchError


class ParseError(SketchError):
    """Raised for malformed interchange records."""


def parse_quickdraw(record, class_ids: Mapping[str, int] | None = None) -> Sketch:
    """Parse one interchange record (dict or bare stroke list) into a Sketch.

    ``class_ids`` maps category words to label ids; without it the label is
    left unset.
    """
    if isinstance(record, Mapping):
        word = record.get("word")
        drawing = record.get("drawing")
        source_id = record.get("key_id")
    else:
        word, drawing, source_id = None, record, None
    if not isinstance(drawing, (list, tuple)) or len(drawing) == 0:
        raise ParseError("record has no strokes")
    strokes = []
    for i, stroke in enumerate(drawing):
        if not isinstance(stroke, (list, tuple)) or len(stroke) != 2:
            raise ParseError(f"stroke {i} is not an [x[], y[]] pair")
        xs, ys = stroke
        if len(xs) != len(ys):
            raise ParseError(f"stroke {i} has mismatched x/y lengths ({len(xs)} vs {len(ys)})")
        if len(xs) == 0:
            raise ParseError(f"stroke {i} is empty")
        try:
            strokes.append([[float(x), float(y)] for x, y in zip(xs, ys)])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"stroke {i} has non-numeric coordinates") from exc
    label = None
    if word is not None and class_ids is not None:
        if word not in class_ids:
            raise ParseError(f"unknown category word {word!r}")
        label = class_ids[word]
    return Sketch(tuple(strokes), label=label, source_id=str(source_id) if source_id is not None else None)


def canonical_json(obj) -> str:
    """Stable byte form shared by the CLI and the service.

    Sorted keys, no whitespace, no NaN/Infinity; two producers of the
    same value emit identical bytes.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sketch_to_record(sketch: Sketch, class_names: list[str] | None = None) -> dict:
    """Serialize a sketch back to the interchange record form."""
    record = {"drawing": drawing_payload(sketch)}
    if sketch.label is not None and class_names is not None:
        record["word"] = class_names[sketch.label]
    if sketch.source_id is not None:
        record["key_id"] = sketch.source_id
    return record


def drawing_payload(sketch: Sketch) -> list[list[list[float]]]:
    """The bare stroke-list form used both on disk and over the wire."""
    return [[[float(x) for x in s[:, 0]], [float(y) for y in s[:, 1]]] for s in sketch.strokes]


def read_ndjson(path: str | Path, class_ids: Mapping[str, int] | None = None) -> Iterator[Sketch]:
    """Yield sketches from a newline-delimited interchange file."""
    with open(path, encoding="utf-8") as fp:
        for line_no, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {line_no}: invalid JSON") from exc
            try:
                yield parse_quickdraw(record, class_ids)
            except ParseError as exc:
                raise ParseError(f"line {line_no}: {exc}") from exc


def write_ndjson(path: str | Path, sketches, class_names: list[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for sketch in sketches:
            fp.write(json.dumps(sketch_to_record(sketch, class_names)) + "\n")


def scan_words(path: str | Path) -> list[str]:
    """Collect the sorted set of category words present in an ndjson file."""
    words = set()
    with open(path, encoding="utf-8") as fp:
        for line in fp:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if isinstance(record, dict) and "word" in record:
                words.add(record["word"])
    return sorted(words)
