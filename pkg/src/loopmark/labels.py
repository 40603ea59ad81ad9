"""YOLO-style label text formats: label files, prediction files, classes.txt.

A label file holds one object per line, class id first, coordinates
normalized to the image:

    <class_id> <cx> <cy> <w> <h>               ground truth
    <class_id> <cx> <cy> <w> <h> <confidence>  detector output

Serialization renders every real with exactly six decimal places, so output
is canonical: the same boxes always produce identical bytes, and a zero-byte
file is a valid "no objects" label. The class map (``classes.txt``) has one
class name per line; the zero-based line index is the class id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

# Slack allowed when checking that a box extent stays inside the unit square.
EDGE_EPS = 1e-6


class LabelFormatError(ValueError):
    """Malformed label data; names the offending line and field when known."""

    def __init__(self, message: str, line_no: int | None = None, field: str | None = None):
        prefix = ""
        if line_no is not None:
            prefix += f"line {line_no}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)
        self.line_no = line_no
        self.field = field


@dataclass(frozen=True)
class BoundingBox:
    """One labeled object: class id plus normalized center/size geometry."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True)
class Prediction:
    """A detected box plus its confidence score in [0, 1]."""

    box: BoundingBox
    confidence: float


@dataclass(frozen=True)
class LabelMap:
    """Ordered class-name table; a name's position is its class id."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.names:
            raise LabelFormatError("empty label map")
        seen = set()
        for i, name in enumerate(self.names):
            if not name:
                raise LabelFormatError(f"empty class name at id {i}")
            if "\n" in name or "\r" in name:
                raise LabelFormatError(f"class name at id {i} contains a line break")
            if name in seen:
                raise LabelFormatError(f"duplicate class name {name!r}")
            seen.add(name)

    def __len__(self) -> int:
        return len(self.names)

    def name_of(self, class_id: int) -> str:
        return self.names[class_id]


@dataclass(frozen=True)
class LabelFile:
    """All labels for one image: ground-truth boxes or predictions."""

    image_id: str
    boxes: tuple[BoundingBox, ...] | tuple[Prediction, ...]


def check_box(box: BoundingBox, line_no: int | None = None) -> BoundingBox:
    """Validate field ranges and that the box extent fits the unit square."""
    if not isinstance(box.class_id, int) or box.class_id < 0:
        raise LabelFormatError(f"class id must be a non-negative integer, got {box.class_id!r}",
                               line_no, "class_id")
    for field_name, value, lo_ok in (("cx", box.cx, True), ("cy", box.cy, True),
                                     ("w", box.w, False), ("h", box.h, False)):
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise LabelFormatError(f"non-finite value {value!r}", line_no, field_name)
        if lo_ok:
            if not (0.0 <= value <= 1.0):
                raise LabelFormatError(f"value {value!r} outside [0, 1]", line_no, field_name)
        else:
            if not (0.0 < value <= 1.0):
                raise LabelFormatError(f"value {value!r} outside (0, 1]", line_no, field_name)
    if box.cx - box.w / 2 < -EDGE_EPS or box.cx + box.w / 2 > 1 + EDGE_EPS:
        raise LabelFormatError("box extends past the image edge in x", line_no, "w")
    if box.cy - box.h / 2 < -EDGE_EPS or box.cy + box.h / 2 > 1 + EDGE_EPS:
        raise LabelFormatError("box extends past the image edge in y", line_no, "h")
    return box


def check_prediction(pred: Prediction, line_no: int | None = None) -> Prediction:
    check_box(pred.box, line_no)
    conf = pred.confidence
    if not isinstance(conf, (int, float)) or not (0.0 <= conf <= 1.0):
        raise LabelFormatError(f"confidence {conf!r} outside [0, 1]", line_no, "confidence")
    return pred


def check_class_ids(boxes: Sequence[BoundingBox | Prediction], label_map: LabelMap) -> None:
    """Reject boxes whose class id falls outside the label map."""
    for b in boxes:
        box = b.box if isinstance(b, Prediction) else b
        if box.class_id >= len(label_map):
            raise LabelFormatError(
                f"class id {box.class_id} not in label map of {len(label_map)} classes")


def parse_label_line(line: str, expect_confidence: bool = False,
                     line_no: int | None = None) -> BoundingBox | Prediction:
    """Parse one whitespace-separated label line.

    Five fields give a BoundingBox; with ``expect_confidence`` a sixth
    trailing field is required and a Prediction is returned.
    """
    fields = line.split()
    want = 6 if expect_confidence else 5
    if len(fields) != want:
        raise LabelFormatError(f"expected {want} fields, got {len(fields)}", line_no)

    try:
        class_id = int(fields[0])
    except ValueError:
        raise LabelFormatError(f"non-numeric value {fields[0]!r}", line_no, "class_id") from None

    names = ("cx", "cy", "w", "h", "confidence")
    values = []
    for name, raw in zip(names, fields[1:]):
        try:
            values.append(float(raw))
        except ValueError:
            raise LabelFormatError(f"non-numeric value {raw!r}", line_no, name) from None

    box = BoundingBox(class_id, values[0], values[1], values[2], values[3])
    check_box(box, line_no)
    if not expect_confidence:
        return box
    return check_prediction(Prediction(box, values[4]), line_no)


def parse_label_text(text: str, expect_confidence: bool = False) -> list[BoundingBox] | list[Prediction]:
    """Parse a whole label file; every line must parse or the call fails.

    A missing final newline is tolerated; blank interior lines are not.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    out = []
    for i, raw in enumerate(lines, start=1):
        stripped = raw.rstrip("\r")
        if not stripped.strip():
            raise LabelFormatError("blank line", i)
        out.append(parse_label_line(stripped, expect_confidence, line_no=i))
    return out


def format_label_line(item: BoundingBox | Prediction) -> str:
    if isinstance(item, Prediction):
        b = check_box(item.box)
        check_prediction(item)
        return (f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f} "
                f"{item.confidence:.6f}")
    b = check_box(item)
    return f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}"


def serialize_label_file(boxes: Sequence[BoundingBox | Prediction]) -> str:
    """Render boxes one per line with 6-decimal reals; empty list -> empty text."""
    if not boxes:
        return ""
    return "\n".join(format_label_line(b) for b in boxes) + "\n"


def parse_label_map(text: str) -> LabelMap:
    """Parse classes.txt content: one class name per line, position = id."""
    if text == "":
        raise LabelFormatError("empty label map")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    names = []
    for i, raw in enumerate(lines, start=1):
        name = raw.rstrip("\r")
        if not name.strip():
            raise LabelFormatError("blank class name", i)
        names.append(name)
    return LabelMap(tuple(names))


def serialize_label_map(label_map: LabelMap) -> str:
    return "\n".join(label_map.names) + "\n"


def load_label_file(path: Path | str, expect_confidence: bool = False):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise LabelFormatError(f"cannot read label file {path}: {exc}") from exc
    try:
        return parse_label_text(text, expect_confidence)
    except LabelFormatError as exc:
        err = LabelFormatError(f"{path}: {exc}")
        err.line_no, err.field = exc.line_no, exc.field
        raise err from None


def save_label_file(path: Path | str, boxes: Sequence[BoundingBox | Prediction]) -> None:
    Path(path).write_text(serialize_label_file(boxes), encoding="utf-8")


def load_label_map(path: Path | str) -> LabelMap:
    return parse_label_map(Path(path).read_text(encoding="utf-8"))


def save_label_map(path: Path | str, label_map: LabelMap) -> None:
    Path(path).write_text(serialize_label_map(label_map), encoding="utf-8")
