from __future__ import annotations

import random

import pytest

from loopmark.labels import (
    BoundingBox,
    LabelFormatError,
    LabelMap,
    Prediction,
    check_box,
    check_class_ids,
    parse_label_line,
    parse_label_map,
    parse_label_text,
    serialize_label_file,
    serialize_label_map,
)

from conftest import random_box, random_prediction


class TestParseLabelLine:
    def test_ground_truth_line(self):
        box = parse_label_line("0 0.500000 0.500000 0.250000 0.100000")
        assert box == BoundingBox(0, 0.5, 0.5, 0.25, 0.1)

    def test_prediction_line(self):
        pred = parse_label_line("1 0.5 0.5 0.25 0.1 0.870000", expect_confidence=True)
        assert isinstance(pred, Prediction)
        assert pred.box.class_id == 1
        assert pred.confidence == 0.87

    def test_wrong_field_count(self):
        with pytest.raises(LabelFormatError, match="expected 5 fields"):
            parse_label_line("0 0.5 0.5")

    def test_prediction_requires_sixth_field(self):
        with pytest.raises(LabelFormatError, match="expected 6 fields"):
            parse_label_line("0 0.5 0.5 0.25 0.1", expect_confidence=True)

    def test_non_numeric_field_names_field_and_line(self):
        with pytest.raises(LabelFormatError, match="line 3.*'cy'"):
            parse_label_line("0 0.5 oops 0.25 0.1", line_no=3)

    def test_fractional_class_id_rejected(self):
        with pytest.raises(LabelFormatError, match="class_id"):
            parse_label_line("1.5 0.5 0.5 0.25 0.1")

    def test_out_of_range_value(self):
        with pytest.raises(LabelFormatError, match="'cx'"):
            parse_label_line("0 1.5 0.5 0.25 0.1")

    def test_confidence_out_of_range(self):
        with pytest.raises(LabelFormatError, match="confidence"):
            parse_label_line("0 0.5 0.5 0.25 0.1 1.25", expect_confidence=True)

    def test_extent_past_edge_rejected(self):
        with pytest.raises(LabelFormatError, match="edge"):
            parse_label_line("0 0.9 0.5 0.4 0.1")


class TestSerialize:
    def test_single_box(self):
        text = serialize_label_file([BoundingBox(0, 0.5, 0.5, 0.25, 0.1)])
        assert text == "0 0.500000 0.500000 0.250000 0.100000\n"

    def test_empty_list_is_zero_bytes(self):
        assert serialize_label_file([]) == ""

    def test_prediction_appends_confidence(self):
        text = serialize_label_file([Prediction(BoundingBox(1, 0.5, 0.5, 0.25, 0.1), 0.87)])
        assert text == "1 0.500000 0.500000 0.250000 0.100000 0.870000\n"

    def test_invalid_box_propagates(self):
        with pytest.raises(LabelFormatError):
            serialize_label_file([BoundingBox(0, 0.5, 0.5, 0.0, 0.1)])

    def test_round_trip_identity_on_grid_boxes(self):
        rng = random.Random(20240601)
        boxes = [random_box(rng) for _ in range(1000)]
        text = serialize_label_file(boxes)
        assert parse_label_text(text) == boxes

    def test_serialize_idempotent_for_arbitrary_boxes(self):
        rng = random.Random(99)
        boxes = [random_box(rng, grid=False) for _ in range(200)]
        once = serialize_label_file(boxes)
        again = serialize_label_file(parse_label_text(once))
        assert once == again

    def test_prediction_round_trip(self):
        rng = random.Random(7)
        preds = [random_prediction(rng) for _ in range(200)]
        assert parse_label_text(serialize_label_file(preds), expect_confidence=True) == preds


class TestParseText:
    def test_missing_final_newline_tolerated(self):
        assert len(parse_label_text("0 0.5 0.5 0.2 0.2")) == 1

    def test_line_count_matches_box_count(self):
        text = "0 0.5 0.5 0.2 0.2\n1 0.3 0.3 0.1 0.1\n"
        assert len(parse_label_text(text)) == 2

    def test_blank_interior_line_is_an_error(self):
        with pytest.raises(LabelFormatError, match="line 2"):
            parse_label_text("0 0.5 0.5 0.2 0.2\n\n1 0.3 0.3 0.1 0.1\n")

    def test_empty_text_means_no_objects(self):
        assert parse_label_text("") == []


class TestLabelMap:
    def test_parse_two_classes(self):
        label_map = parse_label_map("ballast\nplant\n")
        assert label_map.names == ("ballast", "plant")
        assert label_map.name_of(0) == "ballast"
        assert len(label_map) == 2

    def test_empty_map_rejected(self):
        with pytest.raises(LabelFormatError, match="empty label map"):
            parse_label_map("")

    def test_duplicate_name_rejected(self):
        with pytest.raises(LabelFormatError, match="duplicate"):
            parse_label_map("a\na\n")

    def test_interior_blank_line_rejected(self):
        with pytest.raises(LabelFormatError, match="line 2"):
            parse_label_map("a\n\nb\n")

    def test_round_trip(self):
        text = "ballast\nplant\n"
        assert serialize_label_map(parse_label_map(text)) == text

    def test_class_id_bounds_check(self):
        label_map = LabelMap(("a", "b"))
        check_class_ids([BoundingBox(1, 0.5, 0.5, 0.2, 0.2)], label_map)
        with pytest.raises(LabelFormatError, match="class id 2"):
            check_class_ids([BoundingBox(2, 0.5, 0.5, 0.2, 0.2)], label_map)


def test_check_box_accepts_edge_touching():
    check_box(BoundingBox(0, 0.1, 0.5, 0.2, 0.2))  # extent exactly [0, 0.2]
