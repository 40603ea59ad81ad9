from __future__ import annotations

import random

import numpy as np
import pytest

from loopmark.labels import BoundingBox, Prediction, load_label_file, serialize_label_file
from loopmark.metrics import f1_confidence_sweep
from loopmark.simulation import (
    AnnotatorCostModel,
    MockDetectorModel,
    ScenarioInfo,
    load_scenario,
    make_scenario,
    mock_detect_boxes,
    mock_train,
    review_batch,
    sample_scene_boxes,
    simulate_review,
)

from conftest import random_box


GT = [BoundingBox(0, 0.3, 0.4, 0.2, 0.2), BoundingBox(1, 0.7, 0.6, 0.25, 0.3)]


class TestMockTrain:
    def test_reference_size_keeps_base_params(self):
        model = MockDetectorModel(sigma_center=0.02, miss_rate=0.2, reference_size=100)
        weights = mock_train(model, 100, 2)
        assert weights["effective"]["sigma_center"] == pytest.approx(0.02)
        assert weights["effective"]["miss_rate"] == pytest.approx(0.2)

    def test_quadruple_size_halves_jitter(self):
        model = MockDetectorModel(sigma_center=0.02, sigma_size=0.04, reference_size=100)
        weights = mock_train(model, 400, 2)
        assert weights["effective"]["sigma_center"] == pytest.approx(0.01)
        assert weights["effective"]["sigma_size"] == pytest.approx(0.02)

    def test_effective_errors_monotone_in_size(self):
        model = MockDetectorModel()
        previous = None
        for n in (50, 100, 200, 400, 800):
            eff = mock_train(model, n, 2)["effective"]
            if previous is not None:
                for key in eff:
                    assert eff[key] <= previous[key] + 1e-12
            previous = eff

    def test_rates_capped_at_base(self):
        model = MockDetectorModel(miss_rate=0.3, spurious_rate=0.1, reference_size=100)
        eff = mock_train(model, 25, 2)["effective"]  # s = 2
        assert eff["miss_rate"] == pytest.approx(0.3)
        assert eff["spurious_rate"] == pytest.approx(0.1)

    def test_zero_train_size_rejected(self):
        with pytest.raises(ValueError):
            mock_train(MockDetectorModel(), 0, 2)


class TestMockDetect:
    def test_zero_noise_model_echoes_ground_truth(self):
        model = MockDetectorModel(sigma_center=0, sigma_size=0, miss_rate=0,
                                  spurious_rate=0)
        weights = mock_train(model, 100, 2)
        preds = mock_detect_boxes(weights, "img", GT)
        assert [p.box for p in preds] == GT
        assert all(p.confidence == pytest.approx(0.99) for p in preds)

    def test_total_miss_rate_gives_empty_output(self):
        model = MockDetectorModel(miss_rate=0.999999, spurious_rate=0)
        weights = mock_train(model, 100, 2)
        assert mock_detect_boxes(weights, "img", GT) == []

    def test_deterministic_per_seed_and_image(self):
        weights = mock_train(MockDetectorModel(seed=5), 100, 2)
        a = serialize_label_file(mock_detect_boxes(weights, "img", GT))
        b = serialize_label_file(mock_detect_boxes(weights, "img", GT))
        assert a == b
        other = serialize_label_file(mock_detect_boxes(weights, "other", GT))
        assert other != a

    def test_predictions_are_serializable(self, rng):
        weights = mock_train(MockDetectorModel(seed=1), 150, 3)
        for k in range(20):
            truths = [random_box(rng) for _ in range(rng.randrange(0, 5))]
            serialize_label_file(mock_detect_boxes(weights, f"i{k}", truths))

    def test_larger_model_hits_superset_of_boxes(self):
        model = MockDetectorModel(seed=2)
        small = mock_train(model, 100, 2)
        large = mock_train(model, 400, 2)
        rng = np.random.Generator(np.random.PCG64(0))
        for k in range(30):
            truths = sample_scene_boxes(rng, 2)
            small_real = {p.box.class_id for p in mock_detect_boxes(small, f"img{k}", truths)}
            large_preds = mock_detect_boxes(large, f"img{k}", truths)
            # every ground truth the small model found, the large model finds
            small_count = len([p for p in mock_detect_boxes(small, f"img{k}", truths)
                               if p.confidence > 0.4])
            large_count = len([p for p in large_preds if p.confidence > 0.4])
            assert large_count >= small_count

    def test_f1_improves_with_training_size(self):
        rng = np.random.Generator(np.random.PCG64(3))
        gts = {f"v{k}": sample_scene_boxes(rng, 2) for k in range(60)}
        medians = {}
        for n in (100, 400):
            scores = []
            for seed in range(5):
                weights = mock_train(MockDetectorModel(seed=seed), n, 2)
                preds = {s: mock_detect_boxes(weights, s, g) for s, g in gts.items()}
                scores.append(f1_confidence_sweep(preds, gts).best_f1)
            medians[n] = sorted(scores)[2]
        assert medians[400] > medians[100]


class TestSimulateReview:
    def test_perfect_predictions_cost_review_only(self):
        preds = [Prediction(b, 0.9) for b in GT]
        outcome = simulate_review(preds, GT)
        assert outcome.cost == pytest.approx(len(GT) * 0.1)
        assert outcome.ops["review"] == 2
        assert outcome.corrected == GT

    def test_empty_predictions_cost_full_manual(self):
        outcome = simulate_review([], GT)
        assert outcome.cost == pytest.approx(len(GT) * 3.0)
        assert outcome.ops["draw"] == 2

    def test_worked_example_exact_hit_plus_spurious(self):
        preds = [Prediction(GT[0], 0.9),
                 Prediction(BoundingBox(0, 0.9, 0.9, 0.1, 0.1), 0.4)]
        outcome = simulate_review(preds, GT)
        assert outcome.cost == pytest.approx(0.1 + 0.5 + 3.0)
        assert outcome.ops == {"review": 1, "adjust": 0, "reclass": 0,
                               "delete": 1, "draw": 1}

    def test_wrong_class_good_geometry_is_reclass(self):
        preds = [Prediction(BoundingBox(1, 0.3, 0.4, 0.2, 0.2), 0.9)]
        outcome = simulate_review(preds, [GT[0]])
        assert outcome.ops["reclass"] == 1
        assert outcome.ops["adjust"] == 0
        assert outcome.cost == pytest.approx(0.5)

    def test_sloppy_box_wrong_class_pays_both(self):
        sloppy = BoundingBox(1, 0.33, 0.43, 0.2, 0.2)
        outcome = simulate_review([Prediction(sloppy, 0.8)], [GT[0]])
        assert outcome.ops["adjust"] == 1 and outcome.ops["reclass"] == 1
        assert outcome.cost == pytest.approx(1.5)

    def test_output_is_exactly_ground_truth(self, rng):
        for _ in range(50):
            truths = [random_box(rng) for _ in range(rng.randrange(0, 4))]
            preds = [Prediction(random_box(rng), rng.random())
                     for _ in range(rng.randrange(0, 4))]
            assert simulate_review(preds, truths).corrected == truths

    def test_cost_tiers_monotone_in_iou(self):
        gt = [BoundingBox(0, 0.5, 0.5, 0.3, 0.3)]
        costs = []
        for offset in (0.4, 0.1, 0.002):
            pred = Prediction(BoundingBox(0, 0.5 + offset, 0.5, 0.3, 0.3), 0.9)
            costs.append(simulate_review([pred], gt).cost)
        assert costs[0] > costs[1] > costs[2]

    def test_manual_cost_upper_bound(self, rng):
        costs = AnnotatorCostModel()
        for _ in range(100):
            truths = [random_box(rng) for _ in range(rng.randrange(0, 5))]
            preds = [Prediction(random_box(rng), rng.random())
                     for _ in range(rng.randrange(0, 5))]
            outcome = simulate_review(preds, truths, costs)
            manual = len(truths) * costs.cost_draw
            spurious = outcome.ops["delete"]
            assert outcome.cost <= manual + spurious * costs.cost_delete + 1e-9

    def test_cost_model_validation(self):
        with pytest.raises(ValueError):
            AnnotatorCostModel(cost_draw=0.5, cost_adjust=1.0)
        with pytest.raises(ValueError):
            AnnotatorCostModel(accept_iou=0.3)


class TestReviewBatch:
    def test_aggregates_per_image(self):
        gts = {"a": GT, "b": [GT[0]]}
        preds = {"a": [Prediction(b, 0.9) for b in GT], "b": []}
        review = review_batch(preds, gts)
        assert review.per_image_cost["a"] == pytest.approx(0.2)
        assert review.per_image_cost["b"] == pytest.approx(3.0)
        assert review.total_cost == pytest.approx(3.2)
        assert review.manual_cost == pytest.approx(9.0)
        assert review.corrected == gts


class TestScenario:
    def test_make_and_load(self, tmp_path):
        info = make_scenario(tmp_path / "scn", n_loop=6, n_val=3, seed=4)
        assert len(info.loop_stems) == 6 and len(info.val_stems) == 3
        reloaded = load_scenario(tmp_path / "scn")
        assert reloaded.loop_stems == info.loop_stems
        assert reloaded.label_map == info.label_map
        for stem in info.loop_stems + info.val_stems:
            assert info.image_path(stem).is_file()
            boxes = load_label_file(info.truth_path(stem))
            assert boxes

    def test_generation_is_deterministic(self, tmp_path):
        a = make_scenario(tmp_path / "a", n_loop=4, n_val=2, seed=9)
        b = make_scenario(tmp_path / "b", n_loop=4, n_val=2, seed=9)
        for stem in a.loop_stems:
            assert a.image_path(stem).read_bytes() == b.image_path(stem).read_bytes()
            assert a.truth_path(stem).read_text() == b.truth_path(stem).read_text()
