"""Desk-scale stand-ins for the detector and the human annotator.

The mock detector perturbs hidden ground truth with seed-keyed noise whose
magnitude shrinks as the training set grows (scale factor sqrt(n0/n)), so
loop behavior is testable without real training. All radom draws for one
image come from a stream keyed by (seed, image_id) with a fixed layout, and
the spurious-box count uses an inverse-CDF Poisson sample, so a detector
trained on more data produces a strictly cleaner version of the same
detections rather than a reshuffled one.

The simulated annotator corrects predictions to the exact ground truth and
prices the edits: a quick visual check for good boxes, an adjustment for
sloppy ones, a reclassification for wrong labels, a deletion per spurious
box, and a full draw per missed object.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .geometry import iou
from .labels import (
    BoundingBox,
    LabelMap,
    Prediction,
    save_label_file,
    save_label_map,
)
from .metrics import MatchConfig, match_detections

MOCK_WEIGHTS_KIND = "loopmark-mock-detector"

# Confidence sits at 1 - perturbation/scale, clamped into [0.05, 0.99].
CONF_MIN, CONF_MAX = 0.05, 0.99
SPURIOUS_CONF_RANGE = (0.05, 0.35)


@dataclass(frozen=True)
class MockDetectorModel:
    """Error model of the mock detector at the reference training size."""

    sigma_center: float = 0.012
    sigma_size: float = 0.012
    miss_rate: float = 0.3
    spurious_rate: float = 0.1
    reference_size: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma_center < 0 or self.sigma_size < 0:
            raise ValueError("jitter sigmas must be non-negative")
        if not (0 <= self.miss_rate < 1) or not (0 <= self.spurious_rate < 1):
            raise ValueError("rates must lie in [0, 1)")
        if self.reference_size < 1:
            raise ValueError("reference_size must be positive")

    def to_dict(self) -> dict:
        return {"sigma_center": self.sigma_center, "sigma_size": self.sigma_size,
                "miss_rate": self.miss_rate, "spurious_rate": self.spurious_rate,
                "reference_size": self.reference_size, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "MockDetectorModel":
        return cls(**data)


def mock_train(model: MockDetectorModel, train_size: int, num_classes: int) -> dict:
    """Produce mock weights: the base model scaled for a training-set size."""
    if train_size < 1:
        raise ValueError("train_size must be >= 1")
    s = math.sqrt(model.reference_size / train_size)
    effective = {
        "sigma_center": model.sigma_center * s,
        "sigma_size": model.sigma_size * s,
        "miss_rate": model.miss_rate * min(1.0, s),
        "spurious_rate": model.spurious_rate * min(1.0, s),
    }
    return {
        "kind": MOCK_WEIGHTS_KIND,
        "train_size": train_size,
        "num_classes": num_classes,
        "seed": model.seed,
        "base": model.to_dict(),
        "effective": effective,
        "confidence_scale": max(0.02, 10.0 * max(model.sigma_center, model.sigma_size)),
    }


def save_mock_weights(path: Path | str, weights: dict) -> None:
    Path(path).write_text(json.dumps(weights, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_mock_weights(path: Path | str) -> dict:
    weights = json.loads(Path(path).read_text(encoding="utf-8"))
    if weights.get("kind") != MOCK_WEIGHTS_KIND:
        raise ValueError(f"{path} is not a mock-detector weights file")
    return weights


def _detection_rng(seed: int, image_id: str) -> np.random.Generator:
    digest = hashlib.sha256(f"detect|{seed}|{image_id}".encode("utf-8")).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))


def _poisson_quantile(u: float, lam: float) -> int:
    """Inverse-CDF Poisson sample; monotone in lam for a fixed uniform."""
    if lam <= 0:
        return 0
    k = 0
    p = math.exp(-lam)
    cdf = p
    while u > cdf and k < 1000:
        k += 1
        p *= lam / k
        cdf += p
    return k


def _clamped_box(class_id: int, cx: float, cy: float, w: float, h: float) -> BoundingBox | None:
    """Clip a jittered box back into the unit square; None if degenerate."""
    cx, cy, w, h = float(cx), float(cy), float(w), float(h)
    w = min(w, 1.0)
    h = min(h, 1.0)
    if w < 1e-3 or h < 1e-3:
        return None
    if cx - w / 2 >= 0.0 and cx + w / 2 <= 1.0 and cy - h / 2 >= 0.0 and cy + h / 2 <= 1.0:
        return BoundingBox(class_id, cx, cy, w, h)
    x1, x2 = max(cx - w / 2, 0.0), min(cx + w / 2, 1.0)
    y1, y2 = max(cy - h / 2, 0.0), min(cy + h / 2, 1.0)
    if x2 - x1 < 1e-3 or y2 - y1 < 1e-3:
        return None
    return BoundingBox(class_id, (x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)


def mock_detect_boxes(weights: dict, image_id: str,
                      truths: Sequence[BoundingBox]) -> list[Prediction]:
    """Simulate detection on one image given its hidden ground truth.

    Deterministic per (weights seed, image_id). Every ground-truth box
    consumes the same number of draws whether or not it is missed, and
    spurious boxes draw after all real ones, so shrinking the error rates
    yields a superset of hits and a subset of spurious boxes.
    """
    rng = _detection_rng(weights["seed"], image_id)
    eff = weights["effective"]
    scale = weights["confidence_scale"]
    preds: list[Prediction] = []
    for gt in truths:
        u_miss = rng.random()
        z = rng.standard_normal(4)
        if u_miss < eff["miss_rate"]:
            continue
        dx, dy = z[0] * eff["sigma_center"], z[1] * eff["sigma_center"]
        dw, dh = z[2] * eff["sigma_size"], z[3] * eff["sigma_size"]
        moved = _clamped_box(gt.class_id, gt.cx + dx, gt.cy + dy, gt.w + dw, gt.h + dh)
        if moved is None:
            continue
        magnitude = math.sqrt(dx * dx + dy * dy + dw * dw + dh * dh)
        confidence = min(max(1.0 - magnitude / scale, CONF_MIN), CONF_MAX)
        preds.append(Prediction(moved, confidence))

    spurious = _poisson_quantile(rng.random(), eff["spurious_rate"] * len(truths))
    lo, hi = SPURIOUS_CONF_RANGE
    for _ in range(spurious):
        vals = rng.random(5)
        class_id = int(rng.integers(0, weights["num_classes"]))
        w = 0.05 + 0.25 * vals[2]
        h = 0.05 + 0.25 * vals[3]
        cx = w / 2 + (1.0 - w) * vals[0]
        cy = h / 2 + (1.0 - h) * vals[1]
        confidence = lo + (hi - lo) * vals[4]
        preds.append(Prediction(BoundingBox(class_id, cx, cy, w, h), confidence))
    return preds


# --------------------------------------------------------------------------
# Simulated annotator


@dataclass(frozen=True)
class AnnotatorCostModel:
    """Edit costs in abstract labor units plus the accept/match thresholds."""

    cost_review: float = 0.1
    cost_adjust: float = 1.0
    cost_reclass: float = 0.5
    cost_delete: float = 0.5
    cost_draw: float = 3.0
    accept_iou: float = 0.95
    match_iou: float = 0.5

    def __post_init__(self) -> None:
        for name in ("cost_review", "cost_adjust", "cost_reclass", "cost_delete", "cost_draw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.cost_draw < self.cost_adjust:
            raise ValueError("drawing a box cannot cost less than adjusting one")
        if not (0.5 <= self.accept_iou <= 1.0):
            raise ValueError("accept_iou must lie in [0.5, 1]")
        if not (0.0 < self.match_iou <= 1.0):
            raise ValueError("match_iou must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in
                ("cost_review", "cost_adjust", "cost_reclass", "cost_delete",
                 "cost_draw", "accept_iou", "match_iou")}

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotatorCostModel":
        return cls(**data)


@dataclass
class ReviewOutcome:
    """Result of correcting one image's predictions against ground truth."""

    corrected: list[BoundingBox]
    cost: float
    ops: dict[str, int]


def simulate_review(predictions: Sequence[Prediction], truths: Sequence[BoundingBox],
                    costs: AnnotatorCostModel = AnnotatorCostModel()) -> ReviewOutcome:
    """Correct predictions to the exact ground truth, accounting edit labor.

    Matching is geometric (class-agnostic) so a well-placed box with the
    wrong class is priced as a reclassification, not a delete plus draw.
    """
    result = match_detections(list(predictions), list(truths),
                              MatchConfig(costs.match_iou, class_agnostic=True))
    ops = {"review": 0, "adjust": 0, "reclass": 0, "delete": 0, "draw": 0}
    cost = 0.0
    for i, pred in enumerate(predictions):
        j = result.pred_to_gt[i]
        if j is None:
            ops["delete"] += 1
            cost += costs.cost_delete
            continue
        gt = truths[j]
        overlap = iou(pred.box, gt)
        right_class = pred.box.class_id == gt.class_id
        if overlap >= costs.accept_iou and right_class:
            ops["review"] += 1
            cost += costs.cost_review
            continue
        if overlap < costs.accept_iou:
            ops["adjust"] += 1
            cost += costs.cost_adjust
        if not right_class:
            ops["reclass"] += 1
            cost += costs.cost_reclass
    drawn = len(truths) - sum(1 for j in result.pred_to_gt if j is not None)
    ops["draw"] = drawn
    cost += drawn * costs.cost_draw
    return ReviewOutcome(list(truths), cost, ops)


@dataclass
class BatchReview:
    """Aggregated review of one iteration's batch."""

    corrected: dict[str, list[BoundingBox]]
    per_image_cost: dict[str, float]
    total_cost: float
    manual_cost: float          # drawing every ground-truth box from scratch
    ops: dict[str, int]

    @property
    def per_image_mean(self) -> float:
        return self.total_cost / len(self.per_image_cost) if self.per_image_cost else 0.0


def review_batch(preds_by_image: Mapping[str, Sequence[Prediction]],
                 gts_by_image: Mapping[str, Sequence[BoundingBox]],
                 costs: AnnotatorCostModel = AnnotatorCostModel()) -> BatchReview:
    corrected: dict[str, list[BoundingBox]] = {}
    per_image: dict[str, float] = {}
    ops = {"review": 0, "adjust": 0, "reclass": 0, "delete": 0, "draw": 0}
    total = 0.0
    manual = 0.0
    for image_id in sorted(gts_by_image):
        outcome = simulate_review(preds_by_image.get(image_id, ()),
                                  gts_by_image[image_id], costs)
        corrected[image_id] = outcome.corrected
        per_image[image_id] = outcome.cost
        total += outcome.cost
        manual += len(gts_by_image[image_id]) * costs.cost_draw
        for key, n in outcome.ops.items():
            ops[key] += n
    return BatchReview(corrected, per_image, total, manual, ops)


# --------------------------------------------------------------------------
# Synthetic scenario generation

CLASS_COLORS = (
    (196, 120, 60),   # gravel-ish
    (70, 160, 70),    # plant-ish
    (90, 110, 200),
    (200, 90, 160),
)


@dataclass
class ScenarioInfo:
    root: Path
    label_map: LabelMap
    loop_stems: list[str]
    val_stems: list[str]
    width: int
    height: int

    @property
    def images_dir(self) -> Path:
        return self.root / "images"

    @property
    def ground_truth_dir(self) -> Path:
        return self.root / "ground_truth"

    def image_path(self, stem: str) -> Path:
        return self.images_dir / f"{stem}.png"

    def truth_path(self, stem: str) -> Path:
        return self.ground_truth_dir / f"{stem}.txt"


def sample_scene_boxes(rng: np.random.Generator, class_count: int,
                       min_boxes: int = 1, max_boxes: int = 4) -> list[BoundingBox]:
    """Boxes of moderate size, anywhere on the canvas including the edges."""
    count = int(rng.integers(min_boxes, max_boxes + 1))
    boxes = []
    for _ in range(count):
        w = round(float(rng.uniform(0.15, 0.45)), 6)
        h = round(float(rng.uniform(0.15, 0.45)), 6)
        cx = round(float(rng.uniform(w / 2, 1 - w / 2)), 6)
        cy = round(float(rng.uniform(h / 2, 1 - h / 2)), 6)
        boxes.append(BoundingBox(int(rng.integers(0, class_count)), cx, cy, w, h))
    return boxes


def _draw_scene(rng: np.random.Generator, width: int, height: int,
                boxes: Sequence[BoundingBox]) -> np.ndarray:
    image = rng.integers(15, 70, size=(height, width, 3), dtype=np.uint8)
    ordered = sorted(boxes, key=lambda b: -(b.w * b.h))
    for box in ordered:
        color = CLASS_COLORS[box.class_id % len(CLASS_COLORS)]
        x1 = max(int((box.cx - box.w / 2) * width), 0)
        x2 = min(int((box.cx + box.w / 2) * width), width)
        y1 = max(int((box.cy - box.h / 2) * height), 0)
        y2 = min(int((box.cy + box.h / 2) * height), height)
        image[y1:y2, x1:x2] = color
        border = tuple(min(c + 40, 255) for c in color)
        image[y1:y2, x1:min(x1 + 2, width)] = border
        image[y1:y2, max(x2 - 2, 0):x2] = border
        image[y1:min(y1 + 2, height), x1:x2] = border
        image[max(y2 - 2, 0):y2, x1:x2] = border
    return image


def make_scenario(root: Path | str, n_loop: int = 400, n_val: int = 100,
                  width: int = 160, height: int = 120,
                  class_names: Sequence[str] = ("ballast", "plant"),
                  seed: int = 0, min_boxes: int = 1, max_boxes: int = 4) -> ScenarioInfo:
    """Generate a synthetic image set with hidden ground truth.

    Layout: images/, ground_truth/, classes.txt, scenario.json. The ground
    truth stays outside any workspace; only the mock detector and the
    simulated annotator may read it.
    """
    from PIL import Image

    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "ground_truth").mkdir(parents=True, exist_ok=True)
    label_map = LabelMap(tuple(class_names))
    save_label_map(root / "classes.txt", label_map)

    loop_stems, val_stems = [], []
    total = n_loop + n_val
    for index in range(total):
        stem = f"img_{index:04d}"
        rng = np.random.Generator(np.random.PCG64(
            int.from_bytes(hashlib.sha256(f"scene|{seed}|{stem}".encode()).digest()[:8], "little")))
        boxes = sample_scene_boxes(rng, len(label_map), min_boxes, max_boxes)
        image = _draw_scene(rng, width, height, boxes)
        Image.fromarray(image, mode="RGB").save(root / "images" / f"{stem}.png", format="PNG")
        save_label_file(root / "ground_truth" / f"{stem}.txt", boxes)
        (loop_stems if index < n_loop else val_stems).append(stem)

    info = {
        "classes": list(label_map.names),
        "loop": loop_stems,
        "val": val_stems,
        "width": width,
        "height": height,
        "seed": seed,
    }
    (root / "scenario.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
    return ScenarioInfo(root, label_map, loop_stems, val_stems, width, height)


def load_scenario(root: Path | str) -> ScenarioInfo:
    root = Path(root)
    info = json.loads((root / "scenario.json").read_text(encoding="utf-8"))
    return ScenarioInfo(root, LabelMap(tuple(info["classes"])),
                        list(info["loop"]), list(info["val"]),
                        info["width"], info["height"])
