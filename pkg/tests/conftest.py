from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from loopmark.labels import BoundingBox, Prediction


def random_box(rng: random.Random, class_count: int = 3, grid: bool = True) -> BoundingBox:
    """A valid box; with ``grid`` the coordinates sit on the 6-decimal grid."""
    w = rng.uniform(0.02, 0.6)
    h = rng.uniform(0.02, 0.6)
    cx = rng.uniform(w / 2, 1 - w / 2)
    cy = rng.uniform(h / 2, 1 - h / 2)
    if grid:
        w, h = round(w, 6), round(h, 6)
        cx = min(max(round(cx, 6), w / 2), 1 - w / 2)
        cy = min(max(round(cy, 6), h / 2), 1 - h / 2)
        cx, cy = round(cx, 6), round(cy, 6)
    return BoundingBox(rng.randrange(class_count), cx, cy, w, h)


def random_prediction(rng: random.Random, class_count: int = 3) -> Prediction:
    return Prediction(random_box(rng, class_count), round(rng.random(), 6))


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC0FFEE)
