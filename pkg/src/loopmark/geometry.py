"""Box geometry (IoU, clipping) and affine augmentation of boxes and rasters.

Boxes are normalized center/size; transforms act in pixel space so a 15
degree rotation means 15 degrees on the raster regardless of aspect ratio.
The canvas never grows: rotated/sheared content is cropped to the original
dims and boxes are clipped accordingly.

Random augmentation parameters are drawn from a stream keyed by
(seed, image_id, copy_index), so augmenting any subset of the work, in any
order, on any platform, reproduces identical transforms.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .labels import BoundingBox


class SingularTransformError(ValueError):
    """The affine transform cannot be inverted."""


@dataclass(frozen=True)
class ImageDims:
    width_px: int
    height_px: int

    def __post_init__(self) -> None:
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError(f"image dims must be positive, got {self.width_px}x{self.height_px}")


@dataclass(frozen=True)
class Affine2:
    """2x3 affine map (x, y) -> (a*x + b*y + tx, c*x + d*y + ty) in pixels."""

    a: float
    b: float
    c: float
    d: float
    tx: float
    ty: float

    def apply(self, x: float, y: float) -> tuple[float, float]:
        return (self.a * x + self.b * y + self.tx,
                self.c * x + self.d * y + self.ty)

    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def then(self, other: "Affine2") -> "Affine2":
        """Composition: first apply self, then ``other``."""
        return Affine2(
            other.a * self.a + other.b * self.c,
            other.a * self.b + other.b * self.d,
            other.c * self.a + other.d * self.c,
            other.c * self.b + other.d * self.d,
            other.a * self.tx + other.b * self.ty + other.tx,
            other.c * self.tx + other.d * self.ty + other.ty,
        )

    def inverse(self) -> "Affine2":
        det = self.det()
        if abs(det) < 1e-12:
            raise SingularTransformError(f"determinant {det} too close to zero")
        ia, ib = self.d / det, -self.b / det
        ic, id_ = -self.c / det, self.a / det
        return Affine2(ia, ib, ic, id_,
                       -(ia * self.tx + ib * self.ty),
                       -(ic * self.tx + id_ * self.ty))

    @staticmethod
    def identity() -> "Affine2":
        return Affine2(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)

    @staticmethod
    def flip_horizontal(width_px: float) -> "Affine2":
        """Mirror about the vertical center line: x -> width - x."""
        return Affine2(-1.0, 0.0, 0.0, 1.0, float(width_px), 0.0)

    @staticmethod
    def rotation_deg(angle_deg: float, px: float, py: float) -> "Affine2":
        theta = math.radians(angle_deg)
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        return Affine2(cos_t, -sin_t, sin_t, cos_t,
                       px - (cos_t * px - sin_t * py),
                       py - (sin_t * px + cos_t * py))

    @staticmethod
    def shear_deg(shear_x_deg: float, shear_y_deg: float, px: float, py: float) -> "Affine2":
        kx, ky = math.tan(math.radians(shear_x_deg)), math.tan(math.radians(shear_y_deg))
        return Affine2(1.0, kx, ky, 1.0,
                       px - (px + kx * py),
                       py - (ky * px + py))


@dataclass(frozen=True)
class AugmentationSpec:
    """Augmentation settings: horizontal flip, rotation, and x/y shear.

    All three stages are composed per augmented copy (flip, then rotation,
    then shear), each with parameters drawn fresh from the copy's stream.
    ``min_area_keep_fraction`` controls how much of a transformed box must
    survive canvas clipping before the box is dropped.
    """

    flip_horizontal_probability: float = 0.5
    rotation_range_deg: tuple[float, float] = (-15.0, 15.0)
    shear_range_deg_x: tuple[float, float] = (-10.0, 10.0)
    shear_range_deg_y: tuple[float, float] = (-10.0, 10.0)
    seed: int = 0
    copies_per_image: int = 1
    min_area_keep_fraction: float = 0.25

    def __post_init__(self) -> None:
        if not (0.0 <= self.flip_horizontal_probability <= 1.0):
            raise ValueError("flip probability must lie in [0, 1]")
        for name, (lo, hi) in (("rotation_range_deg", self.rotation_range_deg),
                               ("shear_range_deg_x", self.shear_range_deg_x),
                               ("shear_range_deg_y", self.shear_range_deg_y)):
            if lo > hi or lo <= -90.0 or hi >= 90.0:
                raise ValueError(f"{name} must be an ordered interval inside (-90, 90)")
        if self.copies_per_image < 1:
            raise ValueError("copies_per_image must be >= 1")
        if not (0.0 < self.min_area_keep_fraction <= 1.0):
            raise ValueError("min_area_keep_fraction must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "flip_horizontal_probability": self.flip_horizontal_probability,
            "rotation_range_deg": list(self.rotation_range_deg),
            "shear_range_deg_x": list(self.shear_range_deg_x),
            "shear_range_deg_y": list(self.shear_range_deg_y),
            "seed": self.seed,
            "copies_per_image": self.copies_per_image,
            "min_area_keep_fraction": self.min_area_keep_fraction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentationSpec":
        kwargs = dict(data)
        for key in ("rotation_range_deg", "shear_range_deg_x", "shear_range_deg_y"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes in a shared frame; ignores class."""
    ax1, ax2 = a.cx - a.w / 2, a.cx + a.w / 2
    ay1, ay2 = a.cy - a.h / 2, a.cy + a.h / 2
    bx1, bx2 = b.cx - b.w / 2, b.cx + b.w / 2
    by1, by2 = b.cy - b.h / 2, b.cy + b.h / 2
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    # Areas from the same corner differences as the intersection, so that
    # identical boxes give exactly 1.0.
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _stream_key(seed: int, image_id: str, copy_index: int) -> int:
    digest = hashlib.sha256(f"{seed}|{image_id}|{copy_index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def augmentation_rng(seed: int, image_id: str, copy_index: int) -> np.random.Generator:
    """Deterministic, platform-independent stream for one augmented copy."""
    return np.random.Generator(np.random.PCG64(_stream_key(seed, image_id, copy_index)))


def sample_affine(spec: AugmentationSpec, dims: ImageDims, image_id: str,
                  copy_index: int) -> Affine2:
    """Draw one augmentation transform: flip, then rotation, then shear.

    All random values are drawn unconditionally so the stream layout never
    depends on earlier outcomes.
    """
    rng = augmentation_rng(spec.seed, image_id, copy_index)
    u_flip = rng.random()
    angle = rng.uniform(spec.rotation_range_deg[0], spec.rotation_range_deg[1])
    shear_x = rng.uniform(spec.shear_range_deg_x[0], spec.shear_range_deg_x[1])
    shear_y = rng.uniform(spec.shear_range_deg_y[0], spec.shear_range_deg_y[1])

    cx, cy = dims.width_px / 2.0, dims.height_px / 2.0
    t = Affine2.identity()
    if u_flip < spec.flip_horizontal_probability:
        t = t.then(Affine2.flip_horizontal(dims.width_px))
    t = t.then(Affine2.rotation_deg(angle, cx, cy))
    t = t.then(Affine2.shear_deg(shear_x, shear_y, cx, cy))
    if abs(t.det()) < 1e-12:
        raise SingularTransformError("sampled transform is singular")
    return t


def transform_box_hull(box: BoundingBox, t: Affine2, dims: ImageDims) -> tuple[float, float, float, float]:
    """Pixel-space AABB of the transformed box corners, before clipping.

    Computed from the transformed box center plus linearly mapped corner
    offsets; the offset images come in exact +/- pairs, so a box sitting on
    a transform's fixed point keeps its center bit-for-bit.
    """
    w_px, h_px = dims.width_px, dims.height_px
    ccx, ccy = t.apply(box.cx * w_px, box.cy * h_px)
    hx, hy = box.w * w_px / 2.0, box.h * h_px / 2.0
    rel = []
    for vx, vy in ((hx, hy), (hx, -hy)):
        rel.append((t.a * vx + t.b * vy, t.c * vx + t.d * vy))
    rel += [(-x, -y) for x, y in rel]
    rx = [p[0] for p in rel]
    ry = [p[1] for p in rel]
    return ccx + min(rx), ccy + min(ry), ccx + max(rx), ccy + max(ry)


def transform_box(box: BoundingBox, t: Affine2, dims: ImageDims,
                  min_area_keep_fraction: float = 0.25) -> BoundingBox | None:
    """Map a box through an affine transform and clip it to the canvas.

    The result is the axis-aligned hull of the transformed corners. Returns
    None (box dropped) when clipping leaves less than
    ``min_area_keep_fraction`` of the transformed hull, or a sliver thinner
    than one pixel.
    """
    if abs(t.det()) < 1e-12:
        raise SingularTransformError("cannot transform boxes through a singular affine")
    hx1, hy1, hx2, hy2 = transform_box_hull(box, t, dims)
    hull_area = (hx2 - hx1) * (hy2 - hy1)
    if hull_area <= 0.0:
        return None
    cx1, cy1 = max(hx1, 0.0), max(hy1, 0.0)
    cx2, cy2 = min(hx2, float(dims.width_px)), min(hy2, float(dims.height_px))
    cw, ch = cx2 - cx1, cy2 - cy1
    if cw < 1.0 or ch < 1.0:
        return None
    if cw * ch < min_area_keep_fraction * hull_area:
        return None
    return BoundingBox(box.class_id,
                       (cx1 + cx2) / 2.0 / dims.width_px,
                       (cy1 + cy2) / 2.0 / dims.height_px,
                       cw / dims.width_px,
                       ch / dims.height_px)


def resample_raster(image: np.ndarray, t: Affine2) -> np.ndarray:
    """Warp a raster through ``t`` by inverse-mapped nearest neighbor.

    Output canvas keeps the input dims; source lookups are taken at output
    pixel centers, so an exact pixel permutation (identity, flip) is
    byte-preserving. Out-of-bounds sources fill with black.
    """
    inv = t.inverse()
    h_px, w_px = image.shape[:2]
    xs = np.arange(w_px, dtype=np.float64) + 0.5
    ys = np.arange(h_px, dtype=np.float64) + 0.5
    src_x = inv.a * xs[None, :] + inv.b * ys[:, None] + inv.tx
    src_y = inv.c * xs[None, :] + inv.d * ys[:, None] + inv.ty
    ix = np.floor(src_x).astype(np.int64)
    iy = np.floor(src_y).astype(np.int64)
    ok = (ix >= 0) & (ix < w_px) & (iy >= 0) & (iy < h_px)
    out = np.zeros_like(image)
    out[ok] = image[iy[ok], ix[ok]]
    return out


@dataclass(frozen=True)
class PlannedCopy:
    """One augmented copy that survived the keep policy."""

    image_id: str
    copy_index: int
    transform: Affine2
    boxes: tuple[BoundingBox, ...]


def plan_augmentation(spec: AugmentationSpec,
                      items: Iterable[tuple[str, ImageDims, Sequence[BoundingBox]]]) -> list[PlannedCopy]:
    """Decide which augmented copies to materialize and with which labels.

    A copy is kept only if every source box survives the transform: a copy
    that lost a box would still show the object in the raster while the
    label file no longer mentions it, which trains the detector to miss it.
    Copies of object-free images are always kept.
    """
    kept: list[PlannedCopy] = []
    for image_id, dims, boxes in items:
        for k in range(1, spec.copies_per_image + 1):
            t = sample_affine(spec, dims, image_id, k)
            moved = [transform_box(b, t, dims, spec.min_area_keep_fraction) for b in boxes]
            if boxes and any(m is None for m in moved):
                continue
            kept.append(PlannedCopy(image_id, k, t, tuple(moved)))  # type: ignore[arg-type]
    return kept


def load_raster(path) -> np.ndarray:
    """Read an image file as an 8-bit RGB array."""
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_raster(path, image: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(image, mode="RGB").save(path, format="PNG")
