"""On-disk dataset workspace: images, labels, splits, iteration history.

Layout under the workspace root:

    manifest.json   single source of truth, committed by atomic rename
    classes.txt     label map, one class name per line
    images/         original and augmented rasters
    labels/         label files paired to images by stem
    predictions/    per-iteration detector output (iter_<i>/)
    runs/           per-iteration training/eval artifacts (iter_<i>/)
    review/         per-iteration review bundles and staged corrections

Every image id appears in exactly one split pool (train, val, unlabeled,
augmented). Mutating operations are single-writer: callers hold the
workspace lock. A merge stages label files first and commits by renaming
the manifest; an interrupted merge is rolled forward or discarded the next
time the workspace is loaded.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .geometry import AugmentationSpec, ImageDims, load_raster, plan_augmentation, resample_raster, save_raster
from .labels import (
    BoundingBox,
    LabelFormatError,
    LabelMap,
    check_box,
    check_class_ids,
    load_label_file,
    parse_label_map,
    save_label_file,
    save_label_map,
    serialize_label_file,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
CLASSES_NAME = "classes.txt"
LOCK_NAME = ".lock"
MERGE_TMP_SUFFIX = ".merge-tmp"

POOLS = ("train", "val", "unlabeled", "augmented")

ORIGIN_PENDING = "pending"
ORIGIN_MANUAL = "manual"
ORIGIN_ASSISTED = "assisted"
ORIGIN_AUGMENTED = "augmented"


class WorkspaceError(Exception):
    """Invalid workspace operation (bad precondition, unknown id, ...)."""


class WorkspaceCorrupt(WorkspaceError):
    """The on-disk state is inconsistent with the manifest."""


class WorkspaceLocked(WorkspaceError):
    """Another writer holds the workspace lock."""


@dataclass
class ImageEntry:
    path: str
    width: int
    height: int
    origin: str
    source_iteration: int = 0
    label_path: str | None = None
    parent: str | None = None

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "width": self.width,
            "height": self.height,
            "origin": self.origin,
            "source_iteration": self.source_iteration,
            "label_path": self.label_path,
            "parent": self.parent,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ImageEntry":
        return cls(**data)

    @property
    def stem(self) -> str:
        return Path(self.path).stem


@dataclass
class IterationRecord:
    index: int
    train_size_original: int
    train_size_augmented: int
    train_size_total: int
    eval: dict | None = None
    labor: dict | None = None
    detector_run_id: str | None = None
    started: str | None = None
    finished: str | None = None
    baseline: bool = False

    def __post_init__(self) -> None:
        if self.train_size_total != self.train_size_original + self.train_size_augmented:
            raise WorkspaceError("train_size_total must be original + augmented")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "train_size_original": self.train_size_original,
            "train_size_augmented": self.train_size_augmented,
            "train_size_total": self.train_size_total,
            "eval": self.eval,
            "labor": self.labor,
            "detector_run_id": self.detector_run_id,
            "started": self.started,
            "finished": self.finished,
            "baseline": self.baseline,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IterationRecord":
        return cls(**data)


def _default_loop() -> dict:
    return {"phase": "unseeded", "iteration": 0, "pending_batch": []}


@dataclass
class Manifest:
    label_map: LabelMap
    images: dict[str, ImageEntry] = field(default_factory=dict)
    splits: dict[str, list[str]] = field(default_factory=lambda: {p: [] for p in POOLS})
    iterations: list[IterationRecord] = field(default_factory=list)
    loop: dict = field(default_factory=_default_loop)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "label_map": list(self.label_map.names),
            "images": {k: v.to_dict() for k, v in self.images.items()},
            "splits": {k: list(v) for k, v in self.splits.items()},
            "iterations": [r.to_dict() for r in self.iterations],
            "loop": self.loop,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Manifest":
        return cls(
            label_map=LabelMap(tuple(data["label_map"])),
            images={k: ImageEntry.from_dict(v) for k, v in data["images"].items()},
            splits={k: list(v) for k, v in data["splits"].items()},
            iterations=[IterationRecord.from_dict(r) for r in data["iterations"]],
            loop=dict(data["loop"]),
            schema_version=data["schema_version"],
        )


@dataclass
class ImportReport:
    added: list[str]
    duplicates: list[str]


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def content_id(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


def derived_id(parent_id: str, copy_index: int) -> str:
    return hashlib.sha256(f"{parent_id}|aug|{copy_index}".encode("utf-8")).hexdigest()[:16]


class Workspace:
    def __init__(self, root: Path, manifest: Manifest):
        self.root = Path(root)
        self.manifest = manifest

    # ---------------------------------------------------------------- setup

    @classmethod
    def init(cls, root: Path | str, label_map: LabelMap) -> "Workspace":
        root = Path(root)
        if root.exists() and any(root.iterdir()):
            raise WorkspaceError(f"refusing to initialize non-empty directory {root}")
        for sub in ("images", "labels", "predictions", "runs", "review"):
            (root / sub).mkdir(parents=True, exist_ok=True)
        save_label_map(root / CLASSES_NAME, label_map)
        ws = cls(root, Manifest(label_map=label_map))
        ws.save()
        return ws

    @classmethod
    def load(cls, root: Path | str) -> "Workspace":
        root = Path(root)
        manifest_path = root / MANIFEST_NAME
        if not manifest_path.is_file():
            raise WorkspaceError(f"{root} is not a workspace (no {MANIFEST_NAME})")
        try:
            data = json.loads(manifest_path.read_text(encoding="utf-8"))
            manifest = Manifest.from_dict(data)
        except (ValueError, KeyError, TypeError, LabelFormatError) as exc:
            raise WorkspaceCorrupt(f"cannot read manifest: {exc}") from exc
        ws = cls(root, manifest)
        ws._recover_interrupted_merge()
        return ws

    def save(self) -> None:
        text = json.dumps(self.manifest.to_dict(), indent=2, sort_keys=True) + "\n"
        _atomic_write_text(self.root / MANIFEST_NAME, text)

    @contextlib.contextmanager
    def lock(self):
        """Exclusive writer lock: a lock file created with O_EXCL."""
        path = self.root / LOCK_NAME
        try:
            fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise WorkspaceLocked(
                f"workspace {self.root} is locked by another process "
                f"(remove {path} if that process is gone)") from None
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield self
        finally:
            with contextlib.suppress(FileNotFoundError):
                path.unlink()

    # ------------------------------------------------------------- helpers

    def abspath(self, rel: str) -> Path:
        return self.root / rel

    def image_entry(self, image_id: str) -> ImageEntry:
        try:
            return self.manifest.images[image_id]
        except KeyError:
            raise WorkspaceError(f"unknown image id {image_id}") from None

    def pool_of(self, image_id: str) -> str:
        for pool, ids in self.manifest.splits.items():
            if image_id in ids:
                return pool
        raise WorkspaceError(f"image {image_id} is in no split pool")

    def dims_of(self, image_id: str) -> ImageDims:
        entry = self.image_entry(image_id)
        return ImageDims(entry.width, entry.height)

    def load_labels(self, image_id: str) -> list[BoundingBox]:
        entry = self.image_entry(image_id)
        if entry.label_path is None:
            raise WorkspaceError(f"image {image_id} has no labels")
        return load_label_file(self.abspath(entry.label_path))

    def stems_in_use(self) -> set[str]:
        return {entry.stem for entry in self.manifest.images.values()}

    def train_sizes(self) -> tuple[int, int, int]:
        """(originals, augmented, total) currently available for training."""
        originals = len(self.manifest.splits["train"])
        augmented = len(self.manifest.splits["augmented"])
        return originals, augmented, originals + augmented

    # ------------------------------------------------------------- imports

    def import_images(self, paths: Sequence[Path | str], split: str,
                      labels: Mapping[str, Sequence[BoundingBox]] | None = None,
                      origin: str | None = None,
                      source_iteration: int = 0) -> ImportReport:
        """Copy images into the workspace and register them in one pool.

        ``labels`` maps source file stems to boxes; labeled images default to
        origin "manual", unlabeled ones to "pending". Duplicate content is
        reported and skipped.
        """
        if split not in ("train", "val", "unlabeled"):
            raise WorkspaceError(f"cannot import into pool {split!r}")
        if not paths:
            log.warning("import: no files given, nothing to do")
            return ImportReport([], [])

        from PIL import Image, UnidentifiedImageError

        stems = self.stems_in_use()
        added: list[str] = []
        duplicates: list[str] = []
        for src in paths:
            src = Path(src)
            data = src.read_bytes()
            image_id = content_id(data)
            if image_id in self.manifest.images:
                log.warning("import: %s duplicates an existing image, skipped", src)
                duplicates.append(str(src))
                continue
            try:
                with Image.open(src) as img:
                    width, height = img.size
            except (UnidentifiedImageError, OSError) as exc:
                raise WorkspaceError(f"cannot decode image {src}: {exc}") from exc

            stem = src.stem
            if stem in stems:
                stem = f"{src.stem}_{image_id[:8]}"
            stems.add(stem)
            rel_img = f"images/{stem}{src.suffix.lower()}"
            self.abspath(rel_img).write_bytes(data)

            boxes = None if labels is None else labels.get(src.stem)
            rel_label = None
            if boxes is not None:
                check_class_ids([check_box(b) for b in boxes], self.manifest.label_map)
                rel_label = f"labels/{stem}.txt"
                save_label_file(self.abspath(rel_label), boxes)

            entry_origin = origin or (ORIGIN_MANUAL if boxes is not None else ORIGIN_PENDING)
            self.manifest.images[image_id] = ImageEntry(
                path=rel_img, width=width, height=height, origin=entry_origin,
                source_iteration=source_iteration, label_path=rel_label)
            self.manifest.splits[split].append(image_id)
            added.append(image_id)
        self.save()
        return ImportReport(added, duplicates)

    # --------------------------------------------------------------- merge

    def merge_reviewed(self, iteration: int,
                       corrected: Mapping[str, Sequence[BoundingBox]]) -> int:
        """Atomically adopt corrected labels: unlabeled -> train, origin assisted.

        Labels are staged next to their final location; the manifest rename
        is the commit point, after which staging is rolled forward. A crash
        before the commit leaves the previous state fully intact.
        """
        if not corrected:
            log.info("merge: empty correction set, nothing to do")
            return 0
        pending = set(self.manifest.loop.get("pending_batch", []))
        staged: list[tuple[Path, Path]] = []
        for image_id, boxes in corrected.items():
            self.image_entry(image_id)  # raises on unknown id
            if self.pool_of(image_id) != "unlabeled":
                raise WorkspaceError(f"image {image_id} is not in the unlabeled pool")
            if pending and image_id not in pending:
                raise WorkspaceError(f"image {image_id} is not part of iteration {iteration}'s batch")
            for box in boxes:
                check_box(box)
            check_class_ids(list(boxes), self.manifest.label_map)

        for image_id, boxes in corrected.items():
            entry = self.manifest.images[image_id]
            rel_label = f"labels/{entry.stem}.txt"
            final = self.abspath(rel_label)
            tmp = final.with_name(final.name + MERGE_TMP_SUFFIX)
            tmp.write_text(serialize_label_file(boxes), encoding="utf-8")
            staged.append((tmp, final))
            entry.label_path = rel_label
            entry.origin = ORIGIN_ASSISTED
            entry.source_iteration = iteration

        merged_ids = [i for i in self.manifest.splits["unlabeled"] if i in corrected]
        self.manifest.splits["unlabeled"] = [
            i for i in self.manifest.splits["unlabeled"] if i not in corrected]
        self.manifest.splits["train"].extend(merged_ids)
        self.save()  # commit point
        for tmp, final in staged:
            os.replace(tmp, final)
        return len(merged_ids)

    def _recover_interrupted_merge(self) -> None:
        """Roll a committed merge forward, or discard uncommitted staging."""
        for tmp in sorted((self.root / "labels").glob(f"*{MERGE_TMP_SUFFIX}")):
            final = tmp.with_name(tmp.name[: -len(MERGE_TMP_SUFFIX)])
            rel = f"labels/{final.name}"
            committed = any(e.label_path == rel and e.origin == ORIGIN_ASSISTED
                            for e in self.manifest.images.values())
            if committed and not final.exists():
                log.warning("recovering interrupted merge: %s", final.name)
                os.replace(tmp, final)
            else:
                log.warning("discarding stale merge staging: %s", tmp.name)
                tmp.unlink()

    # ------------------------------------------------------------- augment

    def augment_split(self, spec: AugmentationSpec, iteration: int = 0) -> int:
        """Regenerate the augmented companion set for the current train pool.

        Previously augmented files are removed first; the whole set is a
        deterministic function of (train pool, spec), so re-running after a
        crash or a deletion reproduces identical bytes.
        """
        train_ids = list(self.manifest.splits["train"])
        if not train_ids:
            raise WorkspaceError("augment: train pool is empty")

        for old_id in self.manifest.splits["augmented"]:
            entry = self.manifest.images.pop(old_id)
            with contextlib.suppress(FileNotFoundError):
                self.abspath(entry.path).unlink()
            if entry.label_path:
                with contextlib.suppress(FileNotFoundError):
                    self.abspath(entry.label_path).unlink()
        self.manifest.splits["augmented"] = []

        items = []
        for image_id in train_ids:
            entry = self.image_entry(image_id)
            items.append((image_id, ImageDims(entry.width, entry.height),
                          self.load_labels(image_id)))
        plans = plan_augmentation(spec, items)

        made = 0
        rasters: dict[str, object] = {}
        for plan in plans:
            parent = self.manifest.images[plan.image_id]
            if plan.image_id not in rasters:
                try:
                    rasters[plan.image_id] = load_raster(self.abspath(parent.path))
                except OSError as exc:
                    log.warning("augment: cannot decode %s (%s), skipped", parent.path, exc)
                    rasters[plan.image_id] = None
            raster = rasters[plan.image_id]
            if raster is None:
                continue
            stem = f"{parent.stem}__aug{plan.copy_index}"
            rel_img = f"images/{stem}.png"
            rel_label = f"labels/{stem}.txt"
            save_raster(self.abspath(rel_img), resample_raster(raster, plan.transform))
            save_label_file(self.abspath(rel_label), plan.boxes)
            aug_id = derived_id(plan.image_id, plan.copy_index)
            self.manifest.images[aug_id] = ImageEntry(
                path=rel_img, width=parent.width, height=parent.height,
                origin=ORIGIN_AUGMENTED, source_iteration=iteration,
                label_path=rel_label, parent=plan.image_id)
            self.manifest.splits["augmented"].append(aug_id)
            made += 1
        self.save()
        return made

    # -------------------------------------------------------------- verify

    def verify(self) -> list[str]:
        """Cross-check manifest and disk; returns a list of problems."""
        problems: list[str] = []
        seen: dict[str, str] = {}
        for pool, ids in self.manifest.splits.items():
            if pool not in POOLS:
                problems.append(f"unknown pool {pool!r}")
            for image_id in ids:
                if image_id in seen:
                    problems.append(f"image {image_id} in both {seen[image_id]} and {pool}")
                seen[image_id] = pool
                if image_id not in self.manifest.images:
                    problems.append(f"pool {pool} references unknown image {image_id}")
        for image_id, entry in self.manifest.images.items():
            if image_id not in seen:
                problems.append(f"image {image_id} is in no split pool")
            if not self.abspath(entry.path).is_file():
                problems.append(f"missing image file {entry.path}")
            if entry.label_path and not self.abspath(entry.label_path).is_file():
                problems.append(f"missing label file {entry.label_path}")
            if entry.parent is not None and entry.parent not in self.manifest.images:
                problems.append(f"augmented image {image_id} references unknown parent {entry.parent}")
            if entry.origin == ORIGIN_AUGMENTED and seen.get(image_id) != "augmented":
                problems.append(f"augmented image {image_id} outside the augmented pool")

        manifest_images = {entry.path for entry in self.manifest.images.values()}
        for path in sorted((self.root / "images").iterdir()):
            if f"images/{path.name}" not in manifest_images:
                problems.append(f"stray file images/{path.name}")
        manifest_labels = {entry.label_path for entry in self.manifest.images.values()
                           if entry.label_path}
        for path in sorted((self.root / "labels").iterdir()):
            if path.name.endswith(MERGE_TMP_SUFFIX):
                continue
            if f"labels/{path.name}" not in manifest_labels:
                problems.append(f"stray file labels/{path.name}")

        for k, record in enumerate(self.manifest.iterations, start=1):
            if record.index != k:
                problems.append(f"iteration records not contiguous at position {k}")

        try:
            on_disk = parse_label_map((self.root / CLASSES_NAME).read_text(encoding="utf-8"))
            if on_disk != self.manifest.label_map:
                problems.append("classes.txt disagrees with the manifest label map")
        except (OSError, LabelFormatError) as exc:
            problems.append(f"classes.txt unreadable: {exc}")
        return problems
