"""The annotation loop as a resumable state machine.

One iteration advances through six phases, each a separate `step` call:

    augmented -> trained -> detected -> awaiting_review -> merged -> evaluated

Augmentation regenerates the companion set for the whole train pool, the
adapter trains on train+augmented and detects on the next unlabeled batch,
detections are exported as editable label files, corrections come back from
a review (service, files on disk, or the simulated annotator) and are merged
into the train pool, and the fresh model is scored against the val split.

Every phase is a deterministic function of the last committed manifest, and
the manifest commit is atomic, so `step` after a crash simply redoes the
interrupted phase and lands in an identical state. The journal records each
begin/commit pair for auditing and for crash testing.
"""

from __future__ import annotations

import contextlib
import datetime as _dt
import hashlib
import json
import logging
import os
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .adapter import AdapterConfig, build_dataset_dir, run_detect, run_train
from .geometry import AugmentationSpec
from .labels import BoundingBox, Prediction, load_label_file, save_label_file
from .metrics import confidence_grid, evaluate, f1_curve_csv, pr_curve_csv
from .simulation import AnnotatorCostModel, BatchReview, review_batch
from .workspace import ORIGIN_MANUAL, IterationRecord, Workspace

log = logging.getLogger(__name__)

PHASES = ("unseeded", "seeded", "augmented", "trained", "detected",
          "awaiting_review", "merged", "evaluated")

JOURNAL_NAME = "journal.log"
CRASH_ENV = "LOOPMARK_CRASH_AFTER_JOURNAL"


class OrchestratorError(Exception):
    """User-level loop error (wrong phase, missing inputs, bad config)."""


class PhaseError(OrchestratorError):
    pass


class ReviewPending(OrchestratorError):
    """The current batch still has unreviewed items."""

    def __init__(self, pending: list[str]):
        super().__init__(f"review pending for {len(pending)} item(s): "
                         + ", ".join(pending[:5]) + ("..." if len(pending) > 5 else ""))
        self.pending = pending


@dataclass(frozen=True)
class SimulatedAnnotatorConfig:
    """Points the loop's review phase at hidden ground truth."""

    ground_truth_dir: str
    costs: AnnotatorCostModel = AnnotatorCostModel()

    def to_dict(self) -> dict:
        return {"ground_truth_dir": self.ground_truth_dir, "costs": self.costs.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "SimulatedAnnotatorConfig":
        return cls(data["ground_truth_dir"], AnnotatorCostModel.from_dict(data["costs"]))


@dataclass
class LoopConfig:
    batch_size: int = 100
    max_iterations: int = 0     # 0 means run until the unlabeled pool drains
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    adapter: AdapterConfig | None = None
    auto_accept_confidence: float | None = None
    eval_iou_thresholds: tuple[float, ...] = (0.5, 0.9)
    f1_grid_points: int = 101
    deterministic_timestamps: bool = False
    simulated_annotator: SimulatedAnnotatorConfig | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.auto_accept_confidence is not None and not (0.0 < self.auto_accept_confidence <= 1.0):
            raise ValueError("auto_accept_confidence must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "max_iterations": self.max_iterations,
            "augmentation": self.augmentation.to_dict(),
            "adapter": self.adapter.to_dict() if self.adapter else None,
            "auto_accept_confidence": self.auto_accept_confidence,
            "eval_iou_thresholds": list(self.eval_iou_thresholds),
            "f1_grid_points": self.f1_grid_points,
            "deterministic_timestamps": self.deterministic_timestamps,
            "simulated_annotator": (self.simulated_annotator.to_dict()
                                    if self.simulated_annotator else None),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LoopConfig":
        return cls(
            batch_size=data.get("batch_size", 100),
            max_iterations=data.get("max_iterations", 0),
            augmentation=AugmentationSpec.from_dict(data["augmentation"])
            if data.get("augmentation") else AugmentationSpec(),
            adapter=AdapterConfig.from_dict(data["adapter"]) if data.get("adapter") else None,
            auto_accept_confidence=data.get("auto_accept_confidence"),
            eval_iou_thresholds=tuple(data.get("eval_iou_thresholds", (0.5, 0.9))),
            f1_grid_points=data.get("f1_grid_points", 101),
            deterministic_timestamps=data.get("deterministic_timestamps", False),
            simulated_annotator=SimulatedAnnotatorConfig.from_dict(data["simulated_annotator"])
            if data.get("simulated_annotator") else None,
        )

    @classmethod
    def from_json_file(cls, path: Path | str) -> "LoopConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class StepResult:
    phase: str
    iteration: int
    message: str
    complete: bool = False


class Journal:
    """Append-only record of phase transitions."""

    def __init__(self, root: Path):
        self.path = Path(root) / JOURNAL_NAME

    def append(self, event: str, iteration: int, phase: str, at: str | None) -> None:
        line = json.dumps({"event": event, "iteration": iteration,
                           "phase": phase, "at": at}, sort_keys=True)
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(line + "\n")
            handle.flush()
            os.fsync(handle.fileno())
        crash_after = os.environ.get(CRASH_ENV)
        if crash_after is not None:
            total = sum(1 for _ in open(self.path, encoding="utf-8"))
            if total >= int(crash_after):
                os._exit(17)  # simulate an abrupt crash, no cleanup

    def entries(self) -> list[dict]:
        if not self.path.is_file():
            return []
        return [json.loads(line) for line in
                self.path.read_text(encoding="utf-8").splitlines() if line]


def _now(cfg: LoopConfig) -> str:
    if cfg.deterministic_timestamps:
        return "1970-01-01T00:00:00+00:00"
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _require_phase(ws: Workspace, *expected: str) -> str:
    phase = ws.manifest.loop.get("phase", "unseeded")
    if phase not in expected:
        raise PhaseError(f"workspace is in phase {phase!r}, expected "
                         + " or ".join(repr(e) for e in expected))
    return phase


def _fresh_dir(path: Path) -> Path:
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)
    return path


def _link_or_copy(src: Path, dest: Path) -> None:
    if dest.exists():
        dest.unlink()
    try:
        os.link(src, dest)
    except OSError:
        shutil.copyfile(src, dest)


# --------------------------------------------------------------------------
# Seeding


def seed(ws: Workspace, image_paths: Sequence[Path | str],
         labels_dir: Path | str, cfg: LoopConfig | None = None) -> StepResult:
    """Import the manually labeled seed set and arm the loop.

    Every seed image must have a label file of the same stem in
    ``labels_dir``; nothing is imported if one is missing.
    """
    cfg = cfg or LoopConfig()
    _require_phase(ws, "unseeded")
    labels_dir = Path(labels_dir)
    labels: dict[str, list[BoundingBox]] = {}
    for image in image_paths:
        stem = Path(image).stem
        label_file = labels_dir / f"{stem}.txt"
        if not label_file.is_file():
            raise OrchestratorError(f"seed image {image} has no label file {label_file}")
        labels[stem] = load_label_file(label_file)
    report = ws.import_images(list(image_paths), "train", labels=labels,
                              origin=ORIGIN_MANUAL)
    ws.manifest.loop = {"phase": "seeded", "iteration": 0, "pending_batch": [],
                        "seeded_at": _now(cfg), "seed_size": len(report.added)}
    ws.save()
    Journal(ws.root).append("commit", 0, "seeded", _now(cfg))
    return StepResult("seeded", 0, f"seeded {len(report.added)} labeled image(s)")


# --------------------------------------------------------------------------
# Phase bodies. Each runs against the committed manifest and is safe to redo.


def _phase_augment(ws: Workspace, cfg: LoopConfig, iteration: int) -> str:
    made = ws.augment_split(cfg.augmentation, iteration)
    loop = ws.manifest.loop
    # Snapshot the training-set size now: by evaluation time the merge will
    # already have grown the train pool for the next iteration.
    loop.update({"phase": "augmented", "iteration": iteration,
                 "started": _now(cfg),
                 "train_original": len(ws.manifest.splits["train"]),
                 "train_augmented": made})
    loop.pop("labor", None)
    loop.pop("detector_run_id", None)
    loop.pop("weights_path", None)
    return f"augmented train pool with {made} synthetic copies"


def _phase_train(ws: Workspace, cfg: LoopConfig, iteration: int) -> str:
    if cfg.adapter is None:
        raise OrchestratorError("no detector adapter configured")
    run_dir = ws.root / "runs" / f"iter_{iteration}"
    dataset = _fresh_dir(run_dir / "dataset")
    build_dataset_dir(ws, dataset)
    weights_out = run_dir / "weights"
    with contextlib.suppress(FileNotFoundError):
        weights_out.unlink()
    run_train(cfg.adapter, dataset, weights_out, iteration=iteration)
    run_id = f"iter{iteration}-" + hashlib.sha256(weights_out.read_bytes()).hexdigest()[:12]
    ws.manifest.loop.update({"phase": "trained",
                             "weights_path": str(weights_out.relative_to(ws.root)),
                             "detector_run_id": run_id})
    total = ws.train_sizes()[2]
    return f"trained on {total} images -> {run_id}"


def _phase_detect(ws: Workspace, cfg: LoopConfig, iteration: int) -> str:
    batch = list(ws.manifest.splits["unlabeled"])[: cfg.batch_size]
    ws.manifest.loop["pending_batch"] = batch
    if not batch:
        ws.manifest.loop["phase"] = "detected"
        return "no unlabeled images left; empty batch"
    if cfg.adapter is None:
        raise OrchestratorError("no detector adapter configured")
    run_dir = ws.root / "runs" / f"iter_{iteration}"
    batch_dir = _fresh_dir(run_dir / "batch_images")
    for image_id in batch:
        entry = ws.image_entry(image_id)
        _link_or_copy(ws.abspath(entry.path), batch_dir / Path(entry.path).name)
    predictions_dir = _fresh_dir(ws.root / "predictions" / f"iter_{iteration}")
    weights = ws.abspath(ws.manifest.loop["weights_path"])
    count = run_detect(cfg.adapter, weights, batch_dir, predictions_dir, iteration)
    ws.manifest.loop["phase"] = "detected"
    return f"detected on {count} image(s)"


def batch_predictions(ws: Workspace, iteration: int) -> dict[str, list[Prediction]]:
    """Predictions of one iteration's batch, keyed by image id."""
    predictions_dir = ws.root / "predictions" / f"iter_{iteration}"
    out: dict[str, list[Prediction]] = {}
    for image_id in ws.manifest.loop.get("pending_batch", []):
        entry = ws.image_entry(image_id)
        pred_file = predictions_dir / f"{entry.stem}.txt"
        out[image_id] = (load_label_file(pred_file, expect_confidence=True)
                         if pred_file.is_file() else [])
    return out


def review_dir(ws: Workspace, iteration: int) -> Path:
    return ws.root / "review" / f"iter_{iteration}"


def export_for_review(ws: Workspace, cfg: LoopConfig, iteration: int) -> Path:
    """Write the editable review bundle for the current batch.

    Labels are plain 5-field files any labeling tool can open; confidences
    go to a sidecar file with one value per line, aligned with the label
    lines, so they can be re-joined after editing.
    """
    bundle = review_dir(ws, iteration)
    _fresh_dir(bundle / "labels")
    _fresh_dir(bundle / "confidences")
    _fresh_dir(bundle / "images")
    (bundle / "staging").mkdir(exist_ok=True)
    shutil.copyfile(ws.root / "classes.txt", bundle / "classes.txt")

    preds = batch_predictions(ws, iteration)
    items = []
    preaccepted: dict[str, dict] = {}
    for image_id in ws.manifest.loop.get("pending_batch", []):
        entry = ws.image_entry(image_id)
        predictions = preds[image_id]
        save_label_file(bundle / "labels" / f"{entry.stem}.txt",
                        [p.box for p in predictions])
        (bundle / "confidences" / f"{entry.stem}.txt").write_text(
            "".join(f"{p.confidence:.6f}\n" for p in predictions), encoding="utf-8")
        _link_or_copy(ws.abspath(entry.path), bundle / "images" / Path(entry.path).name)
        items.append({"image_id": image_id, "stem": entry.stem,
                      "image": Path(entry.path).name, "predictions": len(predictions)})
        if cfg.auto_accept_confidence is not None:
            marks = [p.confidence >= cfg.auto_accept_confidence for p in predictions]
            preaccepted[image_id] = {"boxes": marks, "item": all(marks)}
    (bundle / "items.json").write_text(json.dumps(items, indent=2) + "\n", encoding="utf-8")
    if cfg.auto_accept_confidence is not None:
        (bundle / "preaccepted.json").write_text(
            json.dumps({"confidence": cfg.auto_accept_confidence, "items": preaccepted},
                       indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return bundle


def _phase_export(ws: Workspace, cfg: LoopConfig, iteration: int) -> str:
    bundle = export_for_review(ws, cfg, iteration)
    count = len(ws.manifest.loop.get("pending_batch", []))
    ws.manifest.loop["phase"] = "awaiting_review"
    return f"exported {count} item(s) for review at {bundle}"


def staged_correction(ws: Workspace, iteration: int, image_id: str) -> dict | None:
    path = review_dir(ws, iteration) / "staging" / f"{image_id}.json"
    if not path.is_file():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def preaccepted_items(ws: Workspace, iteration: int) -> dict[str, dict]:
    path = review_dir(ws, iteration) / "preaccepted.json"
    if not path.is_file():
        return {}
    return json.loads(path.read_text(encoding="utf-8")).get("items", {})


def collect_corrections(ws: Workspace, iteration: int) -> tuple[dict[str, list[BoundingBox]], list[str]]:
    """Gather reviewed labels for the batch: staged edits, accepts, pre-accepts.

    Returns (corrections, still-pending ids). An accepted item without an
    explicit edit takes the exported predictions stripped of confidence.
    """
    pre = preaccepted_items(ws, iteration)
    preds = batch_predictions(ws, iteration)
    corrections: dict[str, list[BoundingBox]] = {}
    pending: list[str] = []
    for image_id in ws.manifest.loop.get("pending_batch", []):
        staged = staged_correction(ws, iteration, image_id)
        if staged is not None and staged.get("status") == "edited":
            corrections[image_id] = [BoundingBox(int(b[0]), *map(float, b[1:]))
                                     for b in staged["boxes"]]
        elif staged is not None and staged.get("status") == "accepted":
            corrections[image_id] = [p.box for p in preds[image_id]]
        elif pre.get(image_id, {}).get("item"):
            corrections[image_id] = [p.box for p in preds[image_id]]
        else:
            pending.append(image_id)
    return corrections, pending


def _phase_merge(ws: Workspace, cfg: LoopConfig, iteration: int) -> str:
    batch = ws.manifest.loop.get("pending_batch", [])
    if not batch:
        ws.manifest.loop["phase"] = "merged"
        return "empty batch, nothing to merge"

    if cfg.simulated_annotator is not None:
        review = _simulated_review(ws, cfg, iteration)
        corrections = {image_id: review.corrected[ws.image_entry(image_id).stem]
                       for image_id in batch}
        ws.manifest.loop["labor"] = {
            "total": review.total_cost,
            "per_image_mean": review.per_image_mean,
            "manual_total": review.manual_cost,
            "images": len(batch),
            "ops": review.ops,
        }
    else:
        corrections, pending = collect_corrections(ws, iteration)
        if pending:
            raise ReviewPending(pending)
    merged = ws.merge_reviewed(iteration, corrections)
    ws.manifest.loop["phase"] = "merged"
    return f"merged {merged} reviewed image(s) into the train pool"


def _simulated_review(ws: Workspace, cfg: LoopConfig, iteration: int) -> BatchReview:
    assert cfg.simulated_annotator is not None
    truth_dir = Path(cfg.simulated_annotator.ground_truth_dir)
    preds = batch_predictions(ws, iteration)
    preds_by_stem = {ws.image_entry(i).stem: p for i, p in preds.items()}
    gts_by_stem = {}
    for image_id in preds:
        stem = ws.image_entry(image_id).stem
        truth_file = truth_dir / f"{stem}.txt"
        if not truth_file.is_file():
            raise OrchestratorError(f"simulated annotator has no ground truth for {stem}")
        gts_by_stem[stem] = load_label_file(truth_file)
    return review_batch(preds_by_stem, gts_by_stem, cfg.simulated_annotator.costs)


def _phase_eval(ws: Workspace, cfg: LoopConfig, iteration: int) -> str:
    loop = ws.manifest.loop
    run_dir = ws.root / "runs" / f"iter_{iteration}"
    val_ids = list(ws.manifest.splits["val"])
    eval_summary = None
    if val_ids and loop.get("weights_path") and cfg.adapter is not None:
        val_dir = _fresh_dir(run_dir / "val_images")
        for image_id in val_ids:
            entry = ws.image_entry(image_id)
            _link_or_copy(ws.abspath(entry.path), val_dir / Path(entry.path).name)
        val_pred_dir = _fresh_dir(run_dir / "val_predictions")
        run_detect(cfg.adapter, ws.abspath(loop["weights_path"]), val_dir,
                   val_pred_dir, iteration)
        preds_by_image, gts_by_image = {}, {}
        for image_id in val_ids:
            entry = ws.image_entry(image_id)
            if entry.label_path is None:
                continue
            gts_by_image[entry.stem] = ws.load_labels(image_id)
            preds_by_image[entry.stem] = load_label_file(
                val_pred_dir / f"{entry.stem}.txt", expect_confidence=True)
        report = evaluate(preds_by_image, gts_by_image,
                          iou_thresholds=cfg.eval_iou_thresholds,
                          grid=confidence_grid(cfg.f1_grid_points))
        (run_dir / "eval.json").write_text(report.to_json(), encoding="utf-8")
        (run_dir / "f1_curve.csv").write_text(f1_curve_csv(report.f1_curve), encoding="utf-8")
        for class_id, by_threshold in report.pr_curves.items():
            for threshold, curve in by_threshold.items():
                name = f"pr_class{class_id}_iou{int(round(threshold * 100))}.csv"
                (run_dir / name).write_text(pr_curve_csv(curve), encoding="utf-8")
        eval_summary = {"best_f1": report.best_f1,
                        "best_f1_confidence": report.best_f1_confidence,
                        "map_50": report.map_50, "map_90": report.map_90}
    else:
        log.warning("iteration %d: no val split or weights, skipping evaluation", iteration)

    originals = int(loop.get("train_original", len(ws.manifest.splits["train"])))
    augmented = int(loop.get("train_augmented", len(ws.manifest.splits["augmented"])))
    record = IterationRecord(
        index=iteration,
        train_size_original=originals,
        train_size_augmented=augmented,
        train_size_total=originals + augmented,
        eval=eval_summary,
        labor=loop.get("labor"),
        detector_run_id=loop.get("detector_run_id"),
        started=loop.get("started"),
        finished=_now(cfg),
        baseline=False,
    )
    ws.manifest.iterations = [r for r in ws.manifest.iterations if r.index != iteration]
    ws.manifest.iterations.append(record)
    ws.manifest.iterations.sort(key=lambda r: r.index)
    loop["phase"] = "evaluated"
    loop["pending_batch"] = []
    best = eval_summary["best_f1"] if eval_summary else float("nan")
    return f"evaluated iteration {iteration}: best F1 {best:.4f}" if eval_summary else \
        f"iteration {iteration} recorded without evaluation"


_NEXT = {
    "seeded": "augmented",
    "evaluated": "augmented",
    "augmented": "trained",
    "trained": "detected",
    "detected": "awaiting_review",
    "awaiting_review": "merged",
    "merged": "evaluated",
}

_BODIES = {
    "augmented": _phase_augment,
    "trained": _phase_train,
    "detected": _phase_detect,
    "awaiting_review": _phase_export,
    "merged": _phase_merge,
    "evaluated": _phase_eval,
}


def is_complete(ws: Workspace) -> bool:
    """True when the last evaluated model already saw the whole train pool."""
    if ws.manifest.loop.get("phase") != "evaluated":
        return False
    if ws.manifest.splits["unlabeled"]:
        return False
    if not ws.manifest.iterations:
        return False
    return ws.manifest.iterations[-1].train_size_original == len(ws.manifest.splits["train"])


def step(ws: Workspace, cfg: LoopConfig) -> StepResult:
    """Advance the loop by exactly one phase; idempotent after a crash."""
    phase = _require_phase(ws, *(_NEXT.keys()))
    iteration = int(ws.manifest.loop.get("iteration", 0))
    if phase in ("seeded", "evaluated"):
        if is_complete(ws):
            return StepResult(phase, iteration, "loop complete: unlabeled pool drained",
                              complete=True)
        if cfg.max_iterations and iteration + 1 > cfg.max_iterations:
            return StepResult(phase, iteration,
                              f"loop complete: reached max_iterations={cfg.max_iterations}",
                              complete=True)
        iteration += 1
    target = _NEXT[phase]
    journal = Journal(ws.root)
    journal.append("begin", iteration, target, _now(cfg))
    message = _BODIES[target](ws, cfg, iteration)
    ws.save()
    journal.append("commit", iteration, target, _now(cfg))
    log.info("iteration %d -> %s: %s", iteration, target, message)
    return StepResult(target, iteration, message)


def run_cycles(ws: Workspace, cfg: LoopConfig, cycles: int) -> list[StepResult]:
    """Run up to ``cycles`` full iterations (through their evaluated phase)."""
    results: list[StepResult] = []
    completed = 0
    while completed < cycles:
        result = step(ws, cfg)
        results.append(result)
        if result.complete:
            break
        if result.phase == "evaluated":
            completed += 1
    return results


def merge_from_review_dir(ws: Workspace, cfg: LoopConfig) -> StepResult:
    """Adopt the (possibly hand-edited) label files of the review bundle.

    This is the file-based finalize: running it means the reviewer is done
    with every item in the bundle.
    """
    _require_phase(ws, "awaiting_review")
    iteration = int(ws.manifest.loop["iteration"])
    bundle = review_dir(ws, iteration)
    corrections: dict[str, list[BoundingBox]] = {}
    for image_id in ws.manifest.loop.get("pending_batch", []):
        entry = ws.image_entry(image_id)
        label_file = bundle / "labels" / f"{entry.stem}.txt"
        if not label_file.is_file():
            raise OrchestratorError(f"review bundle is missing {label_file}")
        corrections[image_id] = load_label_file(label_file)
    journal = Journal(ws.root)
    journal.append("begin", iteration, "merged", _now(cfg))
    merged = ws.merge_reviewed(iteration, corrections)
    ws.manifest.loop["phase"] = "merged"
    ws.save()
    journal.append("commit", iteration, "merged", _now(cfg))
    return StepResult("merged", iteration, f"merged {merged} reviewed image(s)")


# --------------------------------------------------------------------------
# Reporting


REPORT_COLUMNS = ("iteration", "train_original", "train_augmented", "train_total",
                  "best_f1", "map_50", "map_90", "labor_total", "labor_per_image")


def report_rows(ws: Workspace) -> list[dict]:
    rows = []
    for record in ws.manifest.iterations:
        rows.append({
            "iteration": "baseline" if record.baseline else record.index,
            "train_original": record.train_size_original,
            "train_augmented": record.train_size_augmented,
            "train_total": record.train_size_total,
            "best_f1": record.eval["best_f1"] if record.eval else None,
            "map_50": record.eval["map_50"] if record.eval else None,
            "map_90": record.eval["map_90"] if record.eval else None,
            "labor_total": record.labor["total"] if record.labor else None,
            "labor_per_image": record.labor["per_image_mean"] if record.labor else None,
        })
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def report_csv(ws: Workspace) -> str:
    lines = [",".join(REPORT_COLUMNS)]
    for row in report_rows(ws):
        lines.append(",".join(_cell(row[c]) for c in REPORT_COLUMNS))
    return "\n".join(lines) + "\n"


def report_text(ws: Workspace) -> str:
    rows = report_rows(ws)
    if not rows:
        return "no iterations recorded yet\n"
    widths = {c: max(len(c), *(len(_cell(r[c])) for r in rows)) for c in REPORT_COLUMNS}
    header = "  ".join(c.rjust(widths[c]) for c in REPORT_COLUMNS)
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append("  ".join(_cell(row[c]).rjust(widths[c]) for c in REPORT_COLUMNS))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Desk-scale simulation driver


SIM_CSV_COLUMNS = ("iteration", "train_size", "best_f1", "map50", "map90",
                   "labor_total", "labor_per_image")


def _sim_rows(ws: Workspace) -> list[dict]:
    rows = []
    for record in ws.manifest.iterations:
        rows.append({
            "iteration": record.index,
            "train_size": record.train_size_original,
            "best_f1": record.eval["best_f1"] if record.eval else None,
            "map50": record.eval["map_50"] if record.eval else None,
            "map90": record.eval["map_90"] if record.eval else None,
            "labor_total": record.labor["total"] if record.labor else None,
            "labor_per_image": record.labor["per_image_mean"] if record.labor else None,
            "labor_manual": record.labor["manual_total"] if record.labor else None,
            "baseline": record.baseline,
        })
    return rows


def _sim_csv(rows: list[dict]) -> str:
    lines = [",".join(SIM_CSV_COLUMNS)]
    for row in rows:
        cells = []
        for column in SIM_CSV_COLUMNS:
            value = row[column]
            if column == "iteration" and row.get("baseline"):
                value = "baseline"
            cells.append("" if value is None else
                         (f"{value:.6f}" if isinstance(value, float) else str(value)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2


def run_simulation(scenario_dir: Path | str, out_dir: Path | str, seeds: Sequence[int],
                   batch_size: int = 100, model=None, costs: AnnotatorCostModel | None = None,
                   augmentation: AugmentationSpec | None = None,
                   baseline: bool = False) -> dict:
    """Run the full loop against a synthetic scenario, once per seed.

    Returns per-seed rows and the across-seed medians; writes
    ``seed_<s>.csv`` for every run plus ``median.csv`` (and, with
    ``baseline``, a one-row ``baseline.csv``) under ``out_dir``.
    """
    from .simulation import MockDetectorModel, load_scenario

    scenario = load_scenario(scenario_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = model or MockDetectorModel()
    costs = costs or AnnotatorCostModel()

    per_seed: dict[int, list[dict]] = {}
    for seed_value in seeds:
        rows = _run_one_simulation(scenario, out_dir / f"seed_{seed_value}",
                                   seed_value, batch_size, model, costs,
                                   augmentation, full_manual=False)
        per_seed[seed_value] = rows
        (out_dir / f"seed_{seed_value}.csv").write_text(_sim_csv(rows), encoding="utf-8")

    medians: list[dict] = []
    iterations = sorted({row["iteration"] for rows in per_seed.values() for row in rows})
    for index in iterations:
        group = [row for rows in per_seed.values() for row in rows
                 if row["iteration"] == index]
        median_row = {"iteration": index, "baseline": False}
        for column in SIM_CSV_COLUMNS[1:]:
            values = [row[column] for row in group if row[column] is not None]
            median_row[column] = _median(values) if values else None
        medians.append(median_row)
    (out_dir / "median.csv").write_text(_sim_csv(medians), encoding="utf-8")

    result = {"per_seed": per_seed, "median": medians}
    if baseline:
        base_rows = _run_one_simulation(scenario, out_dir / "baseline",
                                        seeds[0] if seeds else 0, batch_size,
                                        model, costs, augmentation, full_manual=True)
        (out_dir / "baseline.csv").write_text(_sim_csv(base_rows), encoding="utf-8")
        result["baseline"] = base_rows
    return result


def _run_one_simulation(scenario, run_dir: Path, seed_value: int, batch_size: int,
                        model, costs: AnnotatorCostModel,
                        augmentation: AugmentationSpec | None,
                        full_manual: bool) -> list[dict]:
    from .simulation import MockDetectorModel

    run_dir.mkdir(parents=True, exist_ok=True)
    model = MockDetectorModel.from_dict({**model.to_dict(), "seed": seed_value})
    model_file = run_dir / "model.json"
    model_file.write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
    truth_dir = scenario.ground_truth_dir
    python = sys.executable
    adapter = AdapterConfig(
        train_command=(f"{python} -m loopmark.mock_detector train "
                       f"--dataset {{dataset_dir}} --weights-out {{weights_out}} "
                       f"--ground-truth {truth_dir} --model {model_file}"),
        detect_command=(f"{python} -m loopmark.mock_detector detect "
                        f"--weights {{weights_in}} --images {{images_dir}} "
                        f"--out {{predictions_dir}} --ground-truth {truth_dir}"),
        timeout_s=300.0,
    )
    aug = augmentation or AugmentationSpec(seed=seed_value, copies_per_image=1)
    cfg = LoopConfig(
        batch_size=batch_size,
        augmentation=aug,
        adapter=adapter,
        deterministic_timestamps=True,
        simulated_annotator=SimulatedAnnotatorConfig(str(truth_dir), costs),
    )

    ws_dir = run_dir / "workspace"
    if ws_dir.exists():
        shutil.rmtree(ws_dir)
    ws = Workspace.init(ws_dir, scenario.label_map)

    truths = {stem: load_label_file(scenario.truth_path(stem))
              for stem in scenario.loop_stems + scenario.val_stems}
    ws.import_images([scenario.image_path(s) for s in scenario.val_stems], "val",
                     labels={s: truths[s] for s in scenario.val_stems})

    seed_stems = scenario.loop_stems if full_manual else scenario.loop_stems[:batch_size]
    rest = [] if full_manual else scenario.loop_stems[batch_size:]
    with ws.lock():
        seed(ws, [scenario.image_path(s) for s in seed_stems],
             scenario.ground_truth_dir, cfg)
        if rest:
            ws.import_images([scenario.image_path(s) for s in rest], "unlabeled")
        while True:
            result = step(ws, cfg)
            if result.complete:
                break
    if full_manual:
        manual = review_batch({}, {s: truths[s] for s in seed_stems}, costs)
        record = ws.manifest.iterations[-1]
        record.baseline = True
        record.labor = {"total": manual.total_cost,
                        "per_image_mean": manual.per_image_mean,
                        "manual_total": manual.manual_cost,
                        "images": len(seed_stems), "ops": manual.ops}
        ws.save()
    return _sim_rows(ws)
