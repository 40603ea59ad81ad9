"""HTTP review service over a workspace awaiting review.

Read endpoints serve snapshots of the last committed manifest; corrections
are staged as one JSON file per image under review/iter_<i>/staging/, so
they survive restarts and nothing touches the train pool until finalize,
which runs the same atomic merge the rest of the loop uses.
"""

from __future__ import annotations

import datetime as _dt
import json
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles

from ..labels import BoundingBox, LabelFormatError, check_box, check_class_ids
from ..orchestrator import Journal, batch_predictions, preaccepted_items, review_dir
from ..workspace import Workspace
from .schemas import (
    FinalizeResponse,
    ItemStatus,
    LabelMapResponse,
    LabelsIn,
    PredictionsResponse,
    PredictionOut,
    SessionInfo,
)


def _load_review_workspace(root: Path) -> tuple[Workspace, int]:
    ws = Workspace.load(root)
    phase = ws.manifest.loop.get("phase", "unseeded")
    if phase != "awaiting_review":
        raise HTTPException(status_code=409,
                            detail={"error": "workspace is not awaiting review",
                                    "phase": phase})
    return ws, int(ws.manifest.loop["iteration"])


def _staging_path(ws: Workspace, iteration: int, image_id: str) -> Path:
    staging = review_dir(ws, iteration) / "staging"
    staging.mkdir(parents=True, exist_ok=True)
    return staging / f"{image_id}.json"


def _read_staged(ws: Workspace, iteration: int, image_id: str) -> dict | None:
    path = _staging_path(ws, iteration, image_id)
    if not path.is_file():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def _item_status(ws: Workspace, iteration: int, image_id: str,
                 pre: dict, n_predictions: int) -> ItemStatus:
    entry = ws.image_entry(image_id)
    staged = _read_staged(ws, iteration, image_id)
    pre_accepted = bool(pre.get(image_id, {}).get("item"))
    if staged is not None:
        status = staged["status"]
    elif pre_accepted:
        status = "accepted"
    else:
        status = "pending"
    return ItemStatus(image_id=image_id, stem=entry.stem, status=status,
                      predictions=n_predictions, pre_accepted=pre_accepted)


def create_app(workspace_root: Path | str, static_dir: Path | str | None = None) -> FastAPI:
    root = Path(workspace_root)
    app = FastAPI(title="loopmark review service", version="0.1.0")
    write_lock = threading.Lock()

    @app.get("/api/session", response_model=SessionInfo)
    def get_session() -> SessionInfo:
        ws, iteration = _load_review_workspace(root)
        pre = preaccepted_items(ws, iteration)
        preds = batch_predictions(ws, iteration)
        counts = {"pending": 0, "edited": 0, "accepted": 0}
        for image_id in ws.manifest.loop["pending_batch"]:
            item = _item_status(ws, iteration, image_id, pre, len(preds[image_id]))
            counts[item.status] += 1
        pre_path = review_dir(ws, iteration) / "preaccepted.json"
        auto_conf = None
        if pre_path.is_file():
            auto_conf = json.loads(pre_path.read_text(encoding="utf-8")).get("confidence")
        return SessionInfo(iteration=iteration, phase="awaiting_review",
                           total=sum(counts.values()), auto_accept_confidence=auto_conf,
                           **counts)

    @app.get("/api/items", response_model=list[ItemStatus])
    def get_items() -> list[ItemStatus]:
        ws, iteration = _load_review_workspace(root)
        pre = preaccepted_items(ws, iteration)
        preds = batch_predictions(ws, iteration)
        return [_item_status(ws, iteration, image_id, pre, len(preds[image_id]))
                for image_id in ws.manifest.loop["pending_batch"]]

    def _require_item(ws: Workspace, image_id: str) -> None:
        if image_id not in ws.manifest.loop.get("pending_batch", []):
            raise HTTPException(status_code=404,
                                detail=f"image {image_id} is not part of this review")

    @app.get("/api/items/{image_id}/image")
    def get_image(image_id: str) -> FileResponse:
        ws, _ = _load_review_workspace(root)
        _require_item(ws, image_id)
        entry = ws.image_entry(image_id)
        suffix = Path(entry.path).suffix.lower()
        media = "image/jpeg" if suffix in (".jpg", ".jpeg") else "image/png"
        return FileResponse(ws.abspath(entry.path), media_type=media)

    @app.get("/api/items/{image_id}/predictions", response_model=PredictionsResponse)
    def get_predictions(image_id: str) -> PredictionsResponse:
        ws, iteration = _load_review_workspace(root)
        _require_item(ws, image_id)
        entry = ws.image_entry(image_id)
        pre = preaccepted_items(ws, iteration).get(image_id, {})
        marks = pre.get("boxes", [])
        boxes = []
        for k, pred in enumerate(batch_predictions(ws, iteration)[image_id]):
            boxes.append(PredictionOut(
                class_id=pred.box.class_id, cx=pred.box.cx, cy=pred.box.cy,
                w=pred.box.w, h=pred.box.h, confidence=pred.confidence,
                pre_accepted=bool(marks[k]) if k < len(marks) else False))
        return PredictionsResponse(image_id=image_id, stem=entry.stem,
                                   width=entry.width, height=entry.height, boxes=boxes)

    @app.get("/api/labelmap", response_model=LabelMapResponse)
    def get_labelmap() -> LabelMapResponse:
        ws, _ = _load_review_workspace(root)
        return LabelMapResponse(names=list(ws.manifest.label_map.names))

    @app.put("/api/items/{image_id}/labels", response_model=ItemStatus)
    def put_labels(image_id: str, payload: LabelsIn) -> ItemStatus:
        ws, iteration = _load_review_workspace(root)
        _require_item(ws, image_id)
        boxes = [BoundingBox(b.class_id, b.cx, b.cy, b.w, b.h) for b in payload.boxes]
        try:
            for box in boxes:
                check_box(box)
            check_class_ids(boxes, ws.manifest.label_map)
        except LabelFormatError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        staged = {"status": "edited",
                  "boxes": [[b.class_id, b.cx, b.cy, b.w, b.h] for b in boxes],
                  "updated": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
        with write_lock:
            _staging_path(ws, iteration, image_id).write_text(
                json.dumps(staged, indent=2) + "\n", encoding="utf-8")
        pre = preaccepted_items(ws, iteration)
        preds = batch_predictions(ws, iteration)
        return _item_status(ws, iteration, image_id, pre, len(preds[image_id]))

    @app.post("/api/items/{image_id}/accept", response_model=ItemStatus)
    def accept_item(image_id: str) -> ItemStatus:
        ws, iteration = _load_review_workspace(root)
        _require_item(ws, image_id)
        staged = _read_staged(ws, iteration, image_id)
        if staged is not None and staged["status"] == "edited":
            raise HTTPException(status_code=409,
                                detail="item already edited; save or discard the edit")
        marker = {"status": "accepted", "boxes": None,
                  "updated": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
        with write_lock:
            _staging_path(ws, iteration, image_id).write_text(
                json.dumps(marker, indent=2) + "\n", encoding="utf-8")
        pre = preaccepted_items(ws, iteration)
        preds = batch_predictions(ws, iteration)
        return _item_status(ws, iteration, image_id, pre, len(preds[image_id]))

    @app.post("/api/finalize", response_model=FinalizeResponse)
    def finalize() -> FinalizeResponse:
        with write_lock:
            ws, iteration = _load_review_workspace(root)
            pre = preaccepted_items(ws, iteration)
            preds = batch_predictions(ws, iteration)
            corrections: dict[str, list[BoundingBox]] = {}
            pending: list[str] = []
            for image_id in ws.manifest.loop["pending_batch"]:
                staged = _read_staged(ws, iteration, image_id)
                if staged is not None and staged["status"] == "edited":
                    corrections[image_id] = [BoundingBox(int(b[0]), *map(float, b[1:]))
                                             for b in staged["boxes"]]
                elif (staged is not None and staged["status"] == "accepted") \
                        or pre.get(image_id, {}).get("item"):
                    corrections[image_id] = [p.box for p in preds[image_id]]
                else:
                    pending.append(image_id)
            if pending:
                raise HTTPException(status_code=409,
                                    detail={"error": "items still pending review",
                                            "pending": pending})
            now = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
            with ws.lock():
                journal = Journal(ws.root)
                journal.append("begin", iteration, "merged", now)
                merged = ws.merge_reviewed(iteration, corrections)
                ws.manifest.loop["phase"] = "merged"
                ws.save()
                journal.append("commit", iteration, "merged", now)
        return FinalizeResponse(merged=merged, iteration=iteration, phase="merged")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
