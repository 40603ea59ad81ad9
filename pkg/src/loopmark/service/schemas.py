"""Request/response models of the review API."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class BoxIn(BaseModel):
    class_id: int = Field(ge=0)
    cx: float
    cy: float
    w: float
    h: float


class LabelsIn(BaseModel):
    """Full-replacement label list for one image."""

    boxes: list[BoxIn]


class PredictionOut(BaseModel):
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float
    pre_accepted: bool = False


class PredictionsResponse(BaseModel):
    image_id: str
    stem: str
    width: int
    height: int
    boxes: list[PredictionOut]


ItemState = Literal["pending", "edited", "accepted"]


class ItemStatus(BaseModel):
    image_id: str
    stem: str
    status: ItemState
    predictions: int
    pre_accepted: bool = False


class SessionInfo(BaseModel):
    iteration: int
    phase: str
    total: int
    pending: int
    edited: int
    accepted: int
    auto_accept_confidence: float | None = None


class LabelMapResponse(BaseModel):
    names: list[str]


class FinalizeResponse(BaseModel):
    merged: int
    iteration: int
    phase: str
