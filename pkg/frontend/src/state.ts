/**
 * Editor state for the item under review: boxes, selection, undo.
 *
 * Edits are optimistic and local; `wireBoxes` produces the full-replacement
 * payload for PUT. The undo stack snapshots box lists, so undoing past the
 * last save returns the canvas to the server-confirmed state.
 */

import type { WireBox, WirePrediction } from "./api";
import { clampPixelBox, Handle, PixelBox, resizeByHandle, toNormalized, toPixels } from "./geometry";

export interface EditorBox extends PixelBox {
  confidence: number | null;
  preAccepted: boolean;
}

export interface EditorState {
  itemId: string | null;
  imageWidth: number;
  imageHeight: number;
  boxes: EditorBox[];
  selected: number | null;
  undoStack: EditorBox[][];
  dirty: boolean;
  confidenceFloor: number; // display-only: hiding a box never deletes it
}

export function emptyState(): EditorState {
  return {
    itemId: null,
    imageWidth: 1,
    imageHeight: 1,
    boxes: [],
    selected: null,
    undoStack: [],
    dirty: false,
    confidenceFloor: 0,
  };
}

function snapshot(boxes: EditorBox[]): EditorBox[] {
  return boxes.map((box) => ({ ...box }));
}

export function loadItem(
  state: EditorState,
  itemId: string,
  width: number,
  height: number,
  predictions: WirePrediction[],
): void {
  state.itemId = itemId;
  state.imageWidth = width;
  state.imageHeight = height;
  state.boxes = predictions.map((pred) => ({
    ...toPixels(pred, width, height),
    confidence: pred.confidence,
    preAccepted: pred.pre_accepted,
  }));
  state.selected = null;
  state.undoStack = [];
  state.dirty = false;
}

function beginEdit(state: EditorState): void {
  state.undoStack.push(snapshot(state.boxes));
  state.dirty = true;
}

export function undo(state: EditorState): void {
  const previous = state.undoStack.pop();
  if (previous !== undefined) {
    state.boxes = previous;
    state.selected = null;
    state.dirty = state.undoStack.length > 0;
  }
}

export function select(state: EditorState, index: number | null): void {
  state.selected = index;
}

export function moveSelected(state: EditorState, dx: number, dy: number): void {
  if (state.selected === null) return;
  beginEdit(state);
  const box = state.boxes[state.selected];
  const moved = clampPixelBox(
    { ...box, x: box.x + dx, y: box.y + dy },
    state.imageWidth,
    state.imageHeight,
  );
  state.boxes[state.selected] = { ...box, ...moved, confidence: null };
}

export function resizeSelected(state: EditorState, handle: Handle, dx: number, dy: number): void {
  if (state.selected === null) return;
  beginEdit(state);
  const box = state.boxes[state.selected];
  const resized = clampPixelBox(
    resizeByHandle(box, handle, dx, dy),
    state.imageWidth,
    state.imageHeight,
  );
  state.boxes[state.selected] = { ...box, ...resized, confidence: null };
}

export function deleteSelected(state: EditorState): void {
  if (state.selected === null) return;
  beginEdit(state);
  state.boxes.splice(state.selected, 1);
  state.selected = null;
}

export function drawBox(
  state: EditorState,
  x: number,
  y: number,
  w: number,
  h: number,
  classId: number,
): void {
  beginEdit(state);
  const clamped = clampPixelBox({ classId, x, y, w, h }, state.imageWidth, state.imageHeight);
  state.boxes.push({ ...clamped, confidence: null, preAccepted: false });
  state.selected = state.boxes.length - 1;
}

export function cycleClass(state: EditorState, classCount: number): void {
  if (state.selected === null || classCount < 1) return;
  beginEdit(state);
  const box = state.boxes[state.selected];
  // Class ids never leave the served label map.
  state.boxes[state.selected] = { ...box, classId: (box.classId + 1) % classCount };
}

export function wireBoxes(state: EditorState): WireBox[] {
  return state.boxes.map((box) => toNormalized(box, state.imageWidth, state.imageHeight));
}

export function visibleBoxes(state: EditorState): { box: EditorBox; index: number }[] {
  return state.boxes
    .map((box, index) => ({ box, index }))
    .filter(
      ({ box }) =>
        box.confidence === null ||
        box.confidence >= state.confidenceFloor ||
        state.selected !== null,
    );
}

/**
 * Ids of the items whose every prediction clears the threshold; an item
 * with no predictions clears vacuously.
 */
export function itemsAllAboveThreshold(
  predictionsById: Record<string, WirePrediction[]>,
  threshold: number,
): string[] {
  return Object.keys(predictionsById)
    .filter((id) => predictionsById[id].every((pred) => pred.confidence >= threshold))
    .sort();
}
