/**
 * Canvas rendering and pointer gestures for the box editor.
 *
 * All geometry/state mutation lives in state.ts; this module only draws and
 * translates pointer events into those mutations.
 */

import {
  EditorState,
  deleteSelected,
  drawBox,
  moveSelected,
  resizeSelected,
  select,
  undo,
} from "./state";
import { Handle, handlePositions, hitBox, hitHandle } from "./geometry";

export const CLASS_COLORS = ["#e3923c", "#4caf50", "#5b7bd0", "#c75b9b", "#b8b23a"];

export function classColor(classId: number): string {
  return CLASS_COLORS[classId % CLASS_COLORS.length];
}

type Drag =
  | { kind: "move"; lastX: number; lastY: number }
  | { kind: "resize"; handle: Handle; lastX: number; lastY: number }
  | { kind: "draw"; startX: number; startY: number; curX: number; curY: number };

export class CanvasEditor {
  private image: HTMLImageElement | null = null;
  private drag: Drag | null = null;
  drawClassId = 0;

  constructor(
    private canvas: HTMLCanvasElement,
    private state: EditorState,
    private onChange: () => void,
  ) {
    canvas.addEventListener("pointerdown", (event) => this.pointerDown(event));
    canvas.addEventListener("pointermove", (event) => this.pointerMove(event));
    canvas.addEventListener("pointerup", () => this.pointerUp());
    canvas.addEventListener("pointerleave", () => this.pointerUp());
  }

  setImage(image: HTMLImageElement | null): void {
    this.image = image;
    this.render();
  }

  private canvasPoint(event: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    const scaleX = this.canvas.width / rect.width;
    const scaleY = this.canvas.height / rect.height;
    return [(event.clientX - rect.left) * scaleX, (event.clientY - rect.top) * scaleY];
  }

  private pointerDown(event: PointerEvent): void {
    const [px, py] = this.canvasPoint(event);
    const state = this.state;
    if (state.selected !== null) {
      const handle = hitHandle(state.boxes[state.selected], px, py);
      if (handle) {
        this.drag = { kind: "resize", handle, lastX: px, lastY: py };
        return;
      }
    }
    const hit = hitBox(state.boxes, px, py);
    if (hit !== null) {
      select(state, hit);
      this.drag = { kind: "move", lastX: px, lastY: py };
    } else {
      select(state, null);
      this.drag = { kind: "draw", startX: px, startY: py, curX: px, curY: py };
    }
    this.onChange();
    this.render();
  }

  private pointerMove(event: PointerEvent): void {
    if (!this.drag) return;
    const [px, py] = this.canvasPoint(event);
    const state = this.state;
    if (this.drag.kind === "move") {
      moveSelected(state, px - this.drag.lastX, py - this.drag.lastY);
      this.drag.lastX = px;
      this.drag.lastY = py;
    } else if (this.drag.kind === "resize") {
      resizeSelected(state, this.drag.handle, px - this.drag.lastX, py - this.drag.lastY);
      this.drag.lastX = px;
      this.drag.lastY = py;
    } else {
      this.drag.curX = px;
      this.drag.curY = py;
    }
    this.onChange();
    this.render();
  }

  private pointerUp(): void {
    const drag = this.drag;
    this.drag = null;
    if (drag?.kind === "draw") {
      const w = Math.abs(drag.curX - drag.startX);
      const h = Math.abs(drag.curY - drag.startY);
      // A plain click (no drag) is a deselect, not a zero-size box.
      if (w >= 3 && h >= 3) {
        drawBox(
          this.state,
          Math.min(drag.startX, drag.curX),
          Math.min(drag.startY, drag.curY),
          w,
          h,
          this.drawClassId,
        );
      }
      this.onChange();
      this.render();
    }
  }

  deleteSelection(): void {
    deleteSelected(this.state);
    this.onChange();
    this.render();
  }

  undoEdit(): void {
    undo(this.state);
    this.onChange();
    this.render();
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image) {
      ctx.drawImage(this.image, 0, 0, this.canvas.width, this.canvas.height);
    } else {
      ctx.fillStyle = "#1c1f26";
      ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    }
    const state = this.state;
    state.boxes.forEach((box, index) => {
      const color = classColor(box.classId);
      ctx.lineWidth = index === state.selected ? 3 : 2;
      ctx.strokeStyle = color;
      ctx.setLineDash(box.preAccepted ? [6, 4] : []);
      ctx.strokeRect(box.x, box.y, box.w, box.h);
      ctx.setLineDash([]);
      if (box.confidence !== null) {
        const label = box.confidence.toFixed(2);
        ctx.font = "12px sans-serif";
        const width = ctx.measureText(label).width + 6;
        ctx.fillStyle = box.preAccepted ? "#2e7d32" : "#333a";
        ctx.fillRect(box.x, Math.max(box.y - 16, 0), width, 16);
        ctx.fillStyle = "#fff";
        ctx.fillText(label, box.x + 3, Math.max(box.y - 4, 12));
      }
      if (index === state.selected) {
        ctx.fillStyle = color;
        for (const [hx, hy] of Object.values(handlePositions(box))) {
          ctx.fillRect(hx - 4, hy - 4, 8, 8);
        }
      }
    });
    if (this.drag?.kind === "draw") {
      ctx.strokeStyle = classColor(this.drawClassId);
      ctx.setLineDash([4, 4]);
      ctx.strokeRect(
        Math.min(this.drag.startX, this.drag.curX),
        Math.min(this.drag.startY, this.drag.curY),
        Math.abs(this.drag.curX - this.drag.startX),
        Math.abs(this.drag.curY - this.drag.startY),
      );
      ctx.setLineDash([]);
    }
  }
}
