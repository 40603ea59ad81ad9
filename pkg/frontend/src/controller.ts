/**
 * Headless review flow: session, item navigation, save, accept, finalize.
 *
 * Holds no DOM references so the full annotator workflow is scriptable in
 * tests; the app layer only renders this controller's state and forwards
 * user gestures.
 */

import { ApiError, FinalizeResponse, ItemStatus, ReviewApi, SessionInfo } from "./api";
import { EditorState, emptyState, itemsAllAboveThreshold, loadItem, wireBoxes } from "./state";

export type FinalizeOutcome =
  | { ok: true; result: FinalizeResponse }
  | { ok: false; pending: string[] };

export class ReviewController {
  session: SessionInfo | null = null;
  items: ItemStatus[] = [];
  labelMap: string[] = [];
  editor: EditorState = emptyState();
  lastError: string | null = null;

  constructor(private api: ReviewApi) {}

  async load(): Promise<void> {
    this.session = await this.api.session();
    this.items = await this.api.items();
    this.labelMap = await this.api.labelMap();
  }

  get currentIndex(): number {
    return this.items.findIndex((item) => item.image_id === this.editor.itemId);
  }

  async open(imageId: string): Promise<void> {
    const predictions = await this.api.predictions(imageId);
    loadItem(this.editor, imageId, predictions.width, predictions.height, predictions.boxes);
  }

  async openByOffset(offset: number): Promise<void> {
    if (!this.items.length) return;
    const index = Math.max(0, Math.min(this.items.length - 1, this.currentIndex + offset));
    await this.open(this.items[index].image_id);
  }

  /** PUT the full local label list; on rejection, restore the server state. */
  async save(): Promise<ItemStatus | null> {
    if (this.editor.itemId === null) return null;
    const imageId = this.editor.itemId;
    try {
      const status = await this.api.putLabels(imageId, wireBoxes(this.editor));
      this.lastError = null;
      this.editor.dirty = false;
      this.editor.undoStack = [];
      this.replaceItem(status);
      return status;
    } catch (error) {
      if (error instanceof ApiError) {
        this.lastError = `save rejected (${error.status}): ${JSON.stringify(error.detail)}`;
        await this.open(imageId); // back to the last server-confirmed state
        return null;
      }
      throw error;
    }
  }

  async acceptItem(imageId: string): Promise<ItemStatus> {
    const status = await this.api.accept(imageId);
    this.replaceItem(status);
    return status;
  }

  /** Accept every item whose predictions all clear the threshold. */
  async acceptAllAbove(threshold: number): Promise<string[]> {
    const byId: Record<string, import("./api").WirePrediction[]> = {};
    for (const item of this.items) {
      byId[item.image_id] = (await this.api.predictions(item.image_id)).boxes;
    }
    const accepted: string[] = [];
    for (const imageId of itemsAllAboveThreshold(byId, threshold)) {
      const item = this.items.find((candidate) => candidate.image_id === imageId);
      if (item && item.status === "pending") {
        await this.acceptItem(imageId);
        accepted.push(imageId);
      }
    }
    return accepted;
  }

  async finalize(): Promise<FinalizeOutcome> {
    try {
      const result = await this.api.finalize();
      return { ok: true, result };
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        const detail = error.detail as { pending?: string[] } | undefined;
        return { ok: false, pending: detail?.pending ?? [] };
      }
      throw error;
    }
  }

  pendingItems(): ItemStatus[] {
    return this.items.filter((item) => item.status === "pending");
  }

  private replaceItem(status: ItemStatus): void {
    const index = this.items.findIndex((item) => item.image_id === status.image_id);
    if (index >= 0) {
      this.items[index] = status;
    }
  }
}
