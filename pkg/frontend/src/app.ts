/**
 * DOM shell: item list, canvas editor, toolbar, finalize view, shortcuts.
 */

import { HttpApi } from "./api";
import { ReviewController } from "./controller";
import { CanvasEditor, classColor } from "./editor";
import { cycleClass } from "./state";

const SHORTCUTS: [string, string][] = [
  ["Enter", "accept item as shown"],
  ["s", "save edits"],
  ["Delete / Backspace", "delete selected box"],
  ["u", "undo"],
  ["c", "cycle class of selected box"],
  ["ArrowRight / ArrowLeft", "next / previous image"],
];

export class App {
  private controller: ReviewController;
  private editor!: CanvasEditor;
  private root: HTMLElement;

  constructor(root: HTMLElement) {
    this.root = root;
    this.controller = new ReviewController(new HttpApi());
  }

  async start(): Promise<void> {
    try {
      await this.controller.load();
    } catch (error) {
      this.root.innerHTML = `<div class="banner error">review service unavailable or ` +
        `not awaiting review: ${String(error)}</div>`;
      return;
    }
    this.buildLayout();
    if (this.controller.items.length) {
      await this.openItem(this.controller.items[0].image_id);
    }
    this.refresh();
  }

  private buildLayout(): void {
    this.root.innerHTML = `
      <header>
        <h1>review &mdash; iteration <span id="iteration"></span></h1>
        <div id="progress"></div>
        <button id="finalize">finalize iteration</button>
      </header>
      <div id="banner" class="banner" hidden></div>
      <main>
        <aside id="items"></aside>
        <section id="workbench">
          <canvas id="canvas" width="640" height="480"></canvas>
          <div id="toolbar">
            <button id="save">save (s)</button>
            <button id="accept">accept (Enter)</button>
            <button id="delete">delete box</button>
            <button id="undo">undo (u)</button>
            <button id="cycle">cycle class (c)</button>
            <label>accept all &ge;
              <input id="threshold" type="number" min="0" max="1" step="0.05" value="0.9">
              <button id="accept-all">go</button>
            </label>
          </div>
          <div id="legend"></div>
          <details id="help"><summary>keyboard shortcuts</summary><ul>${SHORTCUTS.map(
            ([key, what]) => `<li><kbd>${key}</kbd> ${what}</li>`,
          ).join("")}</ul></details>
        </section>
      </main>`;

    const canvas = this.root.querySelector<HTMLCanvasElement>("#canvas")!;
    this.editor = new CanvasEditor(canvas, this.controller.editor, () => this.refreshToolbar());

    this.bind("#finalize", () => void this.finalize());
    this.bind("#save", () => void this.save());
    this.bind("#accept", () => void this.acceptCurrent());
    this.bind("#delete", () => this.editor.deleteSelection());
    this.bind("#undo", () => this.editor.undoEdit());
    this.bind("#cycle", () => {
      cycleClass(this.controller.editor, this.controller.labelMap.length);
      this.editor.render();
    });
    this.bind("#accept-all", () => void this.acceptAll());

    document.addEventListener("keydown", (event) => void this.onKey(event));
  }

  private bind(selector: string, handler: () => void): void {
    this.root.querySelector<HTMLElement>(selector)!.addEventListener("click", handler);
  }

  private async onKey(event: KeyboardEvent): Promise<void> {
    if (event.target instanceof HTMLInputElement) return;
    switch (event.key) {
      case "Enter":
        event.preventDefault();
        await this.acceptCurrent();
        break;
      case "s":
        await this.save();
        break;
      case "Delete":
      case "Backspace":
        this.editor.deleteSelection();
        break;
      case "u":
        this.editor.undoEdit();
        break;
      case "c":
        cycleClass(this.controller.editor, this.controller.labelMap.length);
        this.editor.render();
        break;
      case "ArrowRight":
        await this.moveBy(1);
        break;
      case "ArrowLeft":
        await this.moveBy(-1);
        break;
    }
  }

  private async moveBy(offset: number): Promise<void> {
    if (this.controller.editor.dirty) {
      await this.save(); // save-on-navigate
    }
    await this.controller.openByOffset(offset);
    await this.loadImage();
    this.refresh();
  }

  private async openItem(imageId: string): Promise<void> {
    await this.controller.open(imageId);
    await this.loadImage();
    this.refresh();
  }

  private loadImage(): Promise<void> {
    const itemId = this.controller.editor.itemId;
    if (!itemId) return Promise.resolve();
    const canvas = this.root.querySelector<HTMLCanvasElement>("#canvas")!;
    canvas.width = this.controller.editor.imageWidth;
    canvas.height = this.controller.editor.imageHeight;
    return new Promise((resolve) => {
      const image = new Image();
      image.onload = () => {
        this.editor.setImage(image);
        resolve();
      };
      image.onerror = () => {
        this.banner(`image unavailable for ${itemId}`, true);
        this.editor.setImage(null);
        resolve();
      };
      image.src = new HttpApi().imageUrl(itemId);
    });
  }

  private async save(): Promise<void> {
    const status = await this.controller.save();
    if (status === null && this.controller.lastError) {
      this.banner(this.controller.lastError, true);
      this.editor.render();
    } else {
      this.banner("saved", false);
    }
    this.refresh();
  }

  private async acceptCurrent(): Promise<void> {
    const itemId = this.controller.editor.itemId;
    if (!itemId) return;
    if (this.controller.editor.dirty) {
      await this.save();
    } else {
      await this.controller.acceptItem(itemId);
    }
    await this.moveBy(1);
  }

  private async acceptAll(): Promise<void> {
    const input = this.root.querySelector<HTMLInputElement>("#threshold")!;
    const accepted = await this.controller.acceptAllAbove(Number(input.value));
    this.banner(`accepted ${accepted.length} item(s) at threshold ${input.value}`, false);
    this.refresh();
  }

  private async finalize(): Promise<void> {
    const outcome = await this.controller.finalize();
    if (outcome.ok) {
      this.root.innerHTML = `<div class="banner">iteration ${outcome.result.iteration} ` +
        `merged ${outcome.result.merged} item(s); the loop can now retrain. ` +
        `This session is closed.</div>`;
    } else {
      this.banner(`finalize blocked; still pending: ${outcome.pending.join(", ")}`, true);
      this.refresh();
    }
  }

  private banner(text: string, isError: boolean): void {
    const banner = this.root.querySelector<HTMLElement>("#banner");
    if (!banner) return;
    banner.textContent = text;
    banner.classList.toggle("error", isError);
    banner.hidden = false;
  }

  private refreshToolbar(): void {
    const progress = this.root.querySelector<HTMLElement>("#progress");
    if (progress && this.controller.editor.dirty) {
      progress.textContent = "unsaved edits";
    }
  }

  private refresh(): void {
    const iteration = this.root.querySelector<HTMLElement>("#iteration");
    if (iteration && this.controller.session) {
      iteration.textContent = String(this.controller.session.iteration);
    }
    const pending = this.controller.pendingItems().length;
    const progress = this.root.querySelector<HTMLElement>("#progress");
    if (progress) {
      progress.textContent = `${this.controller.items.length - pending}/${this.controller.items.length} reviewed`;
    }
    const finalize = this.root.querySelector<HTMLButtonElement>("#finalize");
    if (finalize) {
      finalize.disabled = pending > 0;
      finalize.title = pending ? `${pending} item(s) pending` : "merge reviewed labels";
    }
    const list = this.root.querySelector<HTMLElement>("#items");
    if (list) {
      list.innerHTML = "";
      for (const item of this.controller.items) {
        const row = document.createElement("button");
        row.className = `item ${item.status}` +
          (item.image_id === this.controller.editor.itemId ? " current" : "");
        row.textContent = `${item.stem} (${item.predictions}) ${item.status}`;
        row.addEventListener("click", () => void this.openItem(item.image_id));
        list.appendChild(row);
      }
    }
    const legend = this.root.querySelector<HTMLElement>("#legend");
    if (legend) {
      legend.innerHTML = this.controller.labelMap
        .map(
          (name, classId) =>
            `<span class="chip" style="border-color:${classColor(classId)}">${classId}: ${name}</span>`,
        )
        .join(" ");
    }
    this.editor?.render();
  }
}
