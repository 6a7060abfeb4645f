/** DOM shell: one image at a time on a canvas, minutiae as direction
 * glyphs, keyboard/toolbar editing, save and review actions.
 *
 * Keys: e/b toggle kind, 1/2/3 set minutia quality (poor/fair/good),
 * delete removes the selection, ctrl+z / ctrl+y undo/redo.
 */

import { MarkingApi, RevisionConflictError, ValidationError } from "./api.js";
import { CanvasSession, SingleImageGuard, qualityLabel } from "./session.js";
import {
  ViewTransform,
  angleFromDrag,
  displayScale,
  imageToScreen,
  quantizeAngle,
  screenToImage,
} from "./transform.js";
import { ImageRefJson, QualityLevel, RenderMeta } from "./types.js";

const MINUTIA_COLORS: Record<string, string> = { ending: "#e33", bifurcation: "#36c" };
const HANDLE_LENGTH = 18;

export class MarkingApp {
  private session: CanvasSession | null = null;
  private meta: RenderMeta | null = null;
  private bitmap: ImageBitmap | null = null;
  private view: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };
  private guard = new SingleImageGuard();
  private draggingAngleFor: number | null = null;
  private dragOrigin: { sx: number; sy: number } | null = null;
  /** Screen-cm calibration: persisted per client after ruler measurement. */
  private calibration = Number(localStorage.getItem("minumark.calibration") ?? "1") || 1;

  constructor(
    private readonly api: MarkingApi,
    private readonly canvas: HTMLCanvasElement,
    private readonly statusLine: HTMLElement,
  ) {
    canvas.addEventListener("mousedown", (e) => this.onMouseDown(e));
    canvas.addEventListener("mousemove", (e) => this.onMouseMove(e));
    canvas.addEventListener("mouseup", (e) => this.onMouseUp(e));
    window.addEventListener("keydown", (e) => this.onKey(e));
  }

  setCalibration(factor: number): void {
    this.calibration = factor;
    localStorage.setItem("minumark.calibration", String(factor));
    if (this.meta) this.fitToPhysicalHeight();
    this.draw();
  }

  async open(image: ImageRefJson): Promise<void> {
    this.guard.acquire(image);
    try {
      const { png, meta } = await this.api.getImage(image.db, image.finger, image.impression);
      const state = await this.api.getTemplate(image.db, image.finger, image.impression);
      this.bitmap = await createImageBitmap(new Blob([png], { type: "image/png" }));
      this.meta = meta;
      this.session = CanvasSession.fromState(state, meta.widthPx, meta.heightPx);
      this.fitToPhysicalHeight();
      this.draw();
      this.note(`loaded ${image.db} ${image.finger}_${image.impression} (revision ${state.revision}, ${state.status})`);
    } catch (error) {
      this.guard.release();
      throw error;
    }
  }

  close(): void {
    this.session = null;
    this.bitmap = null;
    this.meta = null;
    this.guard.release();
    this.draw();
  }

  /** Honor the fixed physical display height the workflow prescribes. */
  private fitToPhysicalHeight(): void {
    if (!this.meta) return;
    const scale = displayScale(this.meta.heightPx, this.meta.targetDisplayCm, this.calibration);
    this.view = { scale, offsetX: 0, offsetY: 0 };
    this.canvas.width = Math.ceil(this.meta.widthPx * scale);
    this.canvas.height = Math.ceil(this.meta.heightPx * scale);
  }

  // -- input ----------------------------------------------------------------

  private canvasPoint(event: MouseEvent): { sx: number; sy: number } {
    const rect = this.canvas.getBoundingClientRect();
    return { sx: event.clientX - rect.left, sy: event.clientY - rect.top };
  }

  private hitMinutia(sx: number, sy: number): number | null {
    if (!this.session) return null;
    for (let k = this.session.minutiae.length - 1; k >= 0; k--) {
      const m = this.session.minutiae[k];
      const p = imageToScreen(this.view, m.x, m.y);
      if (Math.hypot(p.sx - sx, p.sy - sy) <= 6) return k;
    }
    return null;
  }

  private onMouseDown(event: MouseEvent): void {
    if (!this.session) return;
    const { sx, sy } = this.canvasPoint(event);
    const hit = this.hitMinutia(sx, sy);
    if (hit !== null) {
      this.session.selection = hit;
      this.draggingAngleFor = hit;
      this.dragOrigin = { sx, sy };
      this.draw();
      return;
    }
    const { x, y } = screenToImage(this.view, sx, sy);
    try {
      const index = this.session.placeMinutia(x, y);
      this.draggingAngleFor = index;
      this.dragOrigin = { sx, sy };
      this.note(`minutia ${index + 1} at (${x}, ${y}); drag to set its angle`);
    } catch (error) {
      this.note(String(error)); // out-of-bounds placement is refused visibly
    }
    this.draw();
  }

  private onMouseMove(event: MouseEvent): void {
    if (!this.session || this.draggingAngleFor === null || !this.dragOrigin) return;
    const { sx, sy } = this.canvasPoint(event);
    const dx = sx - this.dragOrigin.sx;
    const dy = sy - this.dragOrigin.sy;
    if (Math.hypot(dx, dy) >= 4) {
      this.session.setAngle(this.draggingAngleFor, angleFromDrag(dx, dy));
      this.draw();
    }
  }

  private onMouseUp(_event: MouseEvent): void {
    if (this.session && this.draggingAngleFor !== null) {
      const m = this.session.minutiae[this.draggingAngleFor];
      if (m?.angleDeg != null) {
        this.note(
          `minutia ${this.draggingAngleFor + 1}: ${m.angleDeg.toFixed(1)} deg ` +
            `(stores as unit ${quantizeAngle(m.angleDeg)})`,
        );
      }
    }
    this.draggingAngleFor = null;
    this.dragOrigin = null;
  }

  private onKey(event: KeyboardEvent): void {
    const session = this.session;
    if (!session) return;
    const selected = session.selection;
    if (event.ctrlKey && event.key === "z") {
      session.undo();
    } else if (event.ctrlKey && event.key === "y") {
      session.redo();
    } else if (selected !== null && (event.key === "e" || event.key === "b")) {
      session.cycleKind(selected);
    } else if (selected !== null && ["1", "2", "3"].includes(event.key)) {
      const levels: QualityLevel[] = ["poor", "fair", "good"];
      session.setQuality(selected, levels[Number(event.key) - 1]);
    } else if (selected !== null && (event.key === "Delete" || event.key === "Backspace")) {
      session.deleteMinutia(selected);
    } else {
      return;
    }
    event.preventDefault();
    this.draw();
  }

  // -- actions --------------------------------------------------------------

  rateImage(quality: QualityLevel): void {
    this.session?.setPerceivedQuality(quality);
    this.draw();
  }

  async save(dayIndex?: number): Promise<void> {
    if (!this.session) return;
    const blockers = this.session.blockers();
    if (blockers.length) {
      this.note(`cannot submit yet: ${blockers.join("; ")}`);
      return;
    }
    try {
      const image = this.session.image;
      const state = await this.api.putTemplate(
        image.db,
        image.finger,
        image.impression,
        this.session.toPayload(dayIndex),
      );
      this.session.expectedRevision = state.revision;
      this.session.dirty = false;
      this.note(
        `saved revision ${state.revision} (${state.status})` + (state.warning ? ` - ${state.warning}` : ""),
      );
    } catch (error) {
      if (error instanceof RevisionConflictError) {
        // never silently overwrite: surface the newer revision for a manual merge
        const image = this.session.image;
        const latest = await this.api.getTemplate(image.db, image.finger, image.impression);
        this.note(
          `conflict: template moved to revision ${latest.revision} by subject ${latest.marker}; ` +
            "review the newer version before saving again",
        );
      } else if (error instanceof ValidationError) {
        this.note(`rejected: ${JSON.stringify(error.details)}`);
      } else {
        this.note(String(error));
      }
    }
  }

  async review(action: "approve" | "modify"): Promise<void> {
    if (!this.session) return;
    const image = this.session.image;
    const body =
      action === "approve"
        ? { action }
        : { action, ...this.session.toPayload(), expected_revision: this.session.expectedRevision };
    const state = await this.api.postReview(image.db, image.finger, image.impression, body);
    this.session.expectedRevision = state.revision;
    this.note(`review recorded; template is now ${state.status}`);
  }

  // -- drawing --------------------------------------------------------------

  private note(text: string): void {
    this.statusLine.textContent = text;
  }

  private draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (!this.bitmap || !this.session) return;
    ctx.save();
    ctx.imageSmoothingEnabled = true;
    ctx.setTransform(this.view.scale, 0, 0, this.view.scale, this.view.offsetX, this.view.offsetY);
    ctx.drawImage(this.bitmap, 0, 0);
    ctx.restore();

    this.session.minutiae.forEach((m, index) => {
      const { sx, sy } = imageToScreen(this.view, m.x, m.y);
      ctx.strokeStyle = MINUTIA_COLORS[m.kind];
      ctx.lineWidth = index === this.session?.selection ? 3 : 1.5;
      ctx.beginPath();
      ctx.arc(sx, sy, 5, 0, 2 * Math.PI);
      ctx.stroke();
      if (m.angleDeg !== null) {
        const rad = (m.angleDeg * Math.PI) / 180;
        ctx.beginPath();
        ctx.moveTo(sx, sy);
        ctx.lineTo(sx + HANDLE_LENGTH * Math.cos(rad), sy - HANDLE_LENGTH * Math.sin(rad));
        ctx.stroke();
      }
      if (m.quality !== null) {
        ctx.fillStyle = MINUTIA_COLORS[m.kind];
        ctx.font = "9px sans-serif";
        ctx.fillText(m.quality[0], sx + 6, sy - 6);
      }
    });

    this.session.singularPoints.forEach((p) => {
      const { sx, sy } = imageToScreen(this.view, p.x, p.y);
      ctx.strokeStyle = p.kind === "core" ? "#0a0" : "#a0a";
      ctx.strokeRect(sx - 5, sy - 5, 10, 10);
    });
  }
}

/** Wire the app into a host page. */
export function mount(root: HTMLElement, baseUrl: string, subjectId: number): MarkingApp {
  const canvas = document.createElement("canvas");
  const status = document.createElement("div");
  status.className = "status-line";
  root.append(canvas, status);
  const api = new MarkingApi(baseUrl, subjectId);
  return new MarkingApp(api, canvas, status);
}

export { qualityLabel };
