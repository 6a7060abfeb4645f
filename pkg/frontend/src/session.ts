/** Client-side working state for marking one fingerprint image.
 *
 * The session mirrors the service's JSON template form, tracks an undo/redo
 * history of exact snapshots, and refuses out-of-bounds placements. Saving
 * serializes to the PUT body with the optimistic expected_revision;
 * reloading a served state reproduces the session bit-for-bit.
 */

import {
  ImageRefJson,
  MinutiaJson,
  MinutiaKind,
  PutTemplateBody,
  QualityLevel,
  SingularKind,
  TemplateStateJson,
} from "./types.js";

export interface WorkingMinutia {
  kind: MinutiaKind;
  x: number;
  y: number;
  angleDeg: number | null; // null until the drag gesture sets it
  quality: QualityLevel | null;
}

export interface WorkingSingularPoint {
  kind: SingularKind;
  x: number;
  y: number;
  angleDeg: number | null;
}

interface Snapshot {
  minutiae: WorkingMinutia[];
  singularPoints: WorkingSingularPoint[];
  perceivedQuality: QualityLevel | null;
  selection: number | null;
}

const KIND_CYCLE: MinutiaKind[] = ["ending", "bifurcation"];

export class CanvasSession {
  readonly image: ImageRefJson;
  readonly width: number;
  readonly height: number;
  expectedRevision: number;

  minutiae: WorkingMinutia[] = [];
  singularPoints: WorkingSingularPoint[] = [];
  perceivedQuality: QualityLevel | null = null;
  selection: number | null = null;
  dirty = false;

  private undoStack: Snapshot[] = [];
  private redoStack: Snapshot[] = [];

  constructor(image: ImageRefJson, width: number, height: number, expectedRevision = 0) {
    if (width <= 0 || height <= 0) throw new RangeError("image dimensions must be positive");
    this.image = image;
    this.width = width;
    this.height = height;
    this.expectedRevision = expectedRevision;
  }

  /** Rebuild the working state from a served template state. */
  static fromState(state: TemplateStateJson, width: number, height: number): CanvasSession {
    const session = new CanvasSession(
      { db: state.db, finger: state.finger, impression: state.impression },
      width,
      height,
      state.revision,
    );
    if (state.template) {
      session.minutiae = state.template.minutiae.map((m) => ({
        kind: m.kind,
        x: m.x,
        y: m.y,
        angleDeg: m.angle_deg,
        quality: qualityLabel(m.quality),
      }));
      session.singularPoints = state.template.singular_points.map((p) => ({
        kind: p.kind,
        x: p.x,
        y: p.y,
        angleDeg: p.angle_deg,
      }));
    }
    session.perceivedQuality = state.perceived_quality;
    return session;
  }

  // -- undo/redo ------------------------------------------------------------

  private snapshot(): Snapshot {
    return {
      minutiae: this.minutiae.map((m) => ({ ...m })),
      singularPoints: this.singularPoints.map((p) => ({ ...p })),
      perceivedQuality: this.perceivedQuality,
      selection: this.selection,
    };
  }

  private restore(shot: Snapshot): void {
    this.minutiae = shot.minutiae.map((m) => ({ ...m }));
    this.singularPoints = shot.singularPoints.map((p) => ({ ...p }));
    this.perceivedQuality = shot.perceivedQuality;
    this.selection = shot.selection;
  }

  private beginEdit(): void {
    this.undoStack.push(this.snapshot());
    this.redoStack = [];
    this.dirty = true;
  }

  undo(): boolean {
    const shot = this.undoStack.pop();
    if (!shot) return false;
    this.redoStack.push(this.snapshot());
    this.restore(shot);
    return true;
  }

  redo(): boolean {
    const shot = this.redoStack.pop();
    if (!shot) return false;
    this.undoStack.push(this.snapshot());
    this.restore(shot);
    return true;
  }

  // -- editing --------------------------------------------------------------

  private checkBounds(x: number, y: number): void {
    if (!Number.isInteger(x) || !Number.isInteger(y)) {
      throw new RangeError(`image coordinates must be integers, got (${x}, ${y})`);
    }
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) {
      throw new RangeError(`(${x}, ${y}) lies outside the ${this.width}x${this.height} image`);
    }
  }

  placeMinutia(x: number, y: number, kind: MinutiaKind = "ending"): number {
    this.checkBounds(x, y);
    this.beginEdit();
    this.minutiae.push({ kind, x, y, angleDeg: null, quality: null });
    this.selection = this.minutiae.length - 1;
    return this.selection;
  }

  moveMinutia(index: number, x: number, y: number): void {
    this.checkBounds(x, y);
    const minutia = this.minutia(index);
    this.beginEdit();
    minutia.x = x;
    minutia.y = y;
  }

  setAngle(index: number, angleDeg: number): void {
    if (angleDeg < 0 || angleDeg >= 360) throw new RangeError(`angle ${angleDeg} outside [0, 360)`);
    const minutia = this.minutia(index);
    this.beginEdit();
    minutia.angleDeg = angleDeg;
  }

  setQuality(index: number, quality: QualityLevel): void {
    const minutia = this.minutia(index);
    this.beginEdit();
    minutia.quality = quality;
  }

  cycleKind(index: number): MinutiaKind {
    const minutia = this.minutia(index);
    this.beginEdit();
    minutia.kind = KIND_CYCLE[(KIND_CYCLE.indexOf(minutia.kind) + 1) % KIND_CYCLE.length];
    return minutia.kind;
  }

  deleteMinutia(index: number): void {
    this.minutia(index);
    this.beginEdit();
    this.minutiae.splice(index, 1);
    this.selection = null;
  }

  placeSingularPoint(kind: SingularKind, x: number, y: number, angleDeg: number | null = null): void {
    this.checkBounds(x, y);
    this.beginEdit();
    this.singularPoints.push({ kind, x, y, angleDeg });
  }

  deleteSingularPoint(index: number): void {
    if (index < 0 || index >= this.singularPoints.length) throw new RangeError(`no singular point ${index}`);
    this.beginEdit();
    this.singularPoints.splice(index, 1);
  }

  setPerceivedQuality(quality: QualityLevel): void {
    this.beginEdit();
    this.perceivedQuality = quality;
  }

  private minutia(index: number): WorkingMinutia {
    const minutia = this.minutiae[index];
    if (!minutia) throw new RangeError(`no minutia ${index}`);
    return minutia;
  }

  // -- submission -----------------------------------------------------------

  /** Everything still blocking a submission, in display order. */
  blockers(): string[] {
    const out: string[] = [];
    if (this.perceivedQuality === null) out.push("rate the image quality (poor/fair/good)");
    this.minutiae.forEach((m, k) => {
      if (m.angleDeg === null) out.push(`minutia ${k + 1} has no angle`);
      if (m.quality === null) out.push(`minutia ${k + 1} has no quality`);
    });
    return out;
  }

  toPayload(dayIndex?: number): PutTemplateBody {
    const blockers = this.blockers();
    if (blockers.length) throw new Error(`not ready to submit: ${blockers.join("; ")}`);
    return {
      minutiae: this.minutiae.map(
        (m): MinutiaJson => ({
          kind: m.kind,
          x: m.x,
          y: m.y,
          angle_deg: m.angleDeg as number,
          quality: m.quality as QualityLevel,
        }),
      ),
      singular_points: this.singularPoints.map((p) => ({
        kind: p.kind,
        x: p.x,
        y: p.y,
        angle_deg: p.angleDeg,
      })),
      perceived_quality: this.perceivedQuality as QualityLevel,
      expected_revision: this.expectedRevision,
      ...(dayIndex === undefined ? {} : { day_index: dayIndex }),
    };
  }
}

/** Byte qualities come back from the service; fold them onto the labels the
 * marking workflow uses (the service maps poor/fair/good to 20/50/80). */
export function qualityLabel(quality: number | QualityLevel): QualityLevel {
  if (typeof quality === "string") return quality;
  if (quality <= 35) return "poor";
  if (quality <= 65) return "fair";
  return "good";
}

/**
 * Route guard against dual-image exposure: one impression on screen at a
 * time, and never a second impression of a finger the subject already has
 * open. Rendering goes through acquire(); closing the viewer releases it.
 */
export class SingleImageGuard {
  private held: ImageRefJson | null = null;

  acquire(image: ImageRefJson): void {
    if (this.held) {
      const sameFinger = this.held.db === image.db && this.held.finger === image.finger;
      const sameImage = sameFinger && this.held.impression === image.impression;
      if (sameFinger && !sameImage) {
        throw new Error(
          `impression ${this.held.impression} of finger ${image.finger} is already on screen; ` +
            "two impressions of one finger must never be visible together",
        );
      }
      if (!sameImage) {
        throw new Error("another image is already on screen; close it first");
      }
    }
    this.held = image;
  }

  release(): void {
    this.held = null;
  }

  current(): ImageRefJson | null {
    return this.held;
  }
}
