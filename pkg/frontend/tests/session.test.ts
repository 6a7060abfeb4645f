import { describe, expect, it } from "vitest";

import { CanvasSession, SingleImageGuard } from "../src/session.js";
import { TemplateStateJson } from "../src/types.js";

const IMAGE = { db: "LAB", finger: 1, impression: 1 };

function freshSession(): CanvasSession {
  return new CanvasSession(IMAGE, 388, 374, 0);
}

describe("placement and bounds", () => {
  it("accepts the far edge pixel and rejects one past it", () => {
    const session = freshSession();
    expect(session.placeMinutia(387, 373)).toBe(0);
    expect(() => session.placeMinutia(388, 373)).toThrow(RangeError);
    expect(() => session.placeMinutia(387, 374)).toThrow(RangeError);
    expect(() => session.placeMinutia(-1, 0)).toThrow(RangeError);
  });

  it("keeps image coordinates integral", () => {
    const session = freshSession();
    expect(() => session.placeMinutia(10.5, 3)).toThrow(RangeError);
  });
});

describe("editing and undo/redo", () => {
  it("undo after placement restores the prior list exactly", () => {
    const session = freshSession();
    session.placeMinutia(100, 200);
    session.setAngle(0, 90);
    const before = JSON.stringify(session.minutiae);
    session.placeMinutia(50, 60);
    expect(session.minutiae).toHaveLength(2);
    expect(session.undo()).toBe(true);
    expect(JSON.stringify(session.minutiae)).toBe(before);
    expect(session.redo()).toBe(true);
    expect(session.minutiae).toHaveLength(2);
  });

  it("undo/redo walks multi-step history back to exact prior states", () => {
    const session = freshSession();
    const states: string[] = [JSON.stringify(session.minutiae)];
    session.placeMinutia(10, 10);
    states.push(JSON.stringify(session.minutiae));
    session.setAngle(0, 45);
    states.push(JSON.stringify(session.minutiae));
    session.cycleKind(0);
    states.push(JSON.stringify(session.minutiae));
    session.deleteMinutia(0);
    states.push(JSON.stringify(session.minutiae));

    for (let k = states.length - 2; k >= 0; k--) {
      expect(session.undo()).toBe(true);
      expect(JSON.stringify(session.minutiae)).toBe(states[k]);
    }
    expect(session.undo()).toBe(false);
    for (let k = 1; k < states.length; k++) {
      expect(session.redo()).toBe(true);
      expect(JSON.stringify(session.minutiae)).toBe(states[k]);
    }
    expect(session.redo()).toBe(false);
  });

  it("a fresh edit clears the redo branch", () => {
    const session = freshSession();
    session.placeMinutia(10, 10);
    session.undo();
    session.placeMinutia(20, 20);
    expect(session.redo()).toBe(false);
  });

  it("kind cycling and quality setting are undoable", () => {
    const session = freshSession();
    session.placeMinutia(5, 5);
    expect(session.cycleKind(0)).toBe("bifurcation");
    session.setQuality(0, "fair");
    session.undo();
    expect(session.minutiae[0].quality).toBe(null);
    session.undo();
    expect(session.minutiae[0].kind).toBe("ending");
  });
});

describe("submission payload", () => {
  it("blocks until image quality and per-minutia fields are set", () => {
    const session = freshSession();
    session.placeMinutia(100, 200);
    expect(session.blockers()).toEqual([
      "rate the image quality (poor/fair/good)",
      "minutia 1 has no angle",
      "minutia 1 has no quality",
    ]);
    expect(() => session.toPayload()).toThrow(/not ready/);

    session.setAngle(0, 90);
    session.setQuality(0, "good");
    session.setPerceivedQuality("good");
    expect(session.blockers()).toEqual([]);

    const payload = session.toPayload();
    expect(payload).toEqual({
      minutiae: [{ kind: "ending", x: 100, y: 200, angle_deg: 90, quality: "good" }],
      singular_points: [],
      perceived_quality: "good",
      expected_revision: 0,
    });
  });

  it("round-trips a served state back into an identical session", () => {
    const state: TemplateStateJson = {
      db: "LAB",
      finger: 1,
      impression: 1,
      revision: 3,
      status: "marked",
      marker: 1,
      perceived_quality: "fair",
      warning: null,
      reviews: [],
      template: {
        minutiae: [
          { kind: "ending", x: 100, y: 200, angle_deg: 90, quality: 80 },
          { kind: "bifurcation", x: 12, y: 13, angle_deg: 1.40625, quality: 20 },
        ],
        singular_points: [{ kind: "core", x: 50, y: 60, angle_deg: null }],
      },
    };
    const session = CanvasSession.fromState(state, 388, 374);
    expect(session.expectedRevision).toBe(3);
    expect(session.minutiae).toEqual([
      { kind: "ending", x: 100, y: 200, angleDeg: 90, quality: "good" },
      { kind: "bifurcation", x: 12, y: 13, angleDeg: 1.40625, quality: "poor" },
    ]);
    expect(session.singularPoints).toEqual([{ kind: "core", x: 50, y: 60, angleDeg: null }]);
    expect(session.perceivedQuality).toBe("fair");
    expect(session.blockers()).toEqual([]);
    // serialize -> identical wire form (bytes qualities fold onto labels)
    expect(session.toPayload().minutiae[0]).toEqual({
      kind: "ending",
      x: 100,
      y: 200,
      angle_deg: 90,
      quality: "good",
    });
  });
});

describe("dual-image exposure guard", () => {
  it("never lets two impressions of one finger render together", () => {
    const guard = new SingleImageGuard();
    guard.acquire({ db: "LAB", finger: 1, impression: 1 });
    expect(() => guard.acquire({ db: "LAB", finger: 1, impression: 5 })).toThrow(/never be visible/);
    // a different finger is still blocked until the current view closes
    expect(() => guard.acquire({ db: "LAB", finger: 2, impression: 1 })).toThrow(/close it first/);
    guard.release();
    guard.acquire({ db: "LAB", finger: 1, impression: 5 });
    expect(guard.current()).toEqual({ db: "LAB", finger: 1, impression: 5 });
  });
});
