/** Screen/image coordinate mapping and physical-height display scaling.
 *
 * The viewer draws the image at `scale` CSS pixels per image pixel with a
 * pan offset. Image coordinates are integers (template coordinates);
 * screen->image inverts the linear map and rounds, which recovers the
 * original integer exactly at every zoom level.
 */

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export const DEGREES_PER_UNIT = 1.40625; // 360 / 256
const CSS_PX_PER_CM = 96 / 2.54;

export function imageToScreen(t: ViewTransform, x: number, y: number): { sx: number; sy: number } {
  return { sx: x * t.scale + t.offsetX, sy: y * t.scale + t.offsetY };
}

export function screenToImage(t: ViewTransform, sx: number, sy: number): { x: number; y: number } {
  return {
    x: Math.round((sx - t.offsetX) / t.scale),
    y: Math.round((sy - t.offsetY) / t.scale),
  };
}

/**
 * CSS pixels per image pixel so the full image stands `targetCm` tall on
 * screen. Browsers only pretend to know physical units (1css cm = 96/2.54
 * px), so a per-client calibration factor (measured against an on-screen
 * ruler) corrects the real monitor density; 1 means "trust the browser".
 */
export function displayScale(heightPx: number, targetCm: number, calibration = 1): number {
  if (heightPx <= 0 || targetCm <= 0 || calibration <= 0) {
    throw new RangeError("height, target size and calibration must be positive");
  }
  return (targetCm * CSS_PX_PER_CM * calibration) / heightPx;
}

/** Minutia direction from a drag gesture: screen y grows downward, angles
 * grow counterclockwise, so dragging straight up means 90 degrees. */
export function angleFromDrag(dx: number, dy: number): number {
  const degrees = (Math.atan2(-dy, dx) * 180) / Math.PI;
  return (degrees + 360) % 360;
}

/** One-byte angle representation used by the stored templates. */
export function quantizeAngle(degrees: number): number {
  if (degrees < 0 || degrees >= 360) throw new RangeError(`angle ${degrees} outside [0, 360)`);
  return Math.floor(degrees / DEGREES_PER_UNIT + 0.5) % 256;
}

export function dequantizeAngle(units: number): number {
  return units * DEGREES_PER_UNIT;
}
