/**
 * Binary mask painting, kept free of DOM so the editing behaviour is
 * unit-testable. Cells are 0 (keep original) or 1 (take reference).
 */

export interface MaskGrid {
  width: number;
  height: number;
  /** row-major, one byte per pixel, values 0 or 1 */
  data: Uint8Array;
}

export function createMask(width: number, height: number): MaskGrid {
  if (width <= 0 || height <= 0 || !Number.isInteger(width) || !Number.isInteger(height)) {
    throw new Error(`bad mask size ${width}x${height}`);
  }
  return { width, height, data: new Uint8Array(width * height) };
}

export function cloneMask(mask: MaskGrid): MaskGrid {
  return { width: mask.width, height: mask.height, data: mask.data.slice() };
}

export function clearMask(mask: MaskGrid): void {
  mask.data.fill(0);
}

export function countPainted(mask: MaskGrid): number {
  let n = 0;
  for (const v of mask.data) n += v;
  return n;
}

/** Stamp a filled circle. value 1 paints, 0 erases. */
export function paintCircle(
  mask: MaskGrid,
  cx: number,
  cy: number,
  radius: number,
  value: 0 | 1,
): void {
  const r = Math.max(0, radius);
  const r2 = r * r;
  const x0 = Math.max(0, Math.floor(cx - r));
  const x1 = Math.min(mask.width - 1, Math.ceil(cx + r));
  const y0 = Math.max(0, Math.floor(cy - r));
  const y1 = Math.min(mask.height - 1, Math.ceil(cy + r));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        mask.data[y * mask.width + x] = value;
      }
    }
  }
}

/**
 * Paint every pixel a segment of circles touches, so fast pointer moves
 * leave no gaps. Steps at quarter-radius spacing.
 */
export function paintStroke(
  mask: MaskGrid,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  radius: number,
  value: 0 | 1,
): void {
  const dist = Math.hypot(x1 - x0, y1 - y0);
  const steps = Math.max(1, Math.ceil(dist / Math.max(1, radius / 4)));
  for (let i = 0; i <= steps; i++) {
    const t = i / steps;
    paintCircle(mask, x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, radius, value);
  }
}

/** Fill an axis-aligned box given any two opposite corners, clamped. */
export function paintBox(
  mask: MaskGrid,
  xa: number,
  ya: number,
  xb: number,
  yb: number,
  value: 0 | 1,
): void {
  const x0 = Math.max(0, Math.floor(Math.min(xa, xb)));
  const x1 = Math.min(mask.width - 1, Math.floor(Math.max(xa, xb)));
  const y0 = Math.max(0, Math.floor(Math.min(ya, yb)));
  const y1 = Math.min(mask.height - 1, Math.floor(Math.max(ya, yb)));
  for (let y = y0; y <= y1; y++) {
    mask.data.fill(value, y * mask.width + x0, y * mask.width + x1 + 1);
  }
}

/** 0/1 grid as 0/255 grayscale bytes, the form the service expects. */
export function maskToGray(mask: MaskGrid): Uint8Array {
  const out = new Uint8Array(mask.data.length);
  for (let i = 0; i < mask.data.length; i++) {
    out[i] = mask.data[i] ? 255 : 0;
  }
  return out;
}
