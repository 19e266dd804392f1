/** Pointer position on the equirectangular panel <-> light direction.
 *
 * The panel shows the map with longitude u across and colatitude v down,
 * so the mapping is linear: pixel centers at (u + 0.5) / w horizontally.
 */

export interface Uv {
  u: number;
  v: number;
}

export function pixelToUv(
  x: number,
  y: number,
  width: number,
  height: number,
): Uv {
  if (!(width > 0) || !(height > 0)) {
    throw new Error(`panel size must be positive, got ${width}x${height}`);
  }
  const u = (((x / width) % 1) + 1) % 1;
  const v = Math.min(1, Math.max(0, y / height));
  return { u, v };
}

export function uvToPixel(
  u: number,
  v: number,
  width: number,
  height: number,
): { x: number; y: number } {
  if (!(width > 0) || !(height > 0)) {
    throw new Error(`panel size must be positive, got ${width}x${height}`);
  }
  return { x: ((((u % 1) + 1) % 1) * width), y: Math.min(1, Math.max(0, v)) * height };
}
