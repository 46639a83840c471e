/**
 * Coordinate math for the placement canvas.
 *
 * The API speaks background-image pixel coordinates exclusively; the canvas
 * displays the image scaled by `viewScale`. These helpers convert between the
 * two spaces and implement the clamp laws used while dragging and scaling.
 */

export interface BBox {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface Size {
  width: number;
  height: number;
}

/** Screen (canvas) pixels -> background-image pixels. */
export function screenToImage(px: number, py: number, viewScale: number): [number, number] {
  return [px / viewScale, py / viewScale];
}

/** Background-image pixels -> screen (canvas) pixels. */
export function imageToScreen(ix: number, iy: number, viewScale: number): [number, number] {
  return [ix * viewScale, iy * viewScale];
}

/** Clamp a bbox so it lies fully inside the background. Size is preserved
 * unless the box is larger than the background, in which case it is shrunk
 * to fit while preserving aspect ratio. */
export function clampBBox(bbox: BBox, bg: Size): BBox {
  let { x, y, w, h } = bbox;
  if (w > bg.width || h > bg.height) {
    const fit = Math.min(bg.width / w, bg.height / h);
    w *= fit;
    h *= fit;
  }
  x = Math.min(Math.max(x, 0), bg.width - w);
  y = Math.min(Math.max(y, 0), bg.height - h);
  return { x, y, w, h };
}

/** Translate by an image-space delta, then clamp. */
export function dragBBox(bbox: BBox, dx: number, dy: number, bg: Size): BBox {
  return clampBBox({ ...bbox, x: bbox.x + dx, y: bbox.y + dy }, bg);
}

/** Scale about the bbox center preserving aspect ratio, then clamp. */
export function scaleBBox(bbox: BBox, factor: number, bg: Size): BBox {
  if (factor <= 0) {
    throw new Error(`scale factor must be > 0, got ${factor}`);
  }
  const cx = bbox.x + bbox.w / 2;
  const cy = bbox.y + bbox.h / 2;
  const w = bbox.w * factor;
  const h = bbox.h * factor;
  return clampBBox({ x: cx - w / 2, y: cy - h / 2, w, h }, bg);
}

/** Serialize for the API query string: always image pixels, x,y,w,h. */
export function bboxParam(bbox: BBox): string {
  return [bbox.x, bbox.y, bbox.w, bbox.h].map((v) => String(v)).join(",");
}
