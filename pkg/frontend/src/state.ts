/** Placement state machine: selection, drag, scale, commit payload. */

import { BBox, Size, clampBBox, dragBBox, scaleBBox } from "./coords.js";

export interface PlacementState {
  objectId: string | null;
  backgroundId: string | null;
  background: Size | null;
  object: Size | null;
  bbox: BBox | null;
  /** cumulative user scale relative to the initial placement */
  scale: number;
}

export function initialState(): PlacementState {
  return { objectId: null, backgroundId: null, background: null, object: null, bbox: null, scale: 1 };
}

export function selectBackground(state: PlacementState, id: string, size: Size): PlacementState {
  const next = { ...state, backgroundId: id, background: size };
  return next.objectId && next.object ? withDefaultPlacement(next) : { ...next, bbox: null };
}

export function selectObject(state: PlacementState, id: string, size: Size): PlacementState {
  const next = { ...state, objectId: id, object: size };
  return next.backgroundId && next.background ? withDefaultPlacement(next) : { ...next, bbox: null };
}

/** Center the object at a third of the background's smaller side. */
function withDefaultPlacement(state: PlacementState): PlacementState {
  const bg = state.background!;
  const obj = state.object!;
  const target = Math.min(bg.width, bg.height) / 3;
  const factor = target / Math.max(obj.width, obj.height);
  const w = obj.width * factor;
  const h = obj.height * factor;
  const bbox = clampBBox({ x: (bg.width - w) / 2, y: (bg.height - h) / 2, w, h }, bg);
  return { ...state, bbox, scale: 1 };
}

export function drag(state: PlacementState, dx: number, dy: number): PlacementState {
  if (!state.bbox || !state.background) return state;
  return { ...state, bbox: dragBBox(state.bbox, dx, dy, state.background) };
}

export function scale(state: PlacementState, factor: number): PlacementState {
  if (!state.bbox || !state.background) return state;
  return {
    ...state,
    bbox: scaleBBox(state.bbox, factor, state.background),
    scale: state.scale * factor,
  };
}

export function commitBody(state: PlacementState): {
  object_id: string;
  background_id: string;
  bbox: [number, number, number, number];
  scale: number;
} {
  if (!state.objectId || !state.backgroundId || !state.bbox) {
    throw new Error("select an object and a background before committing");
  }
  const { x, y, w, h } = state.bbox;
  return {
    object_id: state.objectId,
    background_id: state.backgroundId,
    bbox: [x, y, w, h],
    scale: state.scale,
  };
}
