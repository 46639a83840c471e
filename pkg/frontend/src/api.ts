/** Thin client for the annotation service HTTP API (snake_case JSON). */

import { BBox, bboxParam } from "./coords.js";

export interface AssetEntry {
  id: string;
  kind: "object" | "background";
  width: number;
  height: number;
  thumbnail_path: string;
}

export interface AnnotationRecord {
  id: string;
  object_id: string;
  background_id: string;
  bbox: [number, number, number, number];
  scale: number;
  created_at: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async listAssets(kind: "object" | "background"): Promise<AssetEntry[]> {
    const resp = await this.fetchImpl(`${this.baseUrl}/assets?kind=${kind}`);
    if (!resp.ok) throw new Error(`listAssets failed: ${resp.status}`);
    return resp.json();
  }

  assetImageUrl(id: string): string {
    return `${this.baseUrl}/assets/${encodeURIComponent(id)}/image`;
  }

  previewUrl(objectId: string, backgroundId: string, bbox: BBox): string {
    const params = new URLSearchParams({
      object: objectId,
      background: backgroundId,
      bbox: bboxParam(bbox),
    });
    return `${this.baseUrl}/preview?${params.toString()}`;
  }

  async fetchPreview(objectId: string, backgroundId: string, bbox: BBox): Promise<Blob> {
    const resp = await this.fetchImpl(this.previewUrl(objectId, backgroundId, bbox));
    if (!resp.ok) {
      const detail = await resp.text();
      throw new Error(`preview failed (${resp.status}): ${detail}`);
    }
    return resp.blob();
  }

  async createAnnotation(body: {
    object_id: string;
    background_id: string;
    bbox: [number, number, number, number];
    scale: number;
  }): Promise<AnnotationRecord> {
    const resp = await this.fetchImpl(`${this.baseUrl}/annotations`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      const detail = await resp.text();
      throw new Error(`commit failed (${resp.status}): ${detail}`);
    }
    return resp.json();
  }
}
