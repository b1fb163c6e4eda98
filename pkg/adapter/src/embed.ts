/**
 * Image -> vector backends and the directory walk that turns a mapping file
 * into embedding records.
 *
 * The default backend is a seedless, fully deterministic grid pooler so the
 * adapter produces stable output offline; the HTTP backend posts pixels to
 * any service that answers with a JSON vector (a real encoder behind a tiny
 * shim), keeping model weights out of this package.
 */

import { readFile } from 'node:fs/promises';
import { join } from 'node:path';

import type { EmbeddingRecord } from './format.js';
import type { MappingEntry } from './mapping.js';
import { decodePng, type RgbaImage } from './png.js';

export interface EmbedBackend {
  readonly dim: number;
  embed(image: RgbaImage): Promise<Float32Array>;
}

export class DegenerateImageError extends Error {}

/** Mean luminance over a grid x grid partition, L2-normalized. */
export class GridPoolBackend implements EmbedBackend {
  readonly grid: number;
  readonly dim: number;

  constructor(grid = 8) {
    if (!Number.isInteger(grid) || grid < 1) throw new Error(`grid must be a positive integer, got ${grid}`);
    this.grid = grid;
    this.dim = grid * grid;
  }

  async embed(image: RgbaImage): Promise<Float32Array> {
    const g = this.grid;
    if (image.width < g || image.height < g) {
      throw new DegenerateImageError(`image ${image.width}x${image.height} smaller than the ${g}x${g} grid`);
    }
    const out = new Float32Array(this.dim);
    for (let cy = 0; cy < g; cy++) {
      const y0 = Math.floor((cy * image.height) / g);
      const y1 = Math.floor(((cy + 1) * image.height) / g);
      for (let cx = 0; cx < g; cx++) {
        const x0 = Math.floor((cx * image.width) / g);
        const x1 = Math.floor(((cx + 1) * image.width) / g);
        let total = 0;
        for (let y = y0; y < y1; y++) {
          for (let x = x0; x < x1; x++) {
            const p = 4 * (y * image.width + x);
            total += 0.299 * image.data[p]! + 0.587 * image.data[p + 1]! + 0.114 * image.data[p + 2]!;
          }
        }
        out[cy * g + cx] = total / ((y1 - y0) * (x1 - x0) * 255);
      }
    }
    let norm = 0;
    for (const v of out) norm += v * v;
    norm = Math.sqrt(norm);
    if (norm === 0) throw new DegenerateImageError('all-black image has no direction to normalize');
    for (let i = 0; i < out.length; i++) out[i] = out[i]! / norm;
    return out;
  }
}

/** POST raw RGBA pixels, receive {"vector": [...]}. */
export class HttpBackend implements EmbedBackend {
  readonly url: string;
  readonly dim: number;

  constructor(url: string, dim: number) {
    if (!Number.isInteger(dim) || dim < 1) throw new Error(`dim must be a positive integer, got ${dim}`);
    this.url = url;
    this.dim = dim;
  }

  async embed(image: RgbaImage): Promise<Float32Array> {
    const response = await fetch(this.url, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({
        width: image.width,
        height: image.height,
        rgba_base64: image.data.toString('base64'),
      }),
    });
    if (!response.ok) throw new Error(`embedding service answered ${response.status}`);
    const body = (await response.json()) as { vector?: number[] };
    if (!Array.isArray(body.vector) || body.vector.length !== this.dim) {
      throw new Error(`embedding service returned ${body.vector?.length ?? 'no'} values, expected ${this.dim}`);
    }
    return Float32Array.from(body.vector);
  }
}

export interface EmbedFailure {
  filename: string;
  reason: string;
}

export interface EmbedRunResult {
  records: EmbeddingRecord[];
  failures: EmbedFailure[];
}

/**
 * Embed every mapped image. Per-file problems (missing, undecodable,
 * degenerate) are collected and the run continues; the caller decides that
 * any failure makes the whole run nonzero.
 */
export async function embedDirectory(
  imagesDir: string,
  entries: MappingEntry[],
  backend: EmbedBackend,
): Promise<EmbedRunResult> {
  const records: EmbeddingRecord[] = [];
  const failures: EmbedFailure[] = [];
  for (const entry of entries) {
    try {
      const bytes = await readFile(join(imagesDir, entry.filename));
      const vector = await backend.embed(decodePng(bytes));
      records.push({ id: entry.imageId, vector });
    } catch (err) {
      failures.push({ filename: entry.filename, reason: (err as Error).message });
    }
  }
  return { records, failures };
}
