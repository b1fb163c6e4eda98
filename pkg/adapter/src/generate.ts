/**
 * Prompt-file driven image generation.
 *
 * Rows come from a prompts.tsv (`prompt_hash<TAB>rendered_prompt`); each row
 * yields exactly one `<prompt_hash>.png` in the output directory. The hash
 * column is the single source of truth for filenames — this side never
 * recomputes it from the prompt text. The default painter is procedural and
 * deterministic per hash; the HTTP painter forwards the prompt to any
 * text-to-image service answering with PNG bytes.
 */

import { mkdir, writeFile } from 'node:fs/promises';
import { join } from 'node:path';

import { encodePng, decodePng } from './png.js';

export const PROMPTS_HEADER = 'prompt_hash\trendered_prompt';
const HASH_PATTERN = /^[0-9a-f]{16}$/;

export interface PromptRow {
  hash: string;
  prompt: string;
}

export class PromptFileError extends Error {}

export function parsePrompts(text: string): PromptRow[] {
  if (text === '') return []; // an empty file means nothing to do
  const lines = text.split('\n');
  if (lines[lines.length - 1] === '') lines.pop();
  if (lines[0] !== PROMPTS_HEADER) {
    throw new PromptFileError(`first line must be "${PROMPTS_HEADER}"`);
  }
  const rows: PromptRow[] = [];
  const seen = new Set<string>();
  for (let i = 1; i < lines.length; i++) {
    const fields = lines[i]!.split('\t');
    if (fields.length !== 2) {
      throw new PromptFileError(`line ${i + 1}: expected 2 tab-separated fields, got ${fields.length}`);
    }
    const [hash, prompt] = fields as [string, string];
    if (!HASH_PATTERN.test(hash)) {
      throw new PromptFileError(`line ${i + 1}: ${JSON.stringify(hash)} is not a 16-digit lowercase hex hash`);
    }
    if (prompt === '') throw new PromptFileError(`line ${i + 1}: empty prompt`);
    if (seen.has(hash)) throw new PromptFileError(`line ${i + 1}: duplicate prompt hash ${hash}`);
    seen.add(hash);
    rows.push({ hash, prompt });
  }
  return rows;
}

export interface Painter {
  paint(row: PromptRow, size: number): Promise<Buffer>;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Smooth color field seeded by the prompt hash: a random low-res RGB
 * lattice, bilinearly upsampled. Stable across runs and platforms. */
export class ProceduralPainter implements Painter {
  readonly lattice: number;

  constructor(lattice = 5) {
    this.lattice = lattice;
  }

  async paint(row: PromptRow, size: number): Promise<Buffer> {
    const seed = Number.parseInt(row.hash.slice(0, 8), 16) ^ Number.parseInt(row.hash.slice(8), 16);
    const rand = mulberry32(seed);
    const n = this.lattice;
    const grid: number[] = [];
    for (let i = 0; i < n * n * 3; i++) grid.push(40 + rand() * 175); // never all-black
    const data = Buffer.alloc(size * size * 4);
    for (let y = 0; y < size; y++) {
      const gy = (y / (size - 1)) * (n - 1);
      const y0 = Math.min(Math.floor(gy), n - 2);
      const fy = gy - y0;
      for (let x = 0; x < size; x++) {
        const gx = (x / (size - 1)) * (n - 1);
        const x0 = Math.min(Math.floor(gx), n - 2);
        const fx = gx - x0;
        const p = 4 * (y * size + x);
        for (let c = 0; c < 3; c++) {
          const v00 = grid[3 * (y0 * n + x0) + c]!;
          const v01 = grid[3 * (y0 * n + x0 + 1) + c]!;
          const v10 = grid[3 * ((y0 + 1) * n + x0) + c]!;
          const v11 = grid[3 * ((y0 + 1) * n + x0 + 1) + c]!;
          const top = v00 + (v01 - v00) * fx;
          const bottom = v10 + (v11 - v10) * fx;
          data[p + c] = Math.round(top + (bottom - top) * fy);
        }
        data[p + 3] = 255;
      }
    }
    return encodePng({ width: size, height: size, data });
  }
}

/** POST {hash, prompt, size}, receive PNG bytes. */
export class HttpPainter implements Painter {
  readonly url: string;

  constructor(url: string) {
    this.url = url;
  }

  async paint(row: PromptRow, size: number): Promise<Buffer> {
    const response = await fetch(this.url, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ hash: row.hash, prompt: row.prompt, size }),
    });
    if (!response.ok) throw new Error(`image service answered ${response.status}`);
    const bytes = Buffer.from(await response.arrayBuffer());
    decodePng(bytes); // reject non-PNG answers before they reach disk
    return bytes;
  }
}

export interface GenerateFailure {
  hash: string;
  reason: string;
}

export interface GenerateRunResult {
  written: number;
  failures: GenerateFailure[];
}

export async function generateFromPrompts(
  rows: PromptRow[],
  outDir: string,
  painter: Painter,
  size: number,
): Promise<GenerateRunResult> {
  if (size < 8) throw new PromptFileError(`size must be at least 8, got ${size}`);
  await mkdir(outDir, { recursive: true });
  let written = 0;
  const failures: GenerateFailure[] = [];
  for (const row of rows) {
    try {
      const bytes = await painter.paint(row, size);
      await writeFile(join(outDir, `${row.hash}.png`), bytes);
      written += 1;
    } catch (err) {
      failures.push({ hash: row.hash, reason: (err as Error).message });
    }
  }
  return { written, failures };
}
