/**
 * Command-line front end.
 *
 * `embed`    directory of images + mapping file -> one embedding binary
 * `generate` prompts file -> one PNG per prompt in the output directory
 *
 * Exit codes: 0 success, 1 some per-item work failed (the run still
 * completed), 2 invalid input or configuration.
 */

import { readFile, writeFile } from 'node:fs/promises';
import { parseArgs } from 'node:util';

import { writeEmbeddings } from './format.js';
import { parseMapping, MappingError } from './mapping.js';
import { GridPoolBackend, HttpBackend, embedDirectory, type EmbedBackend } from './embed.js';
import {
  parsePrompts,
  generateFromPrompts,
  ProceduralPainter,
  HttpPainter,
  PromptFileError,
  type Painter,
} from './generate.js';

export class UsageError extends Error {}

const USAGE = `usage:
  dydq-adapter embed --images DIR --mapping FILE --out FILE
                     [--grid N | --backend http --url URL --dim N]
  dydq-adapter generate --prompts FILE --out DIR
                     [--size N] [--painter http --url URL]`;

export interface EmbedArgs {
  images: string;
  mapping: string;
  out: string;
  backend: 'procedural' | 'http';
  grid: number;
  url?: string;
  dim?: number;
}

export interface GenerateArgs {
  prompts: string;
  out: string;
  painter: 'procedural' | 'http';
  size: number;
  url?: string;
}

function required(values: Record<string, string | undefined>, name: string): string {
  const v = values[name];
  if (v === undefined || v === '') throw new UsageError(`--${name} is required`);
  return v;
}

function positiveInt(raw: string, name: string): number {
  const n = Number(raw);
  if (!Number.isInteger(n) || n < 1) throw new UsageError(`--${name} must be a positive integer, got ${raw}`);
  return n;
}

function oneOf<T extends string>(raw: string, name: string, allowed: readonly T[]): T {
  if (!(allowed as readonly string[]).includes(raw)) {
    throw new UsageError(`--${name} must be one of ${allowed.join(', ')}, got ${raw}`);
  }
  return raw as T;
}

export function parseEmbedArgs(argv: string[]): EmbedArgs {
  const { values } = parseArgs({
    args: argv,
    options: {
      images: { type: 'string' },
      mapping: { type: 'string' },
      out: { type: 'string' },
      backend: { type: 'string', default: 'procedural' },
      grid: { type: 'string', default: '8' },
      url: { type: 'string' },
      dim: { type: 'string' },
    },
  });
  return {
    images: required(values, 'images'),
    mapping: required(values, 'mapping'),
    out: required(values, 'out'),
    backend: oneOf(values.backend!, 'backend', ['procedural', 'http'] as const),
    grid: positiveInt(values.grid!, 'grid'),
    url: values.url,
    dim: values.dim === undefined ? undefined : positiveInt(values.dim, 'dim'),
  };
}

export function parseGenerateArgs(argv: string[]): GenerateArgs {
  const { values } = parseArgs({
    args: argv,
    options: {
      prompts: { type: 'string' },
      out: { type: 'string' },
      painter: { type: 'string', default: 'procedural' },
      size: { type: 'string', default: '64' },
      url: { type: 'string' },
    },
  });
  return {
    prompts: required(values, 'prompts'),
    out: required(values, 'out'),
    painter: oneOf(values.painter!, 'painter', ['procedural', 'http'] as const),
    size: positiveInt(values.size!, 'size'),
    url: values.url,
  };
}

function pickBackend(args: EmbedArgs): EmbedBackend {
  if (args.backend === 'http') {
    if (!args.url || !args.dim) throw new UsageError('http backend needs --url and --dim');
    return new HttpBackend(args.url, args.dim);
  }
  return new GridPoolBackend(args.grid);
}

function pickPainter(args: GenerateArgs): Painter {
  if (args.painter === 'http') {
    if (!args.url) throw new UsageError('http painter needs --url');
    return new HttpPainter(args.url);
  }
  return new ProceduralPainter();
}

export async function runEmbed(args: EmbedArgs): Promise<number> {
  let entries;
  try {
    entries = parseMapping(await readFile(args.mapping, 'utf8'));
  } catch (err) {
    if (err instanceof MappingError) {
      process.stderr.write(`mapping error: ${err.message}\n`);
      return 2;
    }
    throw err;
  }
  const backend = pickBackend(args);
  const { records, failures } = await embedDirectory(args.images, entries, backend);
  await writeFile(args.out, writeEmbeddings(records, backend.dim));
  process.stdout.write(`embedded ${records.length} of ${entries.length} images (dim=${backend.dim}) -> ${args.out}\n`);
  for (const f of failures) process.stderr.write(`failed ${f.filename}: ${f.reason}\n`);
  return failures.length === 0 ? 0 : 1;
}

export async function runGenerate(args: GenerateArgs): Promise<number> {
  let rows;
  try {
    rows = parsePrompts(await readFile(args.prompts, 'utf8'));
  } catch (err) {
    if (err instanceof PromptFileError) {
      process.stderr.write(`prompt file error: ${err.message}\n`);
      return 2;
    }
    throw err;
  }
  const painter = pickPainter(args);
  const result = await generateFromPrompts(rows, args.out, painter, args.size);
  process.stdout.write(`generated ${result.written} of ${rows.length} images -> ${args.out}\n`);
  for (const f of result.failures) process.stderr.write(`failed ${f.hash}: ${f.reason}\n`);
  return result.failures.length === 0 ? 0 : 1;
}

export async function main(argv: string[]): Promise<number> {
  try {
    const [command, ...rest] = argv;
    if (command === 'embed') return await runEmbed(parseEmbedArgs(rest));
    if (command === 'generate') return await runGenerate(parseGenerateArgs(rest));
    throw new UsageError(command === undefined ? 'missing command' : `unknown command ${command}`);
  } catch (err) {
    if (err instanceof UsageError || (err as { code?: string }).code?.startsWith('ERR_PARSE_ARGS')) {
      process.stderr.write(`${(err as Error).message}\n${USAGE}\n`);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly = process.argv[1]?.endsWith('cli.js') ?? false;
if (invokedDirectly) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      process.stderr.write(`unexpected error: ${(err as Error).message}\n`);
      process.exit(2);
    },
  );
}
