/**
 * The image mapping file: which files to embed and the integer id each one
 * gets in the output. Tab-separated with a fixed header:
 *
 *   filename<TAB>image_id
 *
 * Filenames are paths relative to the configured image directory. The whole
 * file validates before any work starts, so an inconsistent mapping can
 * never produce a partial embedding file.
 */

export const MAPPING_HEADER = 'filename\timage_id';

export interface MappingEntry {
  filename: string;
  imageId: bigint;
}

export class MappingError extends Error {}

export function parseMapping(text: string): MappingEntry[] {
  const lines = text.split('\n');
  if (lines[lines.length - 1] === '') lines.pop();
  if (lines.length === 0 || lines[0] !== MAPPING_HEADER) {
    throw new MappingError(`first line must be "${MAPPING_HEADER}"`);
  }
  const entries: MappingEntry[] = [];
  const names = new Set<string>();
  const ids = new Set<bigint>();
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i]!;
    const fields = line.split('\t');
    if (fields.length !== 2) {
      throw new MappingError(`line ${i + 1}: expected 2 tab-separated fields, got ${fields.length}`);
    }
    const [filename, rawId] = fields as [string, string];
    if (filename === '') throw new MappingError(`line ${i + 1}: empty filename`);
    if (filename.includes('..') || filename.startsWith('/')) {
      throw new MappingError(`line ${i + 1}: filename must be a plain relative path`);
    }
    if (!/^\d+$/.test(rawId)) {
      throw new MappingError(`line ${i + 1}: image_id ${JSON.stringify(rawId)} is not a non-negative integer`);
    }
    const imageId = BigInt(rawId);
    if (names.has(filename)) throw new MappingError(`line ${i + 1}: duplicate filename ${filename}`);
    if (ids.has(imageId)) throw new MappingError(`line ${i + 1}: duplicate image_id ${imageId}`);
    names.add(filename);
    ids.add(imageId);
    entries.push({ filename, imageId });
  }
  return entries;
}
