/**
 * The `DYDQEMB1` embedding container, byte for byte.
 *
 * Layout (all little-endian):
 *   8 bytes  magic "DYDQEMB1"
 *   u32      format version (1)
 *   u32      vector dimension
 *   u64      record count
 *   then per record, ascending by id: u64 image id + dim * f32 payload.
 */

export const MAGIC = Buffer.from('DYDQEMB1', 'ascii');
export const FORMAT_VERSION = 1;
export const HEADER_BYTES = 8 + 4 + 4 + 8;

export interface EmbeddingRecord {
  id: bigint;
  vector: Float32Array;
}

export class FormatError extends Error {}
export class TruncatedFileError extends FormatError {}

export function recordBytes(dim: number): number {
  return 8 + 4 * dim;
}

export function writeEmbeddings(records: EmbeddingRecord[], dim: number): Buffer {
  if (!Number.isInteger(dim) || dim < 1) {
    throw new FormatError(`vector dimension must be a positive integer, got ${dim}`);
  }
  const seen = new Set<bigint>();
  for (const r of records) {
    if (r.id < 0n) throw new FormatError(`negative image id ${r.id}`);
    if (seen.has(r.id)) throw new FormatError(`duplicate image id ${r.id}`);
    seen.add(r.id);
    if (r.vector.length !== dim) {
      throw new FormatError(`record ${r.id}: vector has ${r.vector.length} values, expected ${dim}`);
    }
    for (const v of r.vector) {
      if (!Number.isFinite(v)) throw new FormatError(`record ${r.id}: non-finite value`);
    }
  }
  const sorted = [...records].sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));

  const buf = Buffer.alloc(HEADER_BYTES + sorted.length * recordBytes(dim));
  MAGIC.copy(buf, 0);
  buf.writeUInt32LE(FORMAT_VERSION, 8);
  buf.writeUInt32LE(dim, 12);
  buf.writeBigUInt64LE(BigInt(sorted.length), 16);
  let off = HEADER_BYTES;
  for (const r of sorted) {
    buf.writeBigUInt64LE(r.id, off);
    off += 8;
    for (const v of r.vector) {
      buf.writeFloatLE(v, off);
      off += 4;
    }
  }
  return buf;
}

export function readEmbeddings(buf: Buffer): { dim: number; records: EmbeddingRecord[] } {
  if (buf.length < HEADER_BYTES) {
    throw new TruncatedFileError(`file ends inside the ${HEADER_BYTES}-byte header`);
  }
  if (!buf.subarray(0, 8).equals(MAGIC)) {
    throw new FormatError('bad magic; not an embedding file');
  }
  const version = buf.readUInt32LE(8);
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`unsupported format version ${version}`);
  }
  const dim = buf.readUInt32LE(12);
  if (dim === 0) throw new FormatError('vector dimension 0');
  const count = Number(buf.readBigUInt64LE(16));
  const expected = HEADER_BYTES + count * recordBytes(dim);
  if (buf.length < expected) {
    throw new TruncatedFileError(`expected ${expected} bytes for ${count} records, have ${buf.length}`);
  }
  if (buf.length > expected) {
    throw new FormatError(`${buf.length - expected} trailing bytes after the last record`);
  }
  const records: EmbeddingRecord[] = [];
  let off = HEADER_BYTES;
  let prev = -1n;
  for (let i = 0; i < count; i++) {
    const id = buf.readBigUInt64LE(off);
    off += 8;
    if (id <= prev) throw new FormatError(`record ids not strictly ascending at ${id}`);
    prev = id;
    const vector = new Float32Array(dim);
    for (let j = 0; j < dim; j++) {
      vector[j] = buf.readFloatLE(off);
      off += 4;
    }
    records.push({ id, vector });
  }
  return { dim, records };
}
