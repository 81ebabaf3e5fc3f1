/**
 * CAPEVEC1 binary store writer/reader.
 *
 * Layout: 8-byte ASCII magic "CAPEVEC1", u32 LE version (1), u32 LE dimension,
 * u64 LE record count, then per record: u32 LE id byte length, UTF-8 id bytes,
 * u8 modality (0 = image, 1 = text), dimension * f32 LE components.
 */

export const MAGIC = 'CAPEVEC1';
export const VERSION = 1;

export type Modality = 0 | 1;

export interface StoreRecord {
  id: string;
  modality: Modality;
  vector: Float32Array;
}

export function l2Normalize(vector: Float32Array): Float32Array {
  let sum = 0;
  for (let i = 0; i < vector.length; i++) sum += vector[i] * vector[i];
  const norm = Math.sqrt(sum);
  if (norm === 0) throw new Error('cannot normalize a zero vector');
  const out = new Float32Array(vector.length);
  for (let i = 0; i < vector.length; i++) out[i] = vector[i] / norm;
  return out;
}

export function encodeStore(dimension: number, records: StoreRecord[]): Buffer {
  if (dimension <= 0) throw new Error('dimension must be positive');
  if (records.length === 0) throw new Error('refusing to encode an empty store');
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(24);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt32LE(VERSION, 8);
  header.writeUInt32LE(dimension, 12);
  header.writeBigUInt64LE(BigInt(records.length), 16);
  chunks.push(header);
  for (const record of records) {
    if (record.vector.length !== dimension) {
      throw new Error(`record ${record.id} has dimension ${record.vector.length}, expected ${dimension}`);
    }
    const idBytes = Buffer.from(record.id, 'utf-8');
    const prefix = Buffer.alloc(4);
    prefix.writeUInt32LE(idBytes.length, 0);
    const modality = Buffer.from([record.modality]);
    const vecBytes = Buffer.alloc(4 * dimension);
    for (let i = 0; i < dimension; i++) vecBytes.writeFloatLE(record.vector[i], 4 * i);
    chunks.push(prefix, idBytes, modality, vecBytes);
  }
  return Buffer.concat(chunks);
}

export function decodeStore(blob: Buffer): { dimension: number; records: StoreRecord[] } {
  if (blob.length < 24) throw new Error('too short for a CAPEVEC1 header');
  if (blob.toString('ascii', 0, 8) !== MAGIC) throw new Error('bad magic');
  if (blob.readUInt32LE(8) !== VERSION) throw new Error('unsupported version');
  const dimension = blob.readUInt32LE(12);
  const count = Number(blob.readBigUInt64LE(16));
  if (dimension === 0) throw new Error('declared dimension is 0');
  const records: StoreRecord[] = [];
  let offset = 24;
  for (let k = 0; k < count; k++) {
    if (offset + 4 > blob.length) throw new Error(`file ends at record ${k}`);
    const idLen = blob.readUInt32LE(offset);
    offset += 4;
    if (offset + idLen + 1 + 4 * dimension > blob.length) throw new Error(`file ends at record ${k}`);
    const id = blob.toString('utf-8', offset, offset + idLen);
    offset += idLen;
    const modality = blob[offset] as Modality;
    if (modality !== 0 && modality !== 1) throw new Error(`record ${id} has modality byte ${modality}`);
    offset += 1;
    const vector = new Float32Array(dimension);
    for (let i = 0; i < dimension; i++) vector[i] = blob.readFloatLE(offset + 4 * i);
    offset += 4 * dimension;
    records.push({ id, modality, vector });
  }
  if (offset !== blob.length) throw new Error('trailing bytes after the declared records');
  return { dimension, records };
}

export function maxNormDeviation(records: StoreRecord[]): number {
  let worst = 0;
  for (const record of records) {
    let sum = 0;
    for (let i = 0; i < record.vector.length; i++) sum += record.vector[i] * record.vector[i];
    worst = Math.max(worst, Math.abs(Math.sqrt(sum) - 1));
  }
  return worst;
}
