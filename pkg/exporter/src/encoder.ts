/**
 * Deterministic dual encoder backed by a checkpoint file.
 *
 * The checkpoint pins everything that affects the output vectors: embedding
 * width, featurizer settings, and the two projection matrices (stored as
 * base64 little-endian f32).  Images are featurized by a normalized byte
 * histogram, captions by hashed byte trigram counts; both features are
 * projected and L2-normalized.  No runtime randomness, so re-exports are
 * bit-identical.
 */

import { readFileSync } from 'node:fs';
import { l2Normalize } from './capevec.js';

export interface Checkpoint {
  model_id: string;
  dim: number;
  image_feature_bins: number;
  text_hash_buckets: number;
  w_image_b64: string;
  w_text_b64: string;
}

export class DualEncoder {
  readonly modelId: string;
  readonly dim: number;
  readonly imageBins: number;
  readonly textBuckets: number;
  private readonly wImage: Float32Array;
  private readonly wText: Float32Array;

  constructor(checkpoint: Checkpoint) {
    this.modelId = checkpoint.model_id;
    this.dim = checkpoint.dim;
    this.imageBins = checkpoint.image_feature_bins;
    this.textBuckets = checkpoint.text_hash_buckets;
    this.wImage = decodeMatrix(checkpoint.w_image_b64, this.dim * this.imageBins);
    this.wText = decodeMatrix(checkpoint.w_text_b64, this.dim * this.textBuckets);
  }

  static load(path: string): DualEncoder {
    const checkpoint = JSON.parse(readFileSync(path, 'utf-8')) as Checkpoint;
    for (const field of ['model_id', 'dim', 'image_feature_bins', 'text_hash_buckets', 'w_image_b64', 'w_text_b64']) {
      if (!(field in checkpoint)) throw new Error(`checkpoint is missing ${field}`);
    }
    return new DualEncoder(checkpoint);
  }

  /** Byte-histogram features; rejects empty payloads (unreadable image). */
  imageFeatures(bytes: Buffer): Float64Array {
    if (bytes.length === 0) throw new Error('empty image payload');
    const features = new Float64Array(this.imageBins);
    const shift = Math.log2(256 / this.imageBins);
    for (const b of bytes) features[b >> shift] += 1;
    for (let i = 0; i < features.length; i++) features[i] /= bytes.length;
    return features;
  }

  /** Hashed byte-trigram counts over the sentinel-padded UTF-8 text. */
  textFeatures(text: string): Float64Array {
    const padded = Buffer.from(`${text}`, 'utf-8');
    const features = new Float64Array(this.textBuckets);
    for (let i = 0; i + 2 < padded.length; i++) {
      features[fnv1a(padded, i, 3) % this.textBuckets] += 1;
    }
    let sum = 0;
    for (const f of features) sum += f * f;
    const norm = Math.sqrt(sum);
    for (let i = 0; i < features.length; i++) features[i] /= norm;
    return features;
  }

  encodeImage(bytes: Buffer): Float32Array {
    return project(this.wImage, this.imageFeatures(bytes), this.dim, this.imageBins);
  }

  encodeText(text: string): Float32Array {
    return project(this.wText, this.textFeatures(text), this.dim, this.textBuckets);
  }
}

function project(weights: Float32Array, features: Float64Array, dim: number, width: number): Float32Array {
  const out = new Float32Array(dim);
  for (let row = 0; row < dim; row++) {
    let acc = 0;
    const base = row * width;
    for (let col = 0; col < width; col++) acc += weights[base + col] * features[col];
    out[row] = acc;
  }
  return l2Normalize(out);
}

function decodeMatrix(b64: string, expected: number): Float32Array {
  const raw = Buffer.from(b64, 'base64');
  if (raw.length !== expected * 4) {
    throw new Error(`projection matrix has ${raw.length} bytes, expected ${expected * 4}`);
  }
  const out = new Float32Array(expected);
  for (let i = 0; i < expected; i++) out[i] = raw.readFloatLE(4 * i);
  return out;
}

export function fnv1a(bytes: Buffer, start: number, length: number): number {
  let hash = 0x811c9dc5;
  for (let i = start; i < start + length; i++) {
    hash ^= bytes[i];
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}
