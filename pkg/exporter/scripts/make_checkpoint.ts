/**
 * Regenerate the bundled checkpoint deterministically (mulberry32 PRNG).
 * The committed JSON is the source of truth; this script documents how it
 * was produced and lets the weights be rebuilt byte-identically.
 */

import { writeFileSync, mkdirSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

const DIM = 32;
const IMAGE_BINS = 64;
const TEXT_BUCKETS = 512;
const SEED = 0xc0ffee01;

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

function gaussianMatrix(rows: number, cols: number, rand: () => number): Float32Array {
  const out = new Float32Array(rows * cols);
  for (let i = 0; i < out.length; i += 2) {
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    const r = Math.sqrt(-2 * Math.log(u));
    out[i] = r * Math.cos(2 * Math.PI * v);
    if (i + 1 < out.length) out[i + 1] = r * Math.sin(2 * Math.PI * v);
  }
  return out;
}

function toBase64(matrix: Float32Array): string {
  const buf = Buffer.alloc(matrix.length * 4);
  matrix.forEach((value, i) => buf.writeFloatLE(value, 4 * i));
  return buf.toString('base64');
}

const rand = mulberry32(SEED);
const checkpoint = {
  model_id: 'tiny-dual-encoder-v1',
  dim: DIM,
  image_feature_bins: IMAGE_BINS,
  text_hash_buckets: TEXT_BUCKETS,
  w_image_b64: toBase64(gaussianMatrix(DIM, IMAGE_BINS, rand)),
  w_text_b64: toBase64(gaussianMatrix(DIM, TEXT_BUCKETS, rand)),
};

const outDir = join(dirname(fileURLToPath(import.meta.url)), '..', '..', 'models');
mkdirSync(outDir, { recursive: true });
writeFileSync(join(outDir, 'tiny-dual-encoder-v1.json'), JSON.stringify(checkpoint) + '\n');
console.log(`wrote ${join(outDir, 'tiny-dual-encoder-v1.json')}`);
