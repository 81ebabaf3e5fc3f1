/**
 * Export job runner: image directory + caption JSONL -> two CAPEVEC1 stores
 * plus a manifest pinning the model and preprocessing settings.
 */

import { createHash } from 'node:crypto';
import { readFileSync, readdirSync, writeFileSync, statSync } from 'node:fs';
import { basename, extname, join } from 'node:path';
import { encodeStore, StoreRecord } from './capevec.js';
import { DualEncoder } from './encoder.js';

export interface ExportJob {
  encoder: DualEncoder;
  imageDir: string;
  captionsPath: string;
  outImages: string;
  outTexts: string;
  manifestPath?: string;
  batchSize?: number;
  device?: string;
}

export interface ExportReport {
  images: number;
  texts: number;
  skipped: { file: string; reason: string }[];
  manifestPath: string;
}

interface Caption {
  id: string;
  text: string;
}

export function readCaptions(path: string): Caption[] {
  const captions: Caption[] = [];
  const seen = new Set<string>();
  const lines = readFileSync(path, 'utf-8').split('\n');
  lines.forEach((line, index) => {
    if (!line.trim()) return;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch {
      throw new Error(`${path}: line ${index + 1} is not valid JSON`);
    }
    const record = parsed as Record<string, unknown>;
    if (typeof record.id !== 'string' || typeof record.text !== 'string') {
      throw new Error(`${path}: line ${index + 1} needs string fields "id" and "text"`);
    }
    if (seen.has(record.id)) {
      throw new Error(`duplicate caption id ${record.id}`);
    }
    seen.add(record.id);
    captions.push({ id: record.id, text: record.text });
  });
  return captions;
}

export function listImages(dir: string): string[] {
  const files = readdirSync(dir)
    .filter((name) => statSync(join(dir, name)).isFile())
    .sort();
  const seen = new Set<string>();
  for (const file of files) {
    const id = basename(file, extname(file));
    if (seen.has(id)) throw new Error(`duplicate image id ${id} (from ${file})`);
    seen.add(id);
  }
  return files;
}

export function runExport(job: ExportJob): ExportReport {
  const { encoder } = job;
  const batchSize = job.batchSize ?? 32;
  if (batchSize <= 0) throw new Error('batch size must be positive');

  // validate all inputs (ids unique, captions parseable) before any write
  const captions = readCaptions(job.captionsPath);
  const imageFiles = listImages(job.imageDir);

  const skipped: { file: string; reason: string }[] = [];
  const imageRecords: StoreRecord[] = [];
  for (let start = 0; start < imageFiles.length; start += batchSize) {
    for (const file of imageFiles.slice(start, start + batchSize)) {
      const path = join(job.imageDir, file);
      let vector: Float32Array;
      try {
        vector = encoder.encodeImage(readFileSync(path));
      } catch (error) {
        skipped.push({ file, reason: (error as Error).message });
        continue;
      }
      if (vector.length !== encoder.dim) throw new Error('dimension drift across batches');
      imageRecords.push({ id: basename(file, extname(file)), modality: 0, vector });
    }
  }
  if (imageRecords.length === 0) throw new Error('no readable images in the input directory');

  const textRecords: StoreRecord[] = [];
  for (let start = 0; start < captions.length; start += batchSize) {
    for (const caption of captions.slice(start, start + batchSize)) {
      const vector = encoder.encodeText(caption.text);
      if (vector.length !== encoder.dim) throw new Error('dimension drift across batches');
      textRecords.push({ id: caption.id, modality: 1, vector });
    }
  }
  if (textRecords.length === 0) throw new Error('no captions to encode');

  const imagesBlob = encodeStore(encoder.dim, imageRecords);
  const textsBlob = encodeStore(encoder.dim, textRecords);
  writeFileSync(job.outImages, imagesBlob);
  writeFileSync(job.outTexts, textsBlob);

  const manifestPath = job.manifestPath ?? `${job.outImages}.manifest.json`;
  const manifest = {
    model_id: encoder.modelId,
    dim: encoder.dim,
    preprocessing: {
      image: { kind: 'byte-histogram', bins: encoder.imageBins, normalization: 'l1' },
      text: { kind: 'hashed-byte-trigrams', buckets: encoder.textBuckets, normalization: 'l2' },
    },
    device: job.device ?? 'cpu',
    batch_size: batchSize,
    counts: { images: imageRecords.length, texts: textRecords.length },
    skipped,
    outputs: {
      [job.outImages]: sha256(imagesBlob),
      [job.outTexts]: sha256(textsBlob),
    },
  };
  writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n');
  return { images: imageRecords.length, texts: textRecords.length, skipped, manifestPath };
}

function sha256(blob: Buffer): string {
  return createHash('sha256').update(blob).digest('hex');
}
