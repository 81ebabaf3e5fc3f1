#!/usr/bin/env node
/**
 * capevec-export: run a dual-encoder checkpoint over an image directory and
 * a caption JSONL, writing CAPEVEC1 stores.
 *
 *   capevec-export export --model tiny-dual-encoder-v1 \
 *     --images ./imgs --captions captions.jsonl \
 *     --out-images images.capevec --out-texts texts.capevec
 *
 * --model accepts a bundled model id (under models/) or a checkpoint path.
 */

import { parseArgs } from 'node:util';
import { existsSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { DualEncoder } from './encoder.js';
import { runExport } from './export.js';

function resolveModel(model: string): string {
  if (existsSync(model)) return model;
  const bundled = join(dirname(fileURLToPath(import.meta.url)), '..', '..', 'models', `${model}.json`);
  if (existsSync(bundled)) return bundled;
  throw new Error(`model ${model} not found (no file and no bundled checkpoint)`);
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command !== 'export') {
    console.error('usage: capevec-export export --model <id> --images <dir> --captions <jsonl> --out-images <path> --out-texts <path>');
    return 2;
  }
  const { values } = parseArgs({
    args: rest,
    options: {
      model: { type: 'string' },
      images: { type: 'string' },
      captions: { type: 'string' },
      'out-images': { type: 'string' },
      'out-texts': { type: 'string' },
      'batch-size': { type: 'string', default: '32' },
      device: { type: 'string', default: 'cpu' },
      manifest: { type: 'string' },
    },
  });
  for (const flag of ['model', 'images', 'captions', 'out-images', 'out-texts'] as const) {
    if (!values[flag]) {
      console.error(`missing required flag --${flag}`);
      return 2;
    }
  }
  try {
    const encoder = DualEncoder.load(resolveModel(values.model as string));
    const report = runExport({
      encoder,
      imageDir: values.images as string,
      captionsPath: values.captions as string,
      outImages: values['out-images'] as string,
      outTexts: values['out-texts'] as string,
      manifestPath: values.manifest,
      batchSize: Number(values['batch-size']),
      device: values.device,
    });
    console.log(`exported ${report.images} image and ${report.texts} text embeddings`);
    if (report.skipped.length > 0) {
      console.warn(`skipped ${report.skipped.length} unreadable file(s):`);
      for (const s of report.skipped) console.warn(`  ${s.file}: ${s.reason}`);
    }
    console.log(`manifest: ${report.manifestPath}`);
    return 0;
  } catch (error) {
    console.error(`error: ${(error as Error).message}`);
    return 1;
  }
}

process.exit(main(process.argv.slice(2)));
