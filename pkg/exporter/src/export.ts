/**
 * The export pipeline: decode each image in a folder, optionally augment it
 * (seeded), centre-crop and resize to the model's input size, run the
 * extractor with hooks on the configured layers and append one record per
 * image to a VDNAACT1 dump.
 */
import * as fs from 'fs';
import * as path from 'path';
import { DumpHeader, DumpWriter, LayerSpec } from './dump';
import { augmentImage, AugmentRecipe } from './augment';
import { loadPng, preprocess, RawImage } from './image';
import { ModelConfig, RandomFeatureExtractor } from './model';
import { Rng } from './rng';

export interface ExportOptions {
  model: ModelConfig;
  imagesDir: string;
  outPath: string;
  /** Subset of hooked layer names; defaults to every model layer. */
  layerNames?: string[];
  augment?: AugmentRecipe;
  seed?: number;
  log?: (message: string) => void;
}

export interface ExportResult {
  outPath: string;
  imagesWritten: number;
  imagesSkipped: number;
  header: DumpHeader;
}

function selectLayers(model: ModelConfig, names?: string[]): LayerSpec[] {
  if (!names || names.length === 0) return model.layers;
  for (const name of names) {
    if (!model.layers.some((l) => l.name === name)) {
      const known = model.layers.map((l) => l.name).join(', ');
      throw new Error(`layer ${JSON.stringify(name)} not found in model; available: ${known}`);
    }
  }
  // keep model order so header order always matches record order
  return model.layers.filter((l) => names.includes(l.name));
}

export function listImages(dir: string): string[] {
  return fs
    .readdirSync(dir)
    .filter((f) => f.toLowerCase().endsWith('.png'))
    .sort();
}

export function exportFolder(options: ExportOptions): ExportResult {
  const log = options.log ?? (() => {});
  const layers = selectLayers(options.model, options.layerNames);
  const hooked = new Set(layers.map((l) => l.name));
  const extractor = new RandomFeatureExtractor(options.model);
  const header: DumpHeader = { extractorId: options.model.modelId, layers };
  const files = listImages(options.imagesDir);
  if (files.length === 0) {
    throw new Error(`no .png images found in ${options.imagesDir}`);
  }
  const writer = new DumpWriter(options.outPath, header);
  const rng = new Rng(options.seed ?? 0);
  let written = 0;
  let skipped = 0;
  files.forEach((file, index) => {
    let image: RawImage;
    try {
      image = loadPng(path.join(options.imagesDir, file));
    } catch (err) {
      log(`skipping undecodable image ${file}: ${(err as Error).message}`);
      skipped += 1;
      return;
    }
    if (options.augment) {
      image = augmentImage(image, options.augment, rng.fork(index).int(0xffffffff));
    }
    const prepared = preprocess(image, options.model.inputSize);
    const allOutputs = extractor.forward(prepared);
    const layerValues = options.model.layers
      .map((layer, i) => ({ layer, output: allOutputs[i] }))
      .filter(({ layer }) => hooked.has(layer.name))
      .map(({ output }) => output);
    writer.writeRecord({ imageId: file, layerValues });
    written += 1;
  });
  writer.close();
  return { outPath: options.outPath, imagesWritten: written, imagesSkipped: skipped, header };
}
