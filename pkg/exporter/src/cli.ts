#!/usr/bin/env node
/**
 * vdna-export: run a feature extractor over an image folder and write a
 * VDNAACT1 activation dump for the fingerprint toolkit.
 */
import * as fs from 'fs';
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import { AugmentRecipe } from './augment';
import { exportFolder } from './export';
import { resolveModel } from './model';

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .option('model', {
      type: 'string',
      demandOption: true,
      describe: 'Built-in model id (vit-b16-random) or path to a hook-spec JSON',
    })
    .option('images', { type: 'string', demandOption: true, describe: 'Folder of .png images' })
    .option('out', { type: 'string', demandOption: true, describe: 'Output dump path' })
    .option('size', { type: 'number', describe: 'Override the model input size' })
    .option('layers', {
      type: 'string',
      describe: 'Comma-separated subset of hooked layer names (default: all)',
    })
    .option('augment', { type: 'string', describe: 'Path to an augmentation recipe JSON' })
    .option('seed', { type: 'number', default: 0, describe: 'Seed for augmentations' })
    .strict()
    .help()
    .parse();

  const model = resolveModel(args.model);
  if (args.size) {
    if (args.size % model.patchSize !== 0) {
      throw new Error(`--size ${args.size} is not a multiple of patch size ${model.patchSize}`);
    }
    model.inputSize = args.size;
  }
  let recipe: AugmentRecipe | undefined;
  if (args.augment) {
    recipe = JSON.parse(fs.readFileSync(args.augment, 'utf-8'));
  }
  const result = exportFolder({
    model,
    imagesDir: args.images,
    outPath: args.out,
    layerNames: args.layers ? args.layers.split(',').map((s) => s.trim()) : undefined,
    augment: recipe,
    seed: args.seed,
    log: (message) => console.error(message),
  });
  console.log(
    `exported ${result.imagesWritten} image(s)` +
      (result.imagesSkipped ? ` (${result.imagesSkipped} skipped)` : '') +
      ` -> ${result.outPath}`,
  );
  return 0;
}

if (require.main === module) {
  main(hideBin(process.argv))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(JSON.stringify({ error: err.constructor.name, message: err.message }));
      process.exit(1);
    });
}
