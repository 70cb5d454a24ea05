import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { afterEach, beforeEach, describe, expect, it } from 'vitest';
import { readDump } from '../src/dump';
import { exportFolder } from '../src/export';
import { BUILTIN_MODELS, RandomFeatureExtractor, resolveModel } from '../src/model';
import { makeTestImage } from './helpers';
import { writeImageFolder } from './helpers';
import { preprocess } from '../src/image';

let dir: string;

beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), 'vdna-export-'));
});

afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

describe('random feature extractor', () => {
  it('matches the ViT-B/16-class configuration: 13 x 768 neurons, 197 tokens', () => {
    const model = BUILTIN_MODELS['vit-b16-random']();
    expect(model.layers.length).toBe(13);
    expect(model.layers.every((l) => l.neurons === 768)).toBe(true);
    expect(model.layers.reduce((acc, l) => acc + l.neurons, 0)).toBe(9984);
    const extractor = new RandomFeatureExtractor(model);
    expect(extractor.tokens).toBe(197);
  });

  it('is deterministic and sensitive to pixel content', () => {
    const model = BUILTIN_MODELS['vit-b16-random']();
    const extractor = new RandomFeatureExtractor(model);
    const image = preprocess(makeTestImage(260, 300, 4), model.inputSize);
    const other = preprocess(makeTestImage(260, 300, 5), model.inputSize);
    const a = extractor.forward(image);
    const b = extractor.forward(image);
    const c = extractor.forward(other);
    expect(Buffer.from(a[0].values.buffer).equals(Buffer.from(b[0].values.buffer))).toBe(true);
    expect(Buffer.from(a[0].values.buffer).equals(Buffer.from(c[0].values.buffer))).toBe(false);
    for (const layer of a) {
      expect(layer.spatial).toBe(197);
      expect(layer.values.length).toBe(768 * 197);
    }
  });

  it('supports hook-spec files for unknown models', () => {
    const spec = path.join(dir, 'model.json');
    fs.writeFileSync(
      spec,
      JSON.stringify({
        model_id: 'custom-tiny',
        input_size: 64,
        patch_size: 16,
        layers: [
          { name: 'early', neurons: 10 },
          { name: 'late', neurons: 20 },
        ],
        seed: 3,
      }),
    );
    const model = resolveModel(spec);
    const extractor = new RandomFeatureExtractor(model);
    expect(extractor.tokens).toBe(17);
    const out = extractor.forward(makeTestImage(64, 64, 1));
    expect(out[0].values.length).toBe(10 * 17);
    expect(out[1].values.length).toBe(20 * 17);
    expect(() => resolveModel('no-such-model')).toThrow(/built-ins/);
  });
});

describe('export pipeline', () => {
  it('exports a 10-image folder twice byte-identically (full ViT shape)', () => {
    const images = path.join(dir, 'images');
    writeImageFolder(images, 10, { width: 250, height: 230 });
    const model = resolveModel('vit-b16-random');
    const out1 = path.join(dir, 'a.vdnaact');
    const out2 = path.join(dir, 'b.vdnaact');
    const r1 = exportFolder({ model, imagesDir: images, outPath: out1 });
    const r2 = exportFolder({ model, imagesDir: images, outPath: out2 });
    expect(r1.imagesWritten).toBe(10);
    expect(r2.imagesWritten).toBe(10);
    expect(fs.readFileSync(out1).equals(fs.readFileSync(out2))).toBe(true);

    const { header, records } = readDump(out1);
    expect(header.extractorId).toBe('vit-b16-random');
    expect(header.layers.length).toBe(13);
    expect(header.layers.reduce((acc, l) => acc + l.neurons, 0)).toBe(9984);
    expect(records.length).toBe(10);
    for (const record of records) {
      for (const layer of record.layerValues) {
        expect(layer.spatial).toBe(197);
      }
    }
  }, 180_000);

  it('honors layer subsets in model order', () => {
    const images = path.join(dir, 'images');
    writeImageFolder(images, 2, { width: 64, height: 80 });
    const spec = path.join(dir, 'model.json');
    fs.writeFileSync(
      spec,
      JSON.stringify({
        model_id: 'custom-tiny',
        input_size: 32,
        patch_size: 16,
        layers: [
          { name: 'a', neurons: 4 },
          { name: 'b', neurons: 5 },
          { name: 'c', neurons: 6 },
        ],
      }),
    );
    const out = path.join(dir, 'x.vdnaact');
    exportFolder({
      model: resolveModel(spec),
      imagesDir: images,
      outPath: out,
      layerNames: ['c', 'a'],
    });
    const { header } = readDump(out);
    expect(header.layers.map((l) => l.name)).toEqual(['a', 'c']);
    expect(() =>
      exportFolder({
        model: resolveModel(spec),
        imagesDir: images,
        outPath: out,
        layerNames: ['missing'],
      }),
    ).toThrow(/not found/);
  });

  it('skips undecodable images with a log message', () => {
    const images = path.join(dir, 'images');
    writeImageFolder(images, 2, { width: 64, height: 64 });
    fs.writeFileSync(path.join(images, 'broken.png'), Buffer.from('not a png'));
    const logs: string[] = [];
    const spec = {
      modelId: 'tiny',
      inputSize: 32,
      patchSize: 16,
      layers: [{ name: 'a', neurons: 3 }],
      weightSeed: 0,
    };
    const result = exportFolder({
      model: spec,
      imagesDir: images,
      outPath: path.join(dir, 'x.vdnaact'),
      log: (m) => logs.push(m),
    });
    expect(result.imagesWritten).toBe(2);
    expect(result.imagesSkipped).toBe(1);
    expect(logs.some((m) => m.includes('broken.png'))).toBe(true);
  });

  it('augmented exports differ from plain exports but are seed-stable', () => {
    const images = path.join(dir, 'images');
    writeImageFolder(images, 3, { width: 96, height: 96 });
    const model = {
      modelId: 'tiny',
      inputSize: 64,
      patchSize: 16,
      layers: [{ name: 'a', neurons: 8 }],
      weightSeed: 1,
    };
    const plain = path.join(dir, 'plain.vdnaact');
    const aug1 = path.join(dir, 'aug1.vdnaact');
    const aug2 = path.join(dir, 'aug2.vdnaact');
    exportFolder({ model, imagesDir: images, outPath: plain });
    exportFolder({ model, imagesDir: images, outPath: aug1, augment: {}, seed: 9 });
    exportFolder({ model, imagesDir: images, outPath: aug2, augment: {}, seed: 9 });
    expect(fs.readFileSync(aug1).equals(fs.readFileSync(aug2))).toBe(true);
    expect(fs.readFileSync(aug1).equals(fs.readFileSync(plain))).toBe(false);
  });
});
