/**
 * End-to-end through the external contract: export activation dumps, then
 * run the fingerprint toolkit's CLI (calibrate, fit, dist) on them. The
 * fingerprint toolkit lives in the parent directory and is installed as the
 * `vdna` executable; these tests fail fast if it is missing.
 */
import { execFileSync } from 'child_process';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { afterEach, beforeEach, describe, expect, it } from 'vitest';
import { exportFolder } from '../src/export';
import { resolveModel } from '../src/model';
import { writeImageFolder } from './helpers';

let dir: string;

beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), 'vdna-e2e-'));
});

afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

function vdna(...args: string[]): string {
  return execFileSync('vdna', args, { encoding: 'utf-8' });
}

function tinySpec(): string {
  const spec = path.join(dir, 'model.json');
  fs.writeFileSync(
    spec,
    JSON.stringify({
      model_id: 'custom-tiny',
      input_size: 64,
      patch_size: 16,
      layers: [
        { name: 'early', neurons: 12 },
        { name: 'late', neurons: 8 },
      ],
      seed: 21,
    }),
  );
  return spec;
}

describe('exporter + fingerprint toolkit', () => {
  it('dumps pass the reader validation of the consuming toolkit', () => {
    const images = path.join(dir, 'images');
    writeImageFolder(images, 4, { width: 90, height: 70 });
    const out = path.join(dir, 'x.vdnaact');
    exportFolder({ model: resolveModel(tinySpec()), imagesDir: images, outPath: out });
    // calibrate reads and validates every record; a nonzero exit would throw
    const calOut = vdna('calibrate', '--dumps', out, '--out', path.join(dir, 'c.vdnacal'));
    expect(calOut).toContain('calibrated 1 dump(s)');
  });

  it('folder vs itself gives distance 0, vs an augmented copy > 0', () => {
    const images = path.join(dir, 'images');
    writeImageFolder(images, 6, { width: 120, height: 100 });
    const model = resolveModel(tinySpec());
    const plainDump = path.join(dir, 'plain.vdnaact');
    const augDump = path.join(dir, 'aug.vdnaact');
    exportFolder({ model, imagesDir: images, outPath: plainDump });
    exportFolder({ model, imagesDir: images, outPath: augDump, augment: {}, seed: 3 });

    const cal = path.join(dir, 'c.vdnacal');
    vdna('calibrate', '--dumps', path.join(dir, '*.vdnaact'), '--out', cal);
    const plainVdna = path.join(dir, 'plain.vdna');
    const augVdna = path.join(dir, 'aug.vdna');
    vdna('fit', '--dumps', plainDump, '--cal', cal, '--bins', '200', '--out', plainVdna);
    vdna('fit', '--dumps', augDump, '--cal', cal, '--bins', '200', '--out', augVdna);

    const self = parseFloat(vdna('dist', plainVdna, plainVdna).trim());
    const cross = parseFloat(vdna('dist', plainVdna, augVdna).trim());
    expect(self).toBe(0);
    expect(cross).toBeGreaterThan(0);
  }, 120_000);
});
