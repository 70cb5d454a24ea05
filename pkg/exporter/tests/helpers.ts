import * as fs from 'fs';
import * as path from 'path';
import { encodePng, RawImage } from '../src/image';
import { Rng } from '../src/rng';

/** Structured synthetic image: gradients plus seeded rectangles. */
export function makeTestImage(width: number, height: number, seed: number): RawImage {
  const rng = new Rng(seed);
  const data = new Float32Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 3;
      data[i] = x / width;
      data[i + 1] = y / height;
      data[i + 2] = (x + y) / (width + height);
    }
  }
  for (let r = 0; r < 6; r++) {
    const w = 4 + rng.int(Math.max(1, width / 3));
    const h = 4 + rng.int(Math.max(1, height / 3));
    const x0 = rng.int(Math.max(1, width - w));
    const y0 = rng.int(Math.max(1, height - h));
    const color = [rng.next(), rng.next(), rng.next()];
    for (let y = y0; y < Math.min(height, y0 + h); y++) {
      for (let x = x0; x < Math.min(width, x0 + w); x++) {
        const i = (y * width + x) * 3;
        data[i] = color[0];
        data[i + 1] = color[1];
        data[i + 2] = color[2];
      }
    }
  }
  return { width, height, data };
}

export function writeImageFolder(
  dir: string,
  count: number,
  size: { width: number; height: number },
  seed = 7,
): string[] {
  fs.mkdirSync(dir, { recursive: true });
  const names: string[] = [];
  for (let i = 0; i < count; i++) {
    const name = `img-${String(i).padStart(3, '0')}.png`;
    const image = makeTestImage(size.width, size.height, seed + i);
    fs.writeFileSync(path.join(dir, name), encodePng(image));
    names.push(name);
  }
  return names;
}
