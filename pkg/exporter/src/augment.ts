/**
 * Seeded image augmentations: a recipe draws a fixed number of distinct
 * operations (default 2 of the 16 below) per image and applies them
 * sequentially. Magnitude ranges are implementation defaults, documented
 * here and in the README; they are not taken from any published recipe.
 */
import * as tf from '@tensorflow/tfjs';
import { RawImage, fromTensor, toTensor } from './image';
import { Rng } from './rng';

export const OPERATIONS = [
  'identity',
  'shear-x',
  'shear-y',
  'translate-x',
  'translate-y',
  'rotate',
  'brightness',
  'saturation',
  'contrast',
  'sharpness',
  'posterize',
  'auto-contrast',
  'equalize',
  'salt-and-pepper',
  'gaussian-noise',
  'blur',
] as const;

export type OperationName = (typeof OPERATIONS)[number];

export interface AugmentRecipe {
  /** Pool to draw from; defaults to all 16 operations. */
  operations?: string[];
  /** Distinct operations applied sequentially per image. */
  count?: number;
}

const MAX_SHEAR = 0.3; // tangent of the shear angle
const MAX_TRANSLATE = 0.25; // fraction of the image side
const MAX_ROTATE = 30; // degrees
const BRIGHTNESS_RANGE: [number, number] = [0.6, 1.4];
const SATURATION_RANGE: [number, number] = [0.5, 1.5];
const CONTRAST_RANGE: [number, number] = [0.6, 1.4];
const SHARPNESS_RANGE: [number, number] = [0.3, 1.7];
const POSTERIZE_BITS: [number, number] = [3, 5];
const SALT_PEPPER_FRACTION = 0.02;
const NOISE_SIGMA = 0.05;

function clip01(t: tf.Tensor): tf.Tensor3D {
  return t.clipByValue(0, 1) as tf.Tensor3D;
}

/** Projective transform row for tf.image.transform (output -> input). */
function warp(image: RawImage, coeffs: number[]): RawImage {
  const out = tf.tidy(() => {
    const batched = toTensor(image).expandDims(0) as tf.Tensor4D;
    const warped = tf.image.transform(
      batched,
      tf.tensor2d([coeffs], [1, 8]),
      'bilinear',
      'constant',
      0,
    );
    return warped.squeeze([0]) as tf.Tensor3D;
  });
  const result = fromTensor(out);
  out.dispose();
  return result;
}

function pointwise(image: RawImage, fn: (t: tf.Tensor3D) => tf.Tensor3D): RawImage {
  const out = tf.tidy(() => fn(toTensor(image)));
  const result = fromTensor(out);
  out.dispose();
  return result;
}

function blur3x3(t: tf.Tensor3D): tf.Tensor3D {
  // separable 3x3 Gaussian, kernel [1,2,1]/4 in each direction
  const k = tf.tensor1d([0.25, 0.5, 0.25]);
  const kx = k.reshape([1, 3, 1, 1]).tile([1, 1, 3, 1]) as tf.Tensor4D;
  const ky = k.reshape([3, 1, 1, 1]).tile([1, 1, 3, 1]) as tf.Tensor4D;
  const horizontal = tf.depthwiseConv2d(t.expandDims(0) as tf.Tensor4D, kx, 1, 'same');
  const both = tf.depthwiseConv2d(horizontal, ky, 1, 'same');
  return both.squeeze([0]) as tf.Tensor3D;
}

function grayscale(t: tf.Tensor3D): tf.Tensor3D {
  return t.mean(2, true).tile([1, 1, 3]) as tf.Tensor3D;
}

function applyOperation(image: RawImage, op: OperationName, rng: Rng): RawImage {
  const sign = () => (rng.next() < 0.5 ? -1 : 1);
  switch (op) {
    case 'identity':
      return { ...image, data: image.data.slice() };
    case 'shear-x': {
      const s = sign() * rng.uniform(0.1, MAX_SHEAR);
      return warp(image, [1, s, -s * image.height * 0.5, 0, 1, 0, 0, 0]);
    }
    case 'shear-y': {
      const s = sign() * rng.uniform(0.1, MAX_SHEAR);
      return warp(image, [1, 0, 0, s, 1, -s * image.width * 0.5, 0, 0]);
    }
    case 'translate-x': {
      const d = sign() * rng.uniform(0.05, MAX_TRANSLATE) * image.width;
      return warp(image, [1, 0, d, 0, 1, 0, 0, 0]);
    }
    case 'translate-y': {
      const d = sign() * rng.uniform(0.05, MAX_TRANSLATE) * image.height;
      return warp(image, [1, 0, 0, 0, 1, d, 0, 0]);
    }
    case 'rotate': {
      const angle = (sign() * rng.uniform(5, MAX_ROTATE) * Math.PI) / 180;
      const cx = image.width / 2;
      const cy = image.height / 2;
      const cos = Math.cos(angle);
      const sin = Math.sin(angle);
      return warp(image, [
        cos, -sin, cx - cos * cx + sin * cy,
        sin, cos, cy - sin * cx - cos * cy,
        0, 0,
      ]);
    }
    case 'brightness': {
      const f = rng.uniform(...BRIGHTNESS_RANGE);
      return pointwise(image, (t) => clip01(t.mul(f)));
    }
    case 'saturation': {
      const f = rng.uniform(...SATURATION_RANGE);
      return pointwise(image, (t) =>
        clip01(grayscale(t).mul(1 - f).add(t.mul(f)) as tf.Tensor3D),
      );
    }
    case 'contrast': {
      const f = rng.uniform(...CONTRAST_RANGE);
      return pointwise(image, (t) => {
        const mean = t.mean();
        return clip01(t.sub(mean).mul(f).add(mean) as tf.Tensor3D);
      });
    }
    case 'sharpness': {
      // factor < 1 blurs toward the smoothed image, > 1 over-sharpens
      const f = rng.uniform(...SHARPNESS_RANGE);
      return pointwise(image, (t) => {
        const smooth = blur3x3(t);
        return clip01(smooth.add(t.sub(smooth).mul(f)) as tf.Tensor3D);
      });
    }
    case 'posterize': {
      const bits = POSTERIZE_BITS[0] + rng.int(POSTERIZE_BITS[1] - POSTERIZE_BITS[0] + 1);
      const levels = Math.pow(2, bits);
      return pointwise(image, (t) =>
        t.mul(levels - 1).round().div(levels - 1) as tf.Tensor3D,
      );
    }
    case 'auto-contrast': {
      return pointwise(image, (t) => {
        const lo = t.min([0, 1], true);
        const hi = t.max([0, 1], true);
        const span = hi.sub(lo);
        const safe = span.maximum(1e-6);
        return clip01(t.sub(lo).div(safe) as tf.Tensor3D);
      });
    }
    case 'equalize': {
      const out = { ...image, data: image.data.slice() };
      equalizeChannels(out);
      return out;
    }
    case 'salt-and-pepper': {
      const out = { ...image, data: image.data.slice() };
      const pixels = image.width * image.height;
      const hits = Math.max(1, Math.round(pixels * SALT_PEPPER_FRACTION));
      for (let k = 0; k < hits; k++) {
        const p = rng.int(pixels);
        const value = rng.next() < 0.5 ? 0 : 1;
        out.data[p * 3] = value;
        out.data[p * 3 + 1] = value;
        out.data[p * 3 + 2] = value;
      }
      return out;
    }
    case 'gaussian-noise': {
      const out = { ...image, data: image.data.slice() };
      for (let i = 0; i < out.data.length; i++) {
        out.data[i] = Math.min(1, Math.max(0, out.data[i] + NOISE_SIGMA * rng.normal()));
      }
      return out;
    }
    case 'blur':
      return pointwise(image, (t) => blur3x3(t));
  }
}

function equalizeChannels(image: RawImage): void {
  const pixels = image.width * image.height;
  for (let c = 0; c < 3; c++) {
    const hist = new Uint32Array(256);
    for (let i = 0; i < pixels; i++) {
      hist[Math.min(255, Math.round(image.data[i * 3 + c] * 255))]++;
    }
    const cdf = new Float64Array(256);
    let acc = 0;
    for (let b = 0; b < 256; b++) {
      acc += hist[b];
      cdf[b] = acc;
    }
    const lowest = cdf.find((v) => v > 0) ?? 0;
    const span = pixels - lowest;
    if (span <= 0) continue;
    for (let i = 0; i < pixels; i++) {
      const b = Math.min(255, Math.round(image.data[i * 3 + c] * 255));
      image.data[i * 3 + c] = (cdf[b] - lowest) / span;
    }
  }
}

/** Draw `count` distinct operations from the recipe pool, in draw order. */
export function drawOperations(recipe: AugmentRecipe, rng: Rng): OperationName[] {
  const pool = (recipe.operations ?? [...OPERATIONS]).map((name) => {
    if (!(OPERATIONS as readonly string[]).includes(name)) {
      throw new Error(`unknown augmentation operation ${JSON.stringify(name)}`);
    }
    return name as OperationName;
  });
  const count = recipe.count ?? 2;
  if (count > pool.length) {
    throw new Error(`recipe asks for ${count} distinct operations from a pool of ${pool.length}`);
  }
  const picked: OperationName[] = [];
  const available = [...pool];
  for (let k = 0; k < count; k++) {
    picked.push(available.splice(rng.int(available.length), 1)[0]);
  }
  return picked;
}

/** Apply a seeded augmentation recipe; same seed, same output pixels. */
export function augmentImage(image: RawImage, recipe: AugmentRecipe, seed: number): RawImage {
  const rng = new Rng(seed);
  let out = image;
  for (const op of drawOperations(recipe, rng)) {
    out = applyOperation(out, op, rng);
  }
  return out;
}
