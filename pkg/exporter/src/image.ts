/**
 * Image loading and the standard preprocessing pipeline: decode, optional
 * augmentation (elsewhere), centre-crop to a square, resize to the model's
 * input size.
 */
import * as fs from 'fs';
import { PNG } from 'pngjs';
import * as tf from '@tensorflow/tfjs';

/** RGB image, values in [0, 1], row-major interleaved. */
export interface RawImage {
  width: number;
  height: number;
  data: Float32Array;
}

export function decodePng(buffer: Buffer): RawImage {
  const png = PNG.sync.read(buffer);
  const data = new Float32Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    data[i * 3] = png.data[i * 4] / 255;
    data[i * 3 + 1] = png.data[i * 4 + 1] / 255;
    data[i * 3 + 2] = png.data[i * 4 + 2] / 255;
  }
  return { width: png.width, height: png.height, data };
}

export function encodePng(image: RawImage): Buffer {
  const png = new PNG({ width: image.width, height: image.height });
  for (let i = 0; i < image.width * image.height; i++) {
    for (let c = 0; c < 3; c++) {
      png.data[i * 4 + c] = Math.round(Math.min(1, Math.max(0, image.data[i * 3 + c])) * 255);
    }
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png);
}

export function loadPng(path: string): RawImage {
  return decodePng(fs.readFileSync(path));
}

export function toTensor(image: RawImage): tf.Tensor3D {
  return tf.tensor3d(image.data, [image.height, image.width, 3]);
}

export function fromTensor(t: tf.Tensor3D): RawImage {
  const [height, width] = t.shape;
  return { width, height, data: new Float32Array(t.dataSync()) };
}

export function centerCropSquare(image: RawImage): RawImage {
  const side = Math.min(image.width, image.height);
  const x0 = Math.floor((image.width - side) / 2);
  const y0 = Math.floor((image.height - side) / 2);
  const data = new Float32Array(side * side * 3);
  for (let y = 0; y < side; y++) {
    const src = ((y + y0) * image.width + x0) * 3;
    data.set(image.data.subarray(src, src + side * 3), y * side * 3);
  }
  return { width: side, height: side, data };
}

/** Centre-crop to a square and resize to size x size. */
export function preprocess(image: RawImage, size: number): RawImage {
  const cropped = centerCropSquare(image);
  if (cropped.width === size) return cropped;
  const resized = tf.tidy(() =>
    tf.image.resizeBilinear(toTensor(cropped), [size, size]),
  );
  const out = fromTensor(resized as tf.Tensor3D);
  resized.dispose();
  return out;
}
