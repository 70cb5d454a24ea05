/**
 * Feature extractors with per-layer activation hooks.
 *
 * Pretrained weights cannot be fetched in an offline environment, so the
 * built-in registry ships seeded random-weight extractors instead: frozen
 * random features are a legitimate extractor choice and keep every export
 * fully reproducible from the model id alone. Any other layer layout can be
 * described by a hook-spec JSON file (layer names + expected neuron
 * counts), so the exporter is not tied to the built-in roster.
 *
 * Architecture of the random extractor: the image is cut into patch tokens
 * plus one global token, embedded as raw patch pixels (16x16x3 = 768
 * channels), and pushed through a stack of cheap seeded blocks, each a
 * channel permutation, per-channel affine, global token mixing and tanh.
 * Each block's output is exposed as one hooked layer; a seeded channel map
 * projects the 768-channel state onto the layer's declared neuron count.
 */
import * as fs from 'fs';
import { LayerSpec } from './dump';
import { RawImage } from './image';
import { Rng } from './rng';

export interface ModelConfig {
  modelId: string;
  inputSize: number;
  patchSize: number;
  layers: LayerSpec[];
  weightSeed: number;
}

/** ViT-B/16-class shape: 13 hooked layers of 768 neurons, 197 tokens at 224px. */
function vitB16Random(): ModelConfig {
  const layers: LayerSpec[] = [];
  for (let i = 0; i < 12; i++) {
    layers.push({ name: `attn-${String(i).padStart(2, '0')}`, neurons: 768 });
  }
  layers.push({ name: 'norm', neurons: 768 });
  return { modelId: 'vit-b16-random', inputSize: 224, patchSize: 16, layers, weightSeed: 768 };
}

export const BUILTIN_MODELS: Record<string, () => ModelConfig> = {
  'vit-b16-random': vitB16Random,
};

export function loadHookSpec(path: string): ModelConfig {
  const spec = JSON.parse(fs.readFileSync(path, 'utf-8'));
  if (!spec.model_id || !Array.isArray(spec.layers) || spec.layers.length === 0) {
    throw new Error(`${path}: hook spec needs model_id and a non-empty layers list`);
  }
  return {
    modelId: spec.model_id,
    inputSize: spec.input_size ?? 224,
    patchSize: spec.patch_size ?? 16,
    layers: spec.layers.map((l: { name: string; neurons: number }) => {
      if (!l.name || !(l.neurons >= 1)) {
        throw new Error(`${path}: malformed layer entry ${JSON.stringify(l)}`);
      }
      return { name: l.name, neurons: l.neurons };
    }),
    weightSeed: spec.seed ?? 0,
  };
}

export function resolveModel(ref: string): ModelConfig {
  const builtin = BUILTIN_MODELS[ref];
  if (builtin) return builtin();
  if (fs.existsSync(ref)) return loadHookSpec(ref);
  const known = Object.keys(BUILTIN_MODELS).join(', ');
  throw new Error(`unknown model ${JSON.stringify(ref)}; built-ins: ${known}`);
}

interface BlockWeights {
  permutation: Int32Array; // channel shuffle
  scale: Float32Array; // per-channel gain
  bias: Float32Array; // per-channel offset
  mix: Float32Array; // per-channel weight of the global token mean
  channelMap: Int32Array; // layer neurons -> state channels
  outScale: Float32Array; // per-neuron gain on the hooked output
}

export class RandomFeatureExtractor {
  readonly config: ModelConfig;
  /** Tokens per image: one per patch plus one global token. */
  readonly tokens: number;
  private readonly blocks: BlockWeights[];
  private readonly channels: number;

  constructor(config: ModelConfig) {
    if (config.inputSize % config.patchSize !== 0) {
      throw new Error(
        `input size ${config.inputSize} is not a multiple of patch size ${config.patchSize}`,
      );
    }
    this.config = config;
    const grid = config.inputSize / config.patchSize;
    this.tokens = grid * grid + 1;
    this.channels = config.patchSize * config.patchSize * 3;
    const rng = new Rng(config.weightSeed);
    this.blocks = config.layers.map((layer) => {
      const block: BlockWeights = {
        permutation: rng.permutation(this.channels),
        scale: new Float32Array(this.channels),
        bias: new Float32Array(this.channels),
        mix: new Float32Array(this.channels),
        channelMap: new Int32Array(layer.neurons),
        outScale: new Float32Array(layer.neurons),
      };
      for (let c = 0; c < this.channels; c++) {
        block.scale[c] = rng.uniform(0.5, 1.5);
        block.bias[c] = rng.uniform(-0.3, 0.3);
        block.mix[c] = rng.uniform(0.1, 0.5);
      }
      for (let n = 0; n < layer.neurons; n++) {
        block.channelMap[n] = rng.int(this.channels);
        block.outScale[n] = rng.uniform(0.5, 2.0);
      }
      return block;
    });
  }

  /**
   * Forward pass over a preprocessed (inputSize x inputSize) image.
   * Returns, per hooked layer, a neuron-major (neurons * tokens) array.
   */
  forward(image: RawImage): { spatial: number; values: Float32Array }[] {
    if (image.width !== this.config.inputSize || image.height !== this.config.inputSize) {
      throw new Error(
        `expected a ${this.config.inputSize}px square image, got ` +
          `${image.width}x${image.height}`,
      );
    }
    const state = this.patchify(image);
    const outputs: { spatial: number; values: Float32Array }[] = [];
    for (const block of this.blocks) {
      this.applyBlock(state, block);
      outputs.push(this.hook(state, block));
    }
    return outputs;
  }

  /** Patch tokens (row-major) plus a leading global-mean token. */
  private patchify(image: RawImage): Float32Array {
    const { patchSize, inputSize } = this.config;
    const grid = inputSize / patchSize;
    const state = new Float32Array(this.tokens * this.channels);
    for (let gy = 0; gy < grid; gy++) {
      for (let gx = 0; gx < grid; gx++) {
        const token = 1 + gy * grid + gx;
        const base = token * this.channels;
        for (let py = 0; py < patchSize; py++) {
          const row = ((gy * patchSize + py) * inputSize + gx * patchSize) * 3;
          for (let px = 0; px < patchSize * 3; px++) {
            state[base + py * patchSize * 3 + px] = image.data[row + px];
          }
        }
      }
    }
    // global token: mean over patch tokens, channel-wise
    for (let c = 0; c < this.channels; c++) {
      let sum = 0;
      for (let t = 1; t < this.tokens; t++) sum += state[t * this.channels + c];
      state[c] = sum / (this.tokens - 1);
    }
    return state;
  }

  private applyBlock(state: Float32Array, block: BlockWeights): void {
    const channels = this.channels;
    const mean = new Float32Array(channels);
    for (let t = 0; t < this.tokens; t++) {
      const base = t * channels;
      for (let c = 0; c < channels; c++) mean[c] += state[base + c];
    }
    for (let c = 0; c < channels; c++) mean[c] /= this.tokens;
    const prev = state.slice();
    for (let t = 0; t < this.tokens; t++) {
      const base = t * channels;
      for (let c = 0; c < channels; c++) {
        const source = prev[base + block.permutation[c]];
        state[base + c] = Math.tanh(
          block.scale[c] * source + block.bias[c] + block.mix[c] * mean[block.permutation[c]],
        );
      }
    }
  }

  private hook(
    state: Float32Array,
    block: BlockWeights,
  ): { spatial: number; values: Float32Array } {
    const neurons = block.channelMap.length;
    const values = new Float32Array(neurons * this.tokens);
    for (let n = 0; n < neurons; n++) {
      const channel = block.channelMap[n];
      const gain = block.outScale[n];
      for (let t = 0; t < this.tokens; t++) {
        values[n * this.tokens + t] = gain * state[t * this.channels + channel];
      }
    }
    return { spatial: this.tokens, values };
  }
}
