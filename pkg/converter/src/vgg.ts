/**
 * VGG-19 convolutional prefix exporter.
 *
 * Takes the publicly distributed conv weights (an .npz whose member names
 * identify the layers), keeps the prefix through the third block's last
 * convolution, and emits container entries named f.conv{block}_{idx}.*
 * in (out, in, k, k) order plus the preprocessing mean vector.  Values
 * are carried through bit-for-bit; only the axis order changes.
 */

import type { Entry, Tensor } from './container.js';

/** Conv prefix through block 3, in architecture order. */
export const VGG_MANIFEST: ReadonlyArray<{ name: string; out: number; in: number }> = [
  { name: 'conv1_1', out: 64, in: 3 },
  { name: 'conv1_2', out: 64, in: 64 },
  { name: 'conv2_1', out: 128, in: 64 },
  { name: 'conv2_2', out: 128, in: 128 },
  { name: 'conv3_1', out: 256, in: 128 },
  { name: 'conv3_2', out: 256, in: 256 },
  { name: 'conv3_3', out: 256, in: 256 },
  { name: 'conv3_4', out: 256, in: 256 },
];

const KERNEL = 3;

/** ImageNet channel means (RGB, 0-255 scale) rescaled to [0, 1] inputs. */
export const DEFAULT_MEAN: ReadonlyArray<number> = [
  123.68 / 255,
  116.779 / 255,
  103.939 / 255,
];

export type WeightLayout = 'hwio' | 'nchw';

const WEIGHT_KEYS = ['{n}/weight', '{n}_W', '{n}.weight'];
const BIAS_KEYS = ['{n}/bias', '{n}_b', '{n}.bias'];

function lookup(source: Map<string, Tensor>, layer: string, patterns: string[]): Tensor | undefined {
  for (const pattern of patterns) {
    const t = source.get(pattern.replace('{n}', layer));
    if (t !== undefined) return t;
  }
  return undefined;
}

function shapeEq(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((d, i) => d === b[i]);
}

/** (h, w, i, o) -> (o, i, h, w), value bits untouched. */
function hwioToOihw(t: Tensor): Tensor {
  const [h, w, ci, co] = t.shape;
  const out = new Float32Array(t.data.length);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      for (let c = 0; c < ci; c++) {
        for (let o = 0; o < co; o++) {
          out[((o * ci + c) * h + y) * w + x] = t.data[((y * w + x) * ci + c) * co + o];
        }
      }
    }
  }
  return { shape: [co, ci, h, w], data: out };
}

export function exportVggEntries(
  source: Map<string, Tensor>,
  layout: WeightLayout = 'hwio',
  mean: ReadonlyArray<number> = DEFAULT_MEAN,
): Entry[] {
  if (mean.length !== 3) {
    throw new Error(`preprocessing mean must have 3 channels, got ${mean.length}`);
  }
  const missing: string[] = [];
  const entries: Entry[] = [];
  for (const layer of VGG_MANIFEST) {
    const weight = lookup(source, layer.name, WEIGHT_KEYS);
    const bias = lookup(source, layer.name, BIAS_KEYS);
    if (weight === undefined || bias === undefined) {
      if (weight === undefined) missing.push(`${layer.name} weight`);
      if (bias === undefined) missing.push(`${layer.name} bias`);
      continue;
    }
    const wantSource =
      layout === 'hwio'
        ? [KERNEL, KERNEL, layer.in, layer.out]
        : [layer.out, layer.in, KERNEL, KERNEL];
    if (!shapeEq(weight.shape, wantSource)) {
      throw new Error(
        `${layer.name}: weight shape [${weight.shape}] does not match the ` +
        `architecture table [${wantSource}] (${layout})`,
      );
    }
    if (!shapeEq(bias.shape, [layer.out])) {
      throw new Error(`${layer.name}: bias shape [${bias.shape}], expected [${layer.out}]`);
    }
    const oihw = layout === 'hwio' ? hwioToOihw(weight) : weight;
    entries.push([`f.${layer.name}.weight`, oihw]);
    entries.push([`f.${layer.name}.bias`, bias]);
  }
  if (missing.length > 0) {
    throw new Error(`source is missing required layers: ${missing.join(', ')}`);
  }
  entries.push([
    'meta.preprocess.mean',
    { shape: [3], data: Float32Array.from(mean, Math.fround) },
  ]);
  return entries;
}
