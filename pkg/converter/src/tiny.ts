/**
 * Deterministic desk-scale extractor weights.
 *
 * Mirrors the consumer's in-process generator bit for bit: weights drawn
 * layer by layer, in layer order, row-major (c_out, c_in, k, k), as
 * uniform[-b, b] float32 with b = sqrt(6 / (c_in * k * k)) from one
 * SplitMix64 stream; biases are zero.
 */

import type { Entry } from './container.js';
import { SplitMix64 } from './splitmix.js';

/** Conv layers of the tiny three-block extractor, pools implied between blocks. */
export const TINY_LAYERS: ReadonlyArray<{ name: string; out: number }> = [
  { name: 'conv1_1', out: 4 },
  { name: 'conv1_2', out: 4 },
  { name: 'conv2_1', out: 6 },
  { name: 'conv2_2', out: 6 },
  { name: 'conv3_1', out: 8 },
  { name: 'conv3_2', out: 8 },
];

const KERNEL = 3;

export function makeTinyEntries(seed: number): Entry[] {
  const stream = new SplitMix64(seed);
  const entries: Entry[] = [];
  let inCh = 3;
  for (const layer of TINY_LAYERS) {
    const bound = Math.sqrt(6 / (inCh * KERNEL * KERNEL));
    const n = layer.out * inCh * KERNEL * KERNEL;
    const weight = new Float32Array(n);
    for (let j = 0; j < n; j++) {
      weight[j] = Math.fround((2 * stream.uniform() - 1) * bound);
    }
    entries.push([`f.${layer.name}.weight`, { shape: [layer.out, inCh, KERNEL, KERNEL], data: weight }]);
    entries.push([`f.${layer.name}.bias`, { shape: [layer.out], data: new Float32Array(layer.out) }]);
    inCh = layer.out;
  }
  return entries;
}
