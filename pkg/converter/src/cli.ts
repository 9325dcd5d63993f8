#!/usr/bin/env node
/**
 * fanconv: export extractor weights into the named-tensor container format.
 *
 * Usage:
 *   fanconv export-vgg --source vgg19.npz --out weights.fanc [--layout hwio|nchw] [--mean r,g,b]
 *   fanconv make-tiny --out tiny.fanc [--seed 0]
 */

import { readFileSync, writeFileSync } from 'node:fs';

import { writeContainer } from './container.js';
import { parseNpz } from './npy.js';
import { makeTinyEntries } from './tiny.js';
import { DEFAULT_MEAN, exportVggEntries, type WeightLayout } from './vgg.js';

function fail(message: string): never {
  process.stderr.write(`fanconv: ${message}\n`);
  process.exit(1);
}

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith('--')) fail(`unexpected argument ${JSON.stringify(arg)}`);
    const value = argv[++i];
    if (value === undefined) fail(`${arg} needs a value`);
    flags.set(arg.slice(2), value);
  }
  return flags;
}

function want(flags: Map<string, string>, name: string): string {
  const v = flags.get(name);
  if (v === undefined) fail(`--${name} is required`);
  return v;
}

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  if (command === undefined || command === '--help' || command === '-h') {
    process.stdout.write(
      'usage: fanconv export-vgg --source vgg19.npz --out weights.fanc ' +
      '[--layout hwio|nchw] [--mean r,g,b]\n' +
      '       fanconv make-tiny --out tiny.fanc [--seed 0]\n',
    );
    process.exit(command === undefined ? 1 : 0);
  }
  const flags = parseFlags(rest);

  if (command === 'make-tiny') {
    const out = want(flags, 'out');
    const seed = Number(flags.get('seed') ?? '0');
    if (!Number.isInteger(seed) || seed < 0) fail(`--seed must be a non-negative integer`);
    const entries = makeTinyEntries(seed);
    writeFileSync(out, writeContainer(entries));
    process.stdout.write(`wrote ${out}: ${entries.length} entries (seed ${seed})\n`);
    return;
  }

  if (command === 'export-vgg') {
    const sourcePath = want(flags, 'source');
    const out = want(flags, 'out');
    const layout = (flags.get('layout') ?? 'hwio') as WeightLayout;
    if (layout !== 'hwio' && layout !== 'nchw') {
      fail(`--layout must be hwio or nchw, got ${JSON.stringify(layout)}`);
    }
    let mean: number[] = [...DEFAULT_MEAN];
    const meanFlag = flags.get('mean');
    if (meanFlag !== undefined) {
      mean = meanFlag.split(',').map(Number);
      if (mean.length !== 3 || mean.some((v) => !Number.isFinite(v))) {
        fail(`--mean wants three comma-separated numbers, got ${JSON.stringify(meanFlag)}`);
      }
    }
    let source;
    try {
      source = parseNpz(readFileSync(sourcePath));
    } catch (err) {
      fail(`cannot read ${sourcePath}: ${(err as Error).message}`);
    }
    let entries;
    try {
      entries = exportVggEntries(source, layout, mean);
    } catch (err) {
      fail((err as Error).message);
    }
    writeFileSync(out, writeContainer(entries));
    process.stdout.write(`wrote ${out}: ${entries.length} entries\n`);
    return;
  }

  fail(`unknown command ${JSON.stringify(command)}`);
}

main();
