import { execFileSync } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { dirname, join, resolve } from 'node:path';
import { fileURLToPath } from 'node:url';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { writeContainer } from '../src/container.js';
import { makeTinyEntries } from '../src/tiny.js';

const REPO_ROOT = resolve(dirname(fileURLToPath(import.meta.url)), '..', '..');

let dir: string;

beforeAll(() => {
  dir = mkdtempSync(join(tmpdir(), 'fanconv-tiny-'));
});

afterAll(() => {
  rmSync(dir, { recursive: true, force: true });
});

describe('makeTinyEntries', () => {
  it('lays out six conv layers, weight then bias each', () => {
    const entries = makeTinyEntries(0);
    expect(entries.map(([n]) => n)).toEqual([
      'f.conv1_1.weight', 'f.conv1_1.bias',
      'f.conv1_2.weight', 'f.conv1_2.bias',
      'f.conv2_1.weight', 'f.conv2_1.bias',
      'f.conv2_2.weight', 'f.conv2_2.bias',
      'f.conv3_1.weight', 'f.conv3_1.bias',
      'f.conv3_2.weight', 'f.conv3_2.bias',
    ]);
    expect(entries[0][1].shape).toEqual([4, 3, 3, 3]);
    expect(entries[4][1].shape).toEqual([6, 4, 3, 3]);
    expect(entries[10][1].shape).toEqual([8, 8, 3, 3]);
    for (const [name, tensor] of entries) {
      if (name.endsWith('.bias')) {
        expect([...tensor.data].every((v) => v === 0)).toBe(true);
      }
    }
  });

  it('same seed gives identical bytes, different seed differs', () => {
    const a = writeContainer(makeTinyEntries(5));
    const b = writeContainer(makeTinyEntries(5));
    const c = writeContainer(makeTinyEntries(6));
    expect(a.equals(b)).toBe(true);
    expect(a.equals(c)).toBe(false);
  });

  it('weights stay inside the per-layer init bound', () => {
    for (const [name, tensor] of makeTinyEntries(1)) {
      if (!name.endsWith('.weight')) continue;
      const [, cin] = tensor.shape;
      const bound = Math.sqrt(6 / (cin * 9));
      for (const v of tensor.data) {
        expect(Math.abs(v)).toBeLessThanOrEqual(bound);
      }
    }
  });
});

describe('cross-implementation', () => {
  it('reproduces the consumer implementation bit for bit', () => {
    // the same weights the trainer synthesizes in process, written by the
    // consumer's own script, must equal this implementation byte for byte
    const theirs = join(dir, 'theirs.fanc');
    execFileSync('python3', ['scripts/make_tiny_container.py', theirs, '--seed', '0'], {
      cwd: REPO_ROOT,
    });
    const ours = writeContainer(makeTinyEntries(0));
    expect(ours.equals(readFileSync(theirs))).toBe(true);
  });

  it('holds for a non-default seed too', () => {
    const theirs = join(dir, 'theirs7.fanc');
    execFileSync('python3', ['scripts/make_tiny_container.py', theirs, '--seed', '7'], {
      cwd: REPO_ROOT,
    });
    expect(writeContainer(makeTinyEntries(7)).equals(readFileSync(theirs))).toBe(true);
  });
});
