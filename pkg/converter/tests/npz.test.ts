import { execFileSync } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { parseNpy, parseNpz } from '../src/npy.js';

// fixtures come from the reference implementation of the format
let dir: string;

beforeAll(() => {
  dir = mkdtempSync(join(tmpdir(), 'fanconv-npz-'));
  const py = `
import numpy as np, os
d = ${JSON.stringify('__DIR__')}
a = (np.arange(20, dtype=np.float32) / 3.0).reshape(4, 5)
b = np.float32([-1.5, 0.0, 2.25, 1e-8, 3e7, -7.125, 0.1])
np.save(os.path.join(d, "single.npy"), a)
np.savez(os.path.join(d, "stored.npz"), first=a, second=b)
np.savez_compressed(os.path.join(d, "deflated.npz"), first=a, second=b)
np.savez(os.path.join(d, "wide.npz"), wide=np.arange(6, dtype=np.float64))
with open(os.path.join(d, "a.bin"), "wb") as fh:
    fh.write(a.tobytes())
with open(os.path.join(d, "b.bin"), "wb") as fh:
    fh.write(b.tobytes())
`.replace('__DIR__', dir);
  execFileSync('python3', ['-c', py]);
});

afterAll(() => {
  rmSync(dir, { recursive: true, force: true });
});

describe('npy', () => {
  it('parses a plain .npy byte-exactly', () => {
    const t = parseNpy(readFileSync(join(dir, 'single.npy')));
    expect(t.shape).toEqual([4, 5]);
    const want = readFileSync(join(dir, 'a.bin'));
    expect(Buffer.from(t.data.buffer, t.data.byteOffset, t.data.byteLength).equals(want)).toBe(true);
  });

  it('rejects non-npy bytes', () => {
    expect(() => parseNpy(Buffer.from('PK\x03\x04 not numpy'))).toThrow(/not an npy/);
  });
});

describe('npz', () => {
  it('reads stored archives byte-exactly', () => {
    const got = parseNpz(readFileSync(join(dir, 'stored.npz')));
    expect([...got.keys()].sort()).toEqual(['first', 'second']);
    const first = got.get('first')!;
    expect(first.shape).toEqual([4, 5]);
    expect(
      Buffer.from(first.data.buffer, first.data.byteOffset, first.data.byteLength)
        .equals(readFileSync(join(dir, 'a.bin'))),
    ).toBe(true);
  });

  it('reads deflated archives byte-exactly', () => {
    const got = parseNpz(readFileSync(join(dir, 'deflated.npz')));
    const second = got.get('second')!;
    expect(second.shape).toEqual([7]);
    expect(
      Buffer.from(second.data.buffer, second.data.byteOffset, second.data.byteLength)
        .equals(readFileSync(join(dir, 'b.bin'))),
    ).toBe(true);
  });

  it('names the dtype when rejecting non-float32 members', () => {
    expect(() => parseNpz(readFileSync(join(dir, 'wide.npz')))).toThrow(/<f8/);
  });

  it('rejects a non-zip buffer', () => {
    expect(() => parseNpz(Buffer.from('definitely not a zip file'))).toThrow(/not a zip/);
  });
});
