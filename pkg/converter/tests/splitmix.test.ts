import { describe, expect, it } from 'vitest';

import { SplitMix64 } from '../src/splitmix.js';

describe('SplitMix64', () => {
  it('matches the published seed-0 vectors', () => {
    const s = new SplitMix64(0);
    expect(s.nextU64()).toBe(0xe220a8397b1dcdafn);
    expect(s.nextU64()).toBe(0x6e789e6aa1b965f4n);
    expect(s.nextU64()).toBe(0x06c45d188009454fn);
  });

  it('maps draws to [0, 1) with the top 53 bits', () => {
    const s = new SplitMix64(0);
    const u = s.uniform();
    expect(u).toBe(Number(0xe220a8397b1dcdafn >> 11n) * 2 ** -53);
    expect(u).toBeGreaterThanOrEqual(0);
    expect(u).toBeLessThan(1);
  });

  it('is deterministic per seed and distinct across seeds', () => {
    const a = new SplitMix64(42);
    const b = new SplitMix64(42);
    const c = new SplitMix64(43);
    const fromA = Array.from({ length: 8 }, () => a.nextU64());
    const fromB = Array.from({ length: 8 }, () => b.nextU64());
    const fromC = Array.from({ length: 8 }, () => c.nextU64());
    expect(fromA).toEqual(fromB);
    expect(fromA).not.toEqual(fromC);
  });

  it('wraps 64-bit state instead of growing', () => {
    const s = new SplitMix64((1n << 64n) - 1n);
    const v = s.nextU64();
    expect(v >= 0n && v < 1n << 64n).toBe(true);
  });
});
