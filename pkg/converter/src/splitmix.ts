/**
 * SplitMix64, the portable weight-initialization stream.
 *
 * Per 64-bit draw:
 *     state = (state + 0x9E3779B97F4A7C15) mod 2^64
 *     z = state;  z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9 (mod 2^64)
 *     z ^= z >> 27;  z *= 0x94D049BB133111EB (mod 2^64);  z ^= z >> 31
 * uniform() maps a draw to float64 in [0, 1) as (z >> 11) * 2^-53.
 *
 * Same seed, same bits, in any implementation.
 */

const MASK = (1n << 64n) - 1n;
const GAMMA = 0x9e3779b97f4a7c15n;
const MUL1 = 0xbf58476d1ce4e5b9n;
const MUL2 = 0x94d049bb133111ebn;

export class SplitMix64 {
  private state: bigint;

  constructor(seed: bigint | number) {
    this.state = BigInt(seed) & MASK;
  }

  nextU64(): bigint {
    this.state = (this.state + GAMMA) & MASK;
    let z = this.state;
    z ^= z >> 30n;
    z = (z * MUL1) & MASK;
    z ^= z >> 27n;
    z = (z * MUL2) & MASK;
    z ^= z >> 31n;
    return z;
  }

  /** float64 in [0, 1), 53 significant bits. */
  uniform(): number {
    // the top 53 bits fit a float64 exactly
    return Number(this.nextU64() >> 11n) * 2 ** -53;
  }
}
