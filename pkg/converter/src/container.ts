/**
 * Named-tensor container codec (.fanc).
 *
 * Byte layout, all integers little-endian u32, payloads little-endian
 * float32 row-major:
 *
 *     magic   4 bytes  "FANC"
 *     version u32      1
 *     count   u32      number of entries
 *     entry*  name_len u32, name (UTF-8), rank u32, dims u32 x rank, payload
 *
 * Names are unique and the file length is consumed exactly.
 */

const MAGIC = Buffer.from('FANC', 'ascii');
const VERSION = 1;
const MAX_RANK = 32;
const MAX_NAME = 4096;

export interface Tensor {
  shape: number[];
  /** row-major values; byte-faithful to whatever produced them */
  data: Float32Array;
}

export type Entry = [name: string, tensor: Tensor];

export class ContainerError extends Error {
  readonly offset: number;

  constructor(message: string, offset: number) {
    super(`${message} (at byte offset ${offset})`);
    this.offset = offset;
  }
}

function elementCount(shape: number[]): number {
  let n = 1;
  for (const d of shape) n *= d;
  return n;
}

export function writeContainer(entries: Entry[]): Buffer {
  const seen = new Set<string>();
  const parts: Buffer[] = [MAGIC];
  const head = Buffer.alloc(8);
  head.writeUInt32LE(VERSION, 0);
  head.writeUInt32LE(entries.length, 4);
  parts.push(head);
  for (const [name, tensor] of entries) {
    if (seen.has(name)) {
      throw new Error(`duplicate entry name ${JSON.stringify(name)}`);
    }
    seen.add(name);
    const nameBytes = Buffer.from(name, 'utf-8');
    if (nameBytes.length > MAX_NAME) {
      throw new Error(`entry name too long (${nameBytes.length} bytes)`);
    }
    if (tensor.data.length !== elementCount(tensor.shape)) {
      throw new Error(
        `entry ${JSON.stringify(name)}: shape [${tensor.shape}] wants ` +
        `${elementCount(tensor.shape)} values, data has ${tensor.data.length}`,
      );
    }
    const nameLen = Buffer.alloc(4);
    nameLen.writeUInt32LE(nameBytes.length, 0);
    const meta = Buffer.alloc(4 + 4 * tensor.shape.length);
    meta.writeUInt32LE(tensor.shape.length, 0);
    tensor.shape.forEach((d, i) => meta.writeUInt32LE(d, 4 + 4 * i));
    // payload bytes come straight from the typed array; this platform is
    // little-endian, which the one-time startup check below guarantees
    const payload = Buffer.from(tensor.data.buffer, tensor.data.byteOffset, tensor.data.byteLength);
    parts.push(nameLen, nameBytes, meta, payload);
  }
  return Buffer.concat(parts);
}

export function parseContainer(data: Buffer): Map<string, Tensor> {
  let pos = 0;
  const need = (n: number, what: string): number => {
    if (pos + n > data.length) {
      throw new ContainerError(`truncated file: expected ${n} bytes for ${what}`, pos);
    }
    const start = pos;
    pos += n;
    return start;
  };

  let at = need(4, 'magic');
  if (!data.subarray(at, at + 4).equals(MAGIC)) {
    throw new ContainerError(
      `bad magic ${JSON.stringify(data.subarray(at, at + 4).toString('latin1'))}, expected "FANC"`,
      at,
    );
  }
  at = need(4, 'version');
  const version = data.readUInt32LE(at);
  if (version !== VERSION) {
    throw new ContainerError(`unsupported version ${version}, expected ${VERSION}`, at);
  }
  at = need(4, 'entry count');
  const count = data.readUInt32LE(at);

  const entries = new Map<string, Tensor>();
  for (let i = 0; i < count; i++) {
    at = need(4, `name length of entry ${i}`);
    const nameLen = data.readUInt32LE(at);
    if (nameLen > MAX_NAME) {
      throw new ContainerError(`entry ${i} name length ${nameLen} exceeds ${MAX_NAME}`, at);
    }
    at = need(nameLen, `name of entry ${i}`);
    const name = data.subarray(at, at + nameLen).toString('utf-8');
    if (entries.has(name)) {
      throw new ContainerError(`duplicate entry name ${JSON.stringify(name)}`, at);
    }
    at = need(4, `rank of ${JSON.stringify(name)}`);
    const rank = data.readUInt32LE(at);
    if (rank > MAX_RANK) {
      throw new ContainerError(`entry ${JSON.stringify(name)} rank ${rank} exceeds ${MAX_RANK}`, at);
    }
    at = need(4 * rank, `dims of ${JSON.stringify(name)}`);
    const shape: number[] = [];
    for (let d = 0; d < rank; d++) shape.push(data.readUInt32LE(at + 4 * d));
    const size = elementCount(shape);
    at = need(4 * size, `payload of ${JSON.stringify(name)}`);
    // copy out so the tensor does not alias the file buffer
    const bytes = Buffer.alloc(4 * size);
    data.copy(bytes, 0, at, at + 4 * size);
    entries.set(name, {
      shape,
      data: new Float32Array(bytes.buffer, 0, size),
    });
  }
  if (pos !== data.length) {
    throw new ContainerError(
      `file length not exactly consumed: ${data.length - pos} trailing bytes`,
      pos,
    );
  }
  return entries;
}

// the byte-faithful Float32Array <-> Buffer reinterpretation above assumes a
// little-endian host; bail out loudly on anything else
{
  const probe = new Uint8Array(new Float32Array([1]).buffer);
  if (probe[3] !== 0x3f) {
    throw new Error('big-endian hosts are not supported');
  }
}
