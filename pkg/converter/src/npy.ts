/**
 * Minimal reader for .npy arrays and .npz archives.
 *
 * Good for exactly what the converter needs: little-endian float32
 * C-order arrays, stored or deflated inside a zip.  Anything else is
 * rejected with a message naming the offending detail.
 */

import { inflateRawSync } from 'node:zlib';

import type { Tensor } from './container.js';

const NPY_MAGIC = Buffer.from('\x93NUMPY', 'latin1');

/** Parse one .npy buffer into a float32 tensor. */
export function parseNpy(data: Buffer, label = 'array'): Tensor {
  if (data.length < 10 || !data.subarray(0, 6).equals(NPY_MAGIC)) {
    throw new Error(`${label}: not an npy file`);
  }
  const major = data[6];
  const headerLen = major >= 2 ? data.readUInt32LE(8) : data.readUInt16LE(8);
  const headerEnd = (major >= 2 ? 12 : 10) + headerLen;
  if (headerEnd > data.length) {
    throw new Error(`${label}: npy header runs past the file end`);
  }
  const header = data.subarray(major >= 2 ? 12 : 10, headerEnd).toString('latin1');

  const descr = header.match(/'descr':\s*'([^']+)'/)?.[1];
  if (descr !== '<f4') {
    throw new Error(`${label}: dtype must be little-endian float32 ('<f4'), got ${descr ?? '?'}`);
  }
  if (!/'fortran_order':\s*False/.test(header)) {
    throw new Error(`${label}: fortran-order arrays are not supported`);
  }
  const shapeText = header.match(/'shape':\s*\(([^)]*)\)/)?.[1];
  if (shapeText === undefined) {
    throw new Error(`${label}: npy header has no shape`);
  }
  const shape = shapeText
    .split(',')
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => {
      const d = Number(s);
      if (!Number.isInteger(d) || d < 0) {
        throw new Error(`${label}: bad dimension ${JSON.stringify(s)}`);
      }
      return d;
    });

  let size = 1;
  for (const d of shape) size *= d;
  if (data.length - headerEnd !== 4 * size) {
    throw new Error(
      `${label}: payload is ${data.length - headerEnd} bytes, shape (${shapeText}) wants ${4 * size}`,
    );
  }
  const bytes = Buffer.alloc(4 * size);
  data.copy(bytes, 0, headerEnd);
  return { shape, data: new Float32Array(bytes.buffer, 0, size) };
}

const EOCD_SIG = 0x06054b50;
const CENTRAL_SIG = 0x02014b50;
const LOCAL_SIG = 0x04034b50;

/** Parse a .npz archive (a zip of .npy members) into {key: tensor}. */
export function parseNpz(data: Buffer): Map<string, Tensor> {
  // end-of-central-directory record sits in the last 22..(22+65535) bytes
  let eocd = -1;
  const scanFrom = Math.max(0, data.length - 22 - 65535);
  for (let i = data.length - 22; i >= scanFrom; i--) {
    if (data.readUInt32LE(i) === EOCD_SIG) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) {
    throw new Error('not a zip archive (no end-of-central-directory record)');
  }
  const entryCount = data.readUInt16LE(eocd + 10);
  let pos = data.readUInt32LE(eocd + 16);

  const out = new Map<string, Tensor>();
  for (let i = 0; i < entryCount; i++) {
    if (data.readUInt32LE(pos) !== CENTRAL_SIG) {
      throw new Error(`bad central directory entry ${i}`);
    }
    const method = data.readUInt16LE(pos + 10);
    const compressedSize = data.readUInt32LE(pos + 20);
    const nameLen = data.readUInt16LE(pos + 28);
    const extraLen = data.readUInt16LE(pos + 30);
    const commentLen = data.readUInt16LE(pos + 32);
    const localOffset = data.readUInt32LE(pos + 42);
    const name = data.subarray(pos + 46, pos + 46 + nameLen).toString('utf-8');
    pos += 46 + nameLen + extraLen + commentLen;

    if (data.readUInt32LE(localOffset) !== LOCAL_SIG) {
      throw new Error(`bad local header for ${JSON.stringify(name)}`);
    }
    // the local header keeps its own name/extra lengths
    const localNameLen = data.readUInt16LE(localOffset + 26);
    const localExtraLen = data.readUInt16LE(localOffset + 28);
    const dataStart = localOffset + 30 + localNameLen + localExtraLen;
    const raw = data.subarray(dataStart, dataStart + compressedSize);

    let member: Buffer;
    if (method === 0) {
      member = Buffer.from(raw);
    } else if (method === 8) {
      member = inflateRawSync(raw);
    } else {
      throw new Error(`${JSON.stringify(name)}: unsupported compression method ${method}`);
    }
    const key = name.endsWith('.npy') ? name.slice(0, -4) : name;
    out.set(key, parseNpy(member, key));
  }
  return out;
}
