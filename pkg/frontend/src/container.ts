import * as fs from "node:fs";
import * as os from "node:os";

import { ConfigError } from "./errors";

// Binary transfer container: a 104-byte little-endian header followed by
// the matrix payload as row-major float64.
//
//   bytes  0..8    magic "MEEGXFER"
//   bytes  8..12   u32 format version (1)
//   bytes 12..16   u32 modality (1 = eeg, 2 = meg)
//   bytes 16..24   u64 rows (sensors)
//   bytes 24..32   u64 cols (dofs)
//   bytes 32..40   f64 solver tolerance
//   bytes 40..104  64 ascii hex chars, sha-256 of the source mesh

export const HEADER_SIZE = 104;
const MAGIC = "MEEGXFER";

export interface TransferHeader {
  modality: "eeg" | "meg";
  sensors: number;
  dofs: number;
  tolerance: number;
  meshChecksum: string;
}

/** Row-major float64 matrix. */
export interface Matrix {
  rows: number;
  cols: number;
  data: Float64Array;
}

function u64(view: DataView, offset: number, what: string): number {
  const big = view.getBigUint64(offset, true);
  if (big > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new ConfigError(`transfer header ${what} out of range: ${big}`);
  }
  return Number(big);
}

export function parseHeader(buf: Buffer): TransferHeader {
  if (buf.length < HEADER_SIZE) {
    throw new ConfigError("truncated transfer container");
  }
  if (buf.toString("latin1", 0, 8) !== MAGIC) {
    throw new ConfigError("not a transfer matrix container");
  }
  const view = new DataView(buf.buffer, buf.byteOffset, HEADER_SIZE);
  const version = view.getUint32(8, true);
  if (version !== 1) {
    throw new ConfigError(`unsupported transfer format version ${version}`);
  }
  const code = view.getUint32(12, true);
  if (code !== 1 && code !== 2) {
    throw new ConfigError(`unknown modality code ${code}`);
  }
  return {
    modality: code === 1 ? "eeg" : "meg",
    sensors: u64(view, 16, "rows"),
    dofs: u64(view, 24, "cols"),
    tolerance: view.getFloat64(32, true),
    meshChecksum: buf.toString("ascii", 40, HEADER_SIZE),
  };
}

export interface ParsedTransfer {
  header: TransferHeader;
  matrix: Matrix;
  /** False when the Float64Array is a view over the input buffer. */
  copied: boolean;
}

/**
 * Parse a whole container. The payload becomes a Float64Array without
 * copying when the platform is little-endian and the payload happens to
 * sit on an 8-byte boundary of the underlying ArrayBuffer; otherwise the
 * bytes are copied once into an aligned buffer. Either way the values
 * are identical; `copied` reports which path was taken.
 */
export function parseTransfer(buf: Buffer): ParsedTransfer {
  const header = parseHeader(buf);
  const count = header.sensors * header.dofs;
  const payload = HEADER_SIZE + 8 * count;
  if (buf.length < payload) {
    throw new ConfigError(
      `transfer container truncated: need ${payload} bytes, have ${buf.length}`,
    );
  }
  const start = buf.byteOffset + HEADER_SIZE;
  let data: Float64Array;
  let copied: boolean;
  if (os.endianness() === "LE" && start % 8 === 0) {
    data = new Float64Array(buf.buffer, start, count);
    copied = false;
  } else {
    // realign (or byte-swap) by copying through a fresh buffer
    const raw = Buffer.alloc(8 * count);
    buf.copy(raw, 0, HEADER_SIZE, payload);
    data = new Float64Array(raw.buffer, 0, count);
    if (os.endianness() !== "LE") {
      const view = new DataView(raw.buffer);
      for (let i = 0; i < count; i++) {
        data[i] = view.getFloat64(8 * i, true);
      }
    }
    copied = true;
  }
  return {
    header,
    matrix: { rows: header.sensors, cols: header.dofs, data },
    copied,
  };
}

export function readTransferFile(path: string): ParsedTransfer {
  return parseTransfer(fs.readFileSync(path));
}

/** Read only the 104-byte header of a container on disk. */
export function readTransferHeader(path: string): TransferHeader {
  const fd = fs.openSync(path, "r");
  try {
    const buf = Buffer.alloc(HEADER_SIZE);
    const got = fs.readSync(fd, buf, 0, HEADER_SIZE, 0);
    if (got < HEADER_SIZE) {
      throw new ConfigError("truncated transfer container");
    }
    return parseHeader(buf);
  } finally {
    fs.closeSync(fd);
  }
}
