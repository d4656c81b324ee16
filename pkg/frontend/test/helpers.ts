import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import type { ConfigMapping } from "../src/config";
import type { Dipole, Vec3 } from "../src/text";

export const FIXTURES = path.resolve(__dirname, "fixtures");

export const GRID = path.join(FIXTURES, "box.msh");
export const TENSORS = path.join(FIXTURES, "tensors.dat");
export const DIPOLE_FILE = path.join(FIXTURES, "dipoles.txt");
export const SPACE_FILE = path.join(FIXTURES, "space.txt");

/** The construction-from-a-dictionary shape the solver documents. */
export function listingConfig(): ConfigMapping {
  return {
    type: "fitted",
    solver_type: "cg",
    element_type: "tetrahedron",
    volume_conductor: {
      "grid.filename": GRID,
      "tensors.filename": TENSORS,
    },
    solver: { tolerance: 1e-10, workers: 1 },
  };
}

export const ELECTRODES: Vec3[] = [
  [0, 0, 0],
  [40, 0, 0],
  [0, 40, 0],
  [40, 40, 0],
  [0, 0, 40],
  [40, 0, 40],
  [0, 40, 40],
  [40, 40, 40],
  [20, 0, 20],
  [20, 40, 20],
  [0, 20, 20],
  [40, 20, 20],
];

export const DIPOLES: Dipole[] = [
  { position: [12, 14, 11], moment: [1, 0, 0] },
  { position: [25, 22, 28], moment: [0, 2, -1] },
  { position: [18, 30, 16], moment: [1, 1, 1] },
];

export function tempDir(tag: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), `meegfem-${tag}-`));
}

/** Bit-level equality of two float64 arrays. */
export function bitwiseEqual(a: Float64Array, b: Float64Array): boolean {
  if (a.length !== b.length) {
    return false;
  }
  const ba = Buffer.from(a.buffer, a.byteOffset, a.byteLength);
  const bb = Buffer.from(b.buffer, b.byteOffset, b.byteLength);
  return ba.equals(bb);
}

export function readSourceSpace(): {
  positions: Vec3[];
  orientations: Vec3[];
} {
  const positions: Vec3[] = [];
  const orientations: Vec3[] = [];
  for (const raw of fs.readFileSync(SPACE_FILE, "utf8").split("\n")) {
    const line = raw.trim();
    if (!line) continue;
    const v = line.split(/\s+/).map(Number);
    positions.push([v[0], v[1], v[2]]);
    orientations.push([v[3], v[4], v[5]]);
  }
  return { positions, orientations };
}
