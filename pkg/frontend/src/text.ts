import { ConfigError } from "./errors";
import type { Matrix } from "./container";

// Text interchange with the CLI. Numbers are written with JavaScript's
// shortest round-trip representation, which Python parses back to the
// identical double, so nothing is lost crossing the boundary.

export type Vec3 = readonly [number, number, number];

export interface Dipole {
  position: Vec3;
  moment: Vec3;
}

function line(values: readonly number[]): string {
  return values.map((v) => String(v)).join(" ");
}

export function formatDipoles(dipoles: readonly Dipole[]): string {
  return (
    dipoles.map((d) => line([...d.position, ...d.moment])).join("\n") + "\n"
  );
}

export function formatPoints(points: readonly Vec3[]): string {
  return points.map((p) => line(p)).join("\n") + "\n";
}

/** Candidate grid, optionally with one unit orientation per position. */
export function formatSourceSpace(
  positions: readonly Vec3[],
  orientations?: readonly Vec3[],
): string {
  if (orientations === undefined) {
    return formatPoints(positions);
  }
  if (orientations.length !== positions.length) {
    throw new ConfigError(
      `source space has ${positions.length} positions but ` +
        `${orientations.length} orientations`,
    );
  }
  return (
    positions
      .map((p, i) => line([...p, ...orientations[i]]))
      .join("\n") + "\n"
  );
}

/** Measurements are layout-free: one float per sensor, any whitespace. */
export function formatMeasurement(values: ArrayLike<number>): string {
  return Array.from(values, (v) => String(v)).join("\n") + "\n";
}

export function formatMatrixText(matrix: Matrix): string {
  const out: string[] = [];
  for (let r = 0; r < matrix.rows; r++) {
    const row = matrix.data.subarray(r * matrix.cols, (r + 1) * matrix.cols);
    out.push(line(Array.from(row)));
  }
  return out.join("\n") + "\n";
}

/**
 * Parse whitespace-separated matrix text as the CLI writes it: one row
 * per line, comments after `#`. A single row stays a 1 x n matrix.
 */
export function parseMatrixText(text: string): Matrix {
  const rows: number[][] = [];
  let cols = -1;
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const bare = lines[i].split("#", 1)[0].trim();
    if (!bare) {
      continue;
    }
    const values = bare.split(/\s+/).map(Number);
    if (values.some((v) => Number.isNaN(v))) {
      throw new ConfigError(`matrix text line ${i + 1}: expected numbers`);
    }
    if (cols === -1) {
      cols = values.length;
    } else if (values.length !== cols) {
      throw new ConfigError(
        `matrix text line ${i + 1}: ${values.length} values, expected ${cols}`,
      );
    }
    rows.push(values);
  }
  const data = new Float64Array(rows.length * Math.max(cols, 0));
  rows.forEach((row, r) => data.set(row, r * cols));
  return { rows: rows.length, cols: Math.max(cols, 0), data };
}
