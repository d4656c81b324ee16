import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { runCli, runCliSync } from "./cli";
import { ConfigMapping, flattenConfig, renderIni } from "./config";
import {
  Matrix,
  ParsedTransfer,
  readTransferFile,
  readTransferHeader,
  TransferHeader,
} from "./container";
import { ConfigError } from "./errors";
import {
  formatConductivities,
  formatMsh,
  isInMemoryMesh,
  InMemoryMesh,
} from "./msh";
import {
  Dipole,
  formatDipoles,
  formatMeasurement,
  formatPoints,
  formatSourceSpace,
  parseMatrixText,
  Vec3,
} from "./text";

export interface DriverOptions {
  /** Path or name of the meegfem executable (default: $MEEGFEM_BIN or `meegfem`). */
  binary?: string;
  /** Scratch directory; a fresh temp dir per driver when omitted. */
  workdir?: string;
}

export interface MeshInfo {
  kind: string;
  vertices: number;
  elements: number;
  checksum: string;
}

export interface TransferResult {
  path: string;
  header: TransferHeader;
  matrix: Matrix;
  /** False when the matrix data is a zero-copy view of the file bytes. */
  copied: boolean;
}

export interface ScanOutcome {
  bestIndex: number;
  bestStrength: number;
  bestGof: number;
  /** Indices of candidate positions outside the mesh. */
  skipped: number[];
}

interface SixVec {
  position: Vec3;
  orientation: Vec3;
}

/**
 * Driver bound to one volume conductor, mirroring the config-dictionary
 * construction of the solver library. All numerical work happens in the
 * meegfem CLI; this class translates mappings and arrays to the file
 * formats the CLI speaks and parses the results back. Construction is
 * synchronous and validates that the mesh loads; the solve methods are
 * async so long-running calls never block the event loop.
 */
export class MEEGDriver3d {
  readonly workdir: string;
  readonly configPath: string;
  readonly flat: Record<string, string>;
  private readonly binary?: string;
  private readonly ownsWorkdir: boolean;
  private info: MeshInfo | null = null;
  private seq = 0;

  constructor(config: ConfigMapping | string, options: DriverOptions = {}) {
    this.binary = options.binary;
    this.ownsWorkdir = options.workdir === undefined;
    this.workdir =
      options.workdir ?? fs.mkdtempSync(path.join(os.tmpdir(), "meegfem-"));

    if (typeof config === "string") {
      // an existing INI file is taken as-is
      this.configPath = config;
      this.flat = {};
    } else {
      const tree = this.materializeInMemoryParts(config);
      this.flat = flattenConfig(tree);
      this.configPath = path.join(this.workdir, "config.ini");
      fs.writeFileSync(this.configPath, renderIni(this.flat));
    }

    // eager mesh load so a bad grid fails at construction, like the
    // library driver; also caches element counts and the checksum
    this.info = this.meshInfoSync();
  }

  /** Replace grid/tensor arrays in the config with files in workdir. */
  private materializeInMemoryParts(config: ConfigMapping): ConfigMapping {
    const tree: ConfigMapping = { ...config };
    const vcIn = tree["volume_conductor"];
    if (typeof vcIn !== "object" || vcIn === null) {
      return tree;
    }
    const vc: ConfigMapping = { ...(vcIn as ConfigMapping) };
    tree["volume_conductor"] = vc;

    const grid = vc["grid"];
    if (isInMemoryMesh(grid)) {
      const file = path.join(this.workdir, "grid.msh");
      fs.writeFileSync(file, formatMsh(grid as unknown as InMemoryMesh));
      delete vc["grid"];
      vc["grid.filename"] = file;
    }
    const tensors = vc["tensors"];
    if (
      typeof tensors === "object" &&
      tensors !== null &&
      !("filename" in tensors)
    ) {
      const file = path.join(this.workdir, "tensors.dat");
      fs.writeFileSync(
        file,
        formatConductivities(
          tensors as Record<string, number | readonly number[]>,
        ),
      );
      delete vc["tensors"];
      vc["tensors.filename"] = file;
    }
    return tree;
  }

  private scratch(name: string): string {
    this.seq += 1;
    return path.join(this.workdir, `${this.seq}-${name}`);
  }

  private configArgs(overrides?: Record<string, string>): string[] {
    const args = ["--config", this.configPath];
    for (const [key, value] of Object.entries(overrides ?? {})) {
      args.push("--set", `${key}=${value}`);
    }
    return args;
  }

  get meshChecksum(): string {
    return this.info!.checksum;
  }

  get elementCount(): number {
    return this.info!.elements;
  }

  get vertexCount(): number {
    return this.info!.vertices;
  }

  private gridFile(): string {
    const file =
      this.flat["volume_conductor.grid.filename"] ??
      this.iniLookup("volume_conductor.grid.filename");
    if (!file) {
      throw new ConfigError(
        "missing required config key `volume_conductor.grid.filename`",
      );
    }
    return file;
  }

  /** Minimal INI scan for drivers constructed from a config file path. */
  private iniLookup(dotted: string): string | undefined {
    const text = fs.readFileSync(this.configPath, "utf8");
    let section = "";
    for (const raw of text.split("\n")) {
      const line = raw.split("#", 1)[0].split(";", 1)[0].trim();
      if (!line) continue;
      if (line.startsWith("[") && line.endsWith("]")) {
        section = line.slice(1, -1).trim();
        continue;
      }
      const eq = line.indexOf("=");
      if (eq < 0) continue;
      const key = line.slice(0, eq).trim();
      const full = section ? `${section}.${key}` : key;
      if (full === dotted) {
        return line.slice(eq + 1).trim();
      }
    }
    return undefined;
  }

  private meshInfoSync(): MeshInfo {
    const { stdout } = runCliSync(["mesh-info", this.gridFile()], this.binary);
    const field = (name: string): string => {
      const m = stdout.match(new RegExp(`^${name}:\\s+(.+)$`, "m"));
      if (!m) {
        throw new ConfigError(`mesh-info output is missing \`${name}\``);
      }
      return m[1].trim();
    };
    return {
      kind: field("kind"),
      vertices: Number(field("vertices")),
      elements: Number(field("elements")),
      checksum: field("checksum"),
    };
  }

  async meshInfo(): Promise<MeshInfo> {
    return this.info!;
  }

  /**
   * Direct forward solves: one row of electrode potentials per dipole
   * (zero-mean over electrodes). An empty dipole list short-circuits to
   * a 0 x n_electrodes result without invoking the solver.
   */
  async solveEeg(
    dipoles: readonly Dipole[],
    electrodes: readonly Vec3[],
    overrides?: Record<string, string>,
  ): Promise<Matrix> {
    if (dipoles.length === 0) {
      return { rows: 0, cols: electrodes.length, data: new Float64Array(0) };
    }
    const dFile = this.scratch("dipoles.txt");
    const eFile = this.scratch("electrodes.txt");
    const out = this.scratch("potentials.txt");
    fs.writeFileSync(dFile, formatDipoles(dipoles));
    fs.writeFileSync(eFile, formatPoints(electrodes));
    await runCli(
      [
        "solve-eeg",
        ...this.configArgs(overrides),
        "--dipoles",
        dFile,
        "--electrodes",
        eFile,
        "--output",
        out,
      ],
      this.binary,
    );
    return parseMatrixText(fs.readFileSync(out, "utf8"));
  }

  /**
   * Compute a transfer matrix (one solve per sensor) and hand back the
   * container with its payload mapped zero-copy where alignment allows.
   */
  async computeTransfer(
    modality: "eeg" | "meg",
    sensors: readonly Vec3[] | readonly SixVec[],
    outPath?: string,
    overrides?: Record<string, string>,
  ): Promise<TransferResult> {
    const out = outPath ?? this.scratch(`${modality}_transfer.bin`);
    const args = ["transfer", ...this.configArgs(overrides)];
    args.push("--modality", modality);
    if (modality === "eeg") {
      const eFile = this.scratch("sensors.txt");
      fs.writeFileSync(eFile, formatPoints(sensors as readonly Vec3[]));
      args.push("--electrodes", eFile);
    } else {
      const coils = sensors as readonly SixVec[];
      const cFile = this.scratch("coils.txt");
      fs.writeFileSync(
        cFile,
        formatSourceSpace(
          coils.map((c) => c.position),
          coils.map((c) => c.orientation),
        ),
      );
      args.push("--coils", cFile);
    }
    args.push("--output", out);
    await runCli(args, this.binary);
    const parsed: ParsedTransfer = readTransferFile(out);
    return { path: out, ...parsed };
  }

  /**
   * Lead field from a stored transfer matrix: n_sensors x n_dipoles.
   * Goes through the binary container so the result is bit-identical to
   * what the solver computed. Zero dipoles short-circuit to n x 0.
   */
  async applyTransfer(
    transfer: string | TransferResult,
    dipoles: readonly Dipole[],
    overrides?: Record<string, string>,
  ): Promise<Matrix> {
    const tPath = typeof transfer === "string" ? transfer : transfer.path;
    if (dipoles.length === 0) {
      const header = readTransferHeader(tPath);
      return { rows: header.sensors, cols: 0, data: new Float64Array(0) };
    }
    const dFile = this.scratch("dipoles.txt");
    const out = this.scratch("lead.bin");
    fs.writeFileSync(dFile, formatDipoles(dipoles));
    await runCli(
      [
        "apply-transfer",
        ...this.configArgs(overrides),
        "--transfer",
        tPath,
        "--dipoles",
        dFile,
        "--output",
        out,
        "--binary",
      ],
      this.binary,
    );
    return readTransferFile(out).matrix;
  }

  /**
   * Single-dipole scan of a candidate grid against a measurement
   * vector. Candidates outside the mesh are skipped, not fatal.
   */
  async scan(
    transfer: string | TransferResult,
    positions: readonly Vec3[],
    orientations: readonly Vec3[],
    measurement: ArrayLike<number>,
    overrides?: Record<string, string>,
  ): Promise<ScanOutcome> {
    const tPath = typeof transfer === "string" ? transfer : transfer.path;
    const sFile = this.scratch("space.txt");
    const mFile = this.scratch("measurement.txt");
    fs.writeFileSync(sFile, formatSourceSpace(positions, orientations));
    fs.writeFileSync(mFile, formatMeasurement(measurement));
    const { stdout } = await runCli(
      [
        "scan",
        ...this.configArgs(overrides),
        "--transfer",
        tPath,
        "--source-space",
        sFile,
        "--measurement",
        mFile,
      ],
      this.binary,
    );
    const best = stdout.match(
      /^best: index (\d+) strength (\S+) gof (\S+)$/m,
    );
    if (!best) {
      throw new ConfigError("scan output is missing the `best:` line");
    }
    const skipped: number[] = [];
    const skipLine = stdout.match(/^skipped \d+ positions[^:]*: (.+)$/m);
    if (skipLine) {
      // the index list prints bracketed, e.g. `[5, 7]`
      for (const token of skipLine[1].replace(/[[\]]/g, "").split(/[,\s]+/)) {
        if (token) skipped.push(Number(token));
      }
    }
    return {
      bestIndex: Number(best[1]),
      bestStrength: Number(best[2]),
      bestGof: Number(best[3]),
      skipped,
    };
  }

  /** Remove the scratch directory (only if this driver created it). */
  dispose(): void {
    if (this.ownsWorkdir) {
      fs.rmSync(this.workdir, { recursive: true, force: true });
    }
  }
}

/** Listing-style constructor function; same as `new MEEGDriver3d(...)`. */
export function makeDriver(
  config: ConfigMapping | string,
  options?: DriverOptions,
): MEEGDriver3d {
  return new MEEGDriver3d(config, options);
}
