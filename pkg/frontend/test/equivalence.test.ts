import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { meegfemBinary } from "../src/cli";
import { readTransferFile } from "../src/container";
import { MEEGDriver3d } from "../src/driver";
import { formatPoints, parseMatrixText } from "../src/text";
import {
  bitwiseEqual,
  DIPOLE_FILE,
  ELECTRODES,
  GRID,
  listingConfig,
  TENSORS,
  tempDir,
} from "./helpers";

// Frontend equivalence: the bindings and the bare CLI must produce the
// same lead field on the same fixture config. Single-threaded solves
// are deterministic, so "the same" means bitwise, not approximately.

let driver: MEEGDriver3d;
let cliDir: string;
let cliConfig: string;

function cli(args: string[]): string {
  return execFileSync(meegfemBinary(), args, { encoding: "utf8" });
}

beforeAll(() => {
  driver = new MEEGDriver3d(listingConfig());
  cliDir = tempDir("cli");
  cliConfig = path.join(cliDir, "config.ini");
  fs.writeFileSync(
    cliConfig,
    "type = fitted\n" +
      "solver_type = cg\n" +
      "element_type = tetrahedron\n" +
      `volume_conductor.grid.filename = ${GRID}\n` +
      `volume_conductor.tensors.filename = ${TENSORS}\n` +
      "solver.tolerance = 1e-10\n" +
      "solver.workers = 1\n",
  );
  fs.writeFileSync(
    path.join(cliDir, "electrodes.txt"),
    formatPoints(ELECTRODES),
  );
}, 120_000);

afterAll(() => {
  driver.dispose();
  fs.rmSync(cliDir, { recursive: true, force: true });
});

describe("frontend equivalence", () => {
  it("produces the pure-CLI lead field bitwise", async () => {
    // pure CLI path: transfer + apply, nothing from the bindings
    const cliTransfer = path.join(cliDir, "eeg.bin");
    const cliLead = path.join(cliDir, "lead.bin");
    cli([
      "transfer",
      "--config",
      cliConfig,
      "--modality",
      "eeg",
      "--electrodes",
      path.join(cliDir, "electrodes.txt"),
      "--output",
      cliTransfer,
    ]);
    cli([
      "apply-transfer",
      "--config",
      cliConfig,
      "--transfer",
      cliTransfer,
      "--dipoles",
      DIPOLE_FILE,
      "--output",
      cliLead,
      "--binary",
    ]);
    const expected = readTransferFile(cliLead).matrix;

    // bindings path on the same config mapping
    const transfer = await driver.computeTransfer("eeg", ELECTRODES);
    const dipoles = parseDipoleFile();
    const lead = await driver.applyTransfer(transfer, dipoles);

    expect(lead.rows).toBe(expected.rows);
    expect(lead.cols).toBe(expected.cols);
    expect(bitwiseEqual(lead.data, expected.data)).toBe(true);

    // and the transfers themselves agree bitwise
    const cliT = readTransferFile(cliTransfer);
    expect(bitwiseEqual(transfer.matrix.data, cliT.matrix.data)).toBe(true);
  }, 120_000);

  it("round-trips a bindings-computed transfer through the CLI", async () => {
    // compute in the bindings, save, load in the CLI, apply there
    const saved = path.join(cliDir, "from_bindings.bin");
    const transfer = await driver.computeTransfer("eeg", ELECTRODES, saved);
    const out = path.join(cliDir, "lead_from_bindings.txt");
    cli([
      "apply-transfer",
      "--config",
      cliConfig,
      "--transfer",
      saved,
      "--dipoles",
      DIPOLE_FILE,
      "--output",
      out,
    ]);
    const viaCli = parseMatrixText(fs.readFileSync(out, "utf8"));
    const viaBindings = await driver.applyTransfer(
      transfer,
      parseDipoleFile(),
    );

    expect(viaCli.rows).toBe(viaBindings.rows);
    expect(viaCli.cols).toBe(viaBindings.cols);
    let worst = 0;
    for (let i = 0; i < viaCli.data.length; i++) {
      const denom = Math.max(1e-300, Math.abs(viaBindings.data[i]));
      worst = Math.max(
        worst,
        Math.abs(viaCli.data[i] - viaBindings.data[i]) / denom,
      );
    }
    expect(worst).toBeLessThanOrEqual(1e-12);
  }, 120_000);
});

function parseDipoleFile(): {
  position: [number, number, number];
  moment: [number, number, number];
}[] {
  return fs
    .readFileSync(DIPOLE_FILE, "utf8")
    .split("\n")
    .map((l) => l.trim())
    .filter(Boolean)
    .map((l) => {
      const v = l.split(/\s+/).map(Number);
      return {
        position: [v[0], v[1], v[2]] as [number, number, number],
        moment: [v[3], v[4], v[5]] as [number, number, number],
      };
    });
}
