import * as fs from "node:fs";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { MEEGDriver3d, makeDriver } from "../src/driver";
import { ConfigError, NumericalError } from "../src/errors";
import type { InMemoryMesh } from "../src/msh";
import {
  bitwiseEqual,
  DIPOLES,
  ELECTRODES,
  FIXTURES,
  GRID,
  listingConfig,
  TENSORS,
  tempDir,
} from "./helpers";

const drivers: MEEGDriver3d[] = [];

function track(d: MEEGDriver3d): MEEGDriver3d {
  drivers.push(d);
  return d;
}

afterAll(() => drivers.forEach((d) => d.dispose()));

describe("construction", () => {
  it("builds a working driver from the documented mapping shape", () => {
    const driver = track(new MEEGDriver3d(listingConfig()));
    expect(driver.elementCount).toBeGreaterThan(0);
    expect(driver.vertexCount).toBe(125);
    expect(driver.meshChecksum).toMatch(/^[0-9a-f]{64}$/);
  });

  it("accepts nested and pre-flattened dotted keys identically", async () => {
    const nested = track(new MEEGDriver3d(listingConfig()));
    const dotted = track(
      new MEEGDriver3d({
        type: "fitted",
        solver_type: "cg",
        element_type: "tetrahedron",
        "volume_conductor.grid.filename": GRID,
        "volume_conductor.tensors.filename": TENSORS,
        "solver.tolerance": 1e-10,
        "solver.workers": 1,
      }),
    );
    expect(dotted.flat).toEqual(nested.flat);

    const a = await nested.solveEeg(DIPOLES, ELECTRODES);
    const b = await dotted.solveEeg(DIPOLES, ELECTRODES);
    expect(bitwiseEqual(a.data, b.data)).toBe(true);
  });

  it("takes an existing INI file as the config", () => {
    const dir = tempDir("ini");
    const ini = path.join(dir, "head.ini");
    fs.writeFileSync(
      ini,
      "type = fitted\n" +
        "solver_type = cg\n" +
        "element_type = tetrahedron\n" +
        "\n" +
        "[volume_conductor]\n" +
        `grid.filename = ${GRID}\n` +
        `tensors.filename = ${TENSORS}\n`,
    );
    const driver = track(makeDriver(ini));
    expect(driver.elementCount).toBe(384);
  });

  it("fails at construction when the grid is unreadable", () => {
    const config = listingConfig();
    (config.volume_conductor as Record<string, string>)["grid.filename"] =
      path.join(FIXTURES, "missing.msh");
    expect(() => new MEEGDriver3d(config)).toThrow(ConfigError);
  });
});

describe("in-memory mesh passing", () => {
  it("equals the file-loaded twin on the same arrays", async () => {
    const raw = JSON.parse(
      fs.readFileSync(path.join(FIXTURES, "box.json"), "utf8"),
    ) as InMemoryMesh;
    const fromArrays = track(
      new MEEGDriver3d({
        type: "fitted",
        solver_type: "cg",
        element_type: "tetrahedron",
        volume_conductor: {
          grid: raw as never,
          "tensors.filename": TENSORS,
        },
        solver: { tolerance: 1e-10, workers: 1 },
      }),
    );
    const fromFile = track(new MEEGDriver3d(listingConfig()));

    // identical mesh bytes on the other side of the boundary
    expect(fromArrays.meshChecksum).toBe(fromFile.meshChecksum);

    // and identical numerics: the containers only differ in nothing
    const ta = await fromArrays.computeTransfer("eeg", ELECTRODES);
    const tb = await fromFile.computeTransfer("eeg", ELECTRODES);
    expect(ta.header.meshChecksum).toBe(tb.header.meshChecksum);
    expect(bitwiseEqual(ta.matrix.data, tb.matrix.data)).toBe(true);
  });

  it("accepts an in-memory conductivity table too", () => {
    const raw = JSON.parse(
      fs.readFileSync(path.join(FIXTURES, "box.json"), "utf8"),
    ) as InMemoryMesh;
    const driver = track(
      new MEEGDriver3d({
        type: "fitted",
        solver_type: "cg",
        element_type: "tetrahedron",
        volume_conductor: {
          grid: raw as never,
          tensors: {
            "1": 0.33,
            "2": [0.4, 0.02, 0.01, 0.36, 0.015, 0.3],
          } as never,
        },
      }),
    );
    expect(driver.elementCount).toBe(384);
  });
});

describe("operations", () => {
  let driver: MEEGDriver3d;

  beforeAll(() => {
    driver = track(new MEEGDriver3d(listingConfig()));
  });

  it("returns 0 x n_electrodes for an empty dipole list", async () => {
    const out = await driver.solveEeg([], ELECTRODES);
    expect(out.rows).toBe(0);
    expect(out.cols).toBe(ELECTRODES.length);
    expect(out.data.length).toBe(0);
  });

  it("returns n_sensors x 0 when applying a transfer to no dipoles", async () => {
    const transfer = await driver.computeTransfer("eeg", ELECTRODES);
    const lead = await driver.applyTransfer(transfer, []);
    expect(lead.rows).toBe(ELECTRODES.length);
    expect(lead.cols).toBe(0);
  });

  it("surfaces config errors with the CLI's dotted-key message", async () => {
    await expect(
      driver.solveEeg(DIPOLES, ELECTRODES, { solver_type: "dg" }),
    ).rejects.toThrow(/discontinuous Galerkin/);
    await expect(
      driver.solveEeg(DIPOLES, ELECTRODES, { solver_type: "dg" }),
    ).rejects.toBeInstanceOf(ConfigError);
  });

  it("surfaces solver stalls as numerical errors", async () => {
    await expect(
      driver.solveEeg(DIPOLES, ELECTRODES, {
        "solver.max_iterations": "2",
      }),
    ).rejects.toBeInstanceOf(NumericalError);
  });

  it("keeps the event loop free during a solve", async () => {
    // a 10 ms timer must win the race against a solve that takes
    // hundreds of ms; a blocking implementation would resolve the
    // solve first because the timer callback cannot run until the
    // block ends, and then loses to the microtask queue
    const pending = driver.solveEeg(DIPOLES, ELECTRODES);
    const tick = new Promise<string>((resolve) =>
      setTimeout(() => resolve("tick"), 10),
    );
    const winner = await Promise.race([
      pending.then(() => "solve"),
      tick,
    ]);
    expect(winner).toBe("tick");
    await pending;
  });
});
