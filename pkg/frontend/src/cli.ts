import { execFile, execFileSync } from "node:child_process";

import { errorFromExit } from "./errors";

// Plenty for text matrices; binary payloads go through files, not pipes.
const MAX_BUFFER = 256 * 1024 * 1024;

export interface CliResult {
  stdout: string;
  stderr: string;
}

export function meegfemBinary(override?: string): string {
  return override ?? process.env.MEEGFEM_BIN ?? "meegfem";
}

/**
 * Run a meegfem subcommand asynchronously. The child process does the
 * numerical work, so the Node event loop stays free during solves.
 */
export function runCli(args: string[], binary?: string): Promise<CliResult> {
  return new Promise((resolve, reject) => {
    execFile(
      meegfemBinary(binary),
      args,
      { maxBuffer: MAX_BUFFER, encoding: "utf8" },
      (error, stdout, stderr) => {
        if (error) {
          const code = typeof error.code === "number" ? error.code : -1;
          reject(errorFromExit(code, stderr));
          return;
        }
        resolve({ stdout, stderr });
      },
    );
  });
}

/** Synchronous variant, used only for cheap calls at construction time. */
export function runCliSync(args: string[], binary?: string): CliResult {
  try {
    const stdout = execFileSync(meegfemBinary(binary), args, {
      maxBuffer: MAX_BUFFER,
      encoding: "utf8",
      stdio: ["ignore", "pipe", "pipe"],
    });
    return { stdout, stderr: "" };
  } catch (err) {
    const e = err as { status?: number | null; stderr?: string | Buffer };
    const stderr =
      typeof e.stderr === "string" ? e.stderr : (e.stderr?.toString() ?? "");
    throw errorFromExit(e.status ?? -1, stderr);
  }
}
