// Error taxonomy mirroring the CLI exit codes: 2 is a configuration or
// input problem, 3 a numerical failure. Messages carry the CLI's stderr
// text verbatim, which names offending config keys in dotted form.

export class ConfigError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConfigError";
  }
}

export class NumericalError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NumericalError";
  }
}

export function errorFromExit(code: number, stderr: string): Error {
  const text = stderr.trim() || `meegfem exited with code ${code}`;
  switch (code) {
    case 2:
      return new ConfigError(text);
    case 3:
      return new NumericalError(text);
    default:
      return new Error(text);
  }
}
