export { ConfigError, NumericalError } from "./errors";
export { flattenConfig, renderIni } from "./config";
export type { ConfigMapping, ConfigValue } from "./config";
export {
  HEADER_SIZE,
  parseHeader,
  parseTransfer,
  readTransferFile,
  readTransferHeader,
} from "./container";
export type { Matrix, ParsedTransfer, TransferHeader } from "./container";
export {
  formatDipoles,
  formatMeasurement,
  formatMatrixText,
  formatPoints,
  formatSourceSpace,
  parseMatrixText,
} from "./text";
export type { Dipole, Vec3 } from "./text";
export { formatConductivities, formatMsh, isInMemoryMesh } from "./msh";
export type { ElementKind, InMemoryMesh } from "./msh";
export { MEEGDriver3d, makeDriver } from "./driver";
export type {
  DriverOptions,
  MeshInfo,
  ScanOutcome,
  TransferResult,
} from "./driver";
export { meegfemBinary, runCli, runCliSync } from "./cli";
