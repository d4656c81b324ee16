import { ConfigError } from "./errors";

// Writer for the MSH 2.2 ASCII subset the solver reads: tet4 or hex8
// only, one tissue label per element carried in the first tag. This is
// how in-memory meshes cross the process boundary; the solver's mesh
// checksum is computed over the parsed arrays, so a mesh passed as
// arrays and the same mesh loaded from a file are indistinguishable.

export type ElementKind = "tetrahedron" | "hexahedron";

export interface InMemoryMesh {
  kind?: ElementKind;
  /** n x 3 vertex coordinates in mm. */
  vertices: readonly (readonly number[])[];
  /** m x 4 (tet) or m x 8 (hex) zero-based vertex indices. */
  elements: readonly (readonly number[])[];
  /** m tissue labels. */
  labels: readonly number[];
}

export function isInMemoryMesh(v: unknown): v is InMemoryMesh {
  return (
    typeof v === "object" &&
    v !== null &&
    Array.isArray((v as InMemoryMesh).vertices) &&
    Array.isArray((v as InMemoryMesh).elements) &&
    Array.isArray((v as InMemoryMesh).labels)
  );
}

export function formatMsh(mesh: InMemoryMesh): string {
  const nodes = mesh.elements.length ? mesh.elements[0].length : 4;
  const kind: ElementKind =
    mesh.kind ?? (nodes === 8 ? "hexahedron" : "tetrahedron");
  if (kind !== "tetrahedron" && kind !== "hexahedron") {
    throw new ConfigError(`unknown element kind ${String(kind)}`);
  }
  const expected = kind === "tetrahedron" ? 4 : 8;
  const etype = kind === "tetrahedron" ? 4 : 5;
  if (mesh.labels.length !== mesh.elements.length) {
    throw new ConfigError(
      `${mesh.elements.length} elements but ${mesh.labels.length} labels`,
    );
  }

  const out: string[] = [];
  out.push("$MeshFormat", "2.2 0 8", "$EndMeshFormat");
  out.push("$Nodes", String(mesh.vertices.length));
  mesh.vertices.forEach((v, i) => {
    if (v.length !== 3) {
      throw new ConfigError(`vertex ${i}: expected 3 coordinates`);
    }
    out.push(`${i + 1} ${v[0]} ${v[1]} ${v[2]}`);
  });
  out.push("$EndNodes", "$Elements", String(mesh.elements.length));
  mesh.elements.forEach((conn, i) => {
    if (conn.length !== expected) {
      throw new ConfigError(
        `element ${i}: ${conn.length} vertices, ${kind} needs ${expected}`,
      );
    }
    const label = mesh.labels[i];
    const ids = conn.map((c) => String(c + 1)).join(" ");
    out.push(`${i + 1} ${etype} 2 ${label} ${label} ${ids}`);
  });
  out.push("$EndElements", "");
  return out.join("\n");
}

/**
 * Conductivity table: `label value` for isotropic entries, `label xx xy
 * xz yy yz zz` for full symmetric tensors.
 */
export function formatConductivities(
  tensors: Record<string | number, number | readonly number[]>,
): string {
  const out: string[] = [];
  for (const [label, value] of Object.entries(tensors)) {
    const values = typeof value === "number" ? [value] : value;
    if (values.length !== 1 && values.length !== 6) {
      throw new ConfigError(
        `conductivity for label ${label}: 1 or 6 values, got ${values.length}`,
      );
    }
    out.push(`${label} ${values.map((v) => String(v)).join(" ")}`);
  }
  return out.join("\n") + "\n";
}
