// Config trees are nested string-keyed mappings; the canonical form is
// flat with dotted keys, exactly the schema the CLI reads from INI files
// and --set overrides. One schema, two frontends: no key names are
// validated here, the CLI is the single authority.

export type ConfigValue = string | number | boolean;

export interface ConfigMapping {
  [key: string]: ConfigValue | ConfigMapping;
}

function isMapping(v: ConfigValue | ConfigMapping): v is ConfigMapping {
  return typeof v === "object" && v !== null;
}

function scalarToString(v: ConfigValue): string {
  if (typeof v === "boolean") {
    return v ? "true" : "false";
  }
  return String(v);
}

/**
 * Flatten a nested mapping into dotted keys. Keys that already contain
 * dots pass through unchanged, so `{volume_conductor: {"grid.filename":
 * p}}` and `{"volume_conductor.grid.filename": p}` flatten identically.
 */
export function flattenConfig(
  mapping: ConfigMapping,
  prefix = "",
): Record<string, string> {
  const flat: Record<string, string> = {};
  for (const [key, value] of Object.entries(mapping)) {
    const dotted = prefix ? `${prefix}.${key}` : key;
    if (isMapping(value)) {
      Object.assign(flat, flattenConfig(value, dotted));
    } else {
      flat[dotted] = scalarToString(value);
    }
  }
  return flat;
}

/**
 * Render a flat config as INI text the CLI parses back to the same
 * tree. Dotted keys are written at top level; `#` and `;` start
 * comments in the INI dialect, so values containing them are refused
 * rather than silently truncated on the way back in.
 */
export function renderIni(flat: Record<string, string>): string {
  const lines: string[] = [];
  for (const [key, value] of Object.entries(flat)) {
    if (/[#;\r\n]/.test(value) || /[#;\r\n=]/.test(key)) {
      throw new Error(
        `config entry ${key} cannot be written to INI: ` +
          "value or key contains a comment or line delimiter",
      );
    }
    lines.push(`${key} = ${value}`);
  }
  return lines.join("\n") + "\n";
}
