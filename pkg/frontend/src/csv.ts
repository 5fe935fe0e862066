/**
 * Minimal CSV reading with schema validation.
 *
 * Study outputs are plain comma-separated tables with a header row and
 * full-precision decimal floats; nothing here needs quoting rules.
 */

import { readFileSync } from "node:fs";

export interface Table {
  columns: string[];
  rows: number[][];
}

export class SchemaError extends Error {
  constructor(public file: string, public missing: string[]) {
    super(`${file}: missing columns ${missing.join(", ")}`);
  }
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    return { columns: [], rows: [] };
  }
  const columns = lines[0].split(",").map((c) => c.trim());
  const rows = lines.slice(1).map((line) => line.split(",").map(Number));
  return { columns, rows };
}

export function readCsv(path: string): Table {
  return parseCsv(readFileSync(path, "utf8"));
}

/** Column accessor; throws SchemaError listing every missing column. */
export function requireColumns(
  file: string,
  table: Table,
  names: string[],
): Map<string, number[]> {
  const missing = names.filter((n) => !table.columns.includes(n));
  if (missing.length > 0) {
    throw new SchemaError(file, missing);
  }
  const out = new Map<string, number[]>();
  for (const name of names) {
    const idx = table.columns.indexOf(name);
    out.set(
      name,
      table.rows.map((r) => r[idx]),
    );
  }
  return out;
}
