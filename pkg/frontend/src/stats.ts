/**
 * maco-stats-v1 CSV parsing.
 *
 * A stats file starts with `#schema=maco-stats-v1`, then `#config
 * section.key=value` lines echoing the effective run configuration (values
 * JSON-encoded), then a header row and one data row per node plus a closing
 * `all` row. Cell values are kept as the raw strings from the file so that
 * derived tables can reproduce the file's arithmetic exactly.
 */

import { readFileSync, readdirSync } from "node:fs";
import path from "node:path";

export const SCHEMA = "maco-stats-v1";

/** The file is not a readable maco-stats-v1 document. */
export class SchemaError extends Error {}

export interface StatsFile {
  source: string;
  /** Echoed effective config, `section.key` -> decoded JSON value. */
  config: Map<string, unknown>;
  columns: string[];
  /** One map per data row, column name -> raw cell string. */
  rows: Array<Map<string, string>>;
}

export function parseStats(text: string, source = "<memory>"): StatsFile {
  const lines = text.split("\n").filter((l) => l.length > 0);
  const first = lines[0];
  if (first === undefined || !first.startsWith("#schema=")) {
    throw new SchemaError(`${source}: missing #schema line`);
  }
  const schema = first.slice("#schema=".length);
  if (schema !== SCHEMA) {
    throw new SchemaError(`${source}: schema "${schema}" is not ${SCHEMA}`);
  }

  const config = new Map<string, unknown>();
  const body: string[] = [];
  for (const line of lines.slice(1)) {
    if (line.startsWith("#config ")) {
      const kv = line.slice("#config ".length);
      const eq = kv.indexOf("=");
      if (eq < 0) throw new SchemaError(`${source}: bad config line: ${line}`);
      const key = kv.slice(0, eq);
      const raw = kv.slice(eq + 1);
      let value: unknown;
      try {
        value = JSON.parse(raw);
      } catch {
        value = raw;
      }
      config.set(key, value);
    } else if (!line.startsWith("#")) {
      body.push(line);
    }
  }

  const header = body[0];
  if (header === undefined) {
    throw new SchemaError(`${source}: no header row`);
  }
  const columns = header.split(",");
  const rows: Array<Map<string, string>> = [];
  for (const line of body.slice(1)) {
    const cells = line.split(",");
    if (cells.length !== columns.length) {
      throw new SchemaError(
        `${source}: row has ${cells.length} cells, header has ${columns.length}`,
      );
    }
    const row = new Map<string, string>();
    columns.forEach((col, i) => row.set(col, cells[i] as string));
    rows.push(row);
  }
  return { source, config, columns, rows };
}

export function readStats(file: string): StatsFile {
  return parseStats(readFileSync(file, "utf-8"), file);
}

/** Every `*.csv` under `dir`, sorted by name; skips nothing silently. */
export function readStatsDir(dir: string): StatsFile[] {
  const names = readdirSync(dir)
    .filter((n) => n.endsWith(".csv"))
    .sort();
  return names.map((n) => readStats(path.join(dir, n)));
}

export function cell(row: Map<string, string>, col: string): string {
  const v = row.get(col);
  if (v === undefined) throw new SchemaError(`missing column ${col}`);
  return v;
}

/** The machine-wide summary row (`node=all`). */
export function totalRow(f: StatsFile): Map<string, string> {
  const row = f.rows.find((r) => r.get("node") === "all");
  if (!row) throw new SchemaError(`${f.source}: no "all" summary row`);
  return row;
}

/** Per-node rows in file order, without the summary row. */
export function nodeRows(f: StatsFile): Array<Map<string, string>> {
  return f.rows.filter((r) => r.get("node") !== "all");
}

export function cfgNumber(f: StatsFile, key: string): number {
  const v = f.config.get(key);
  if (typeof v !== "number") {
    throw new SchemaError(`${f.source}: config ${key} is not a number`);
  }
  return v;
}

export function cfgBoolean(f: StatsFile, key: string): boolean {
  const v = f.config.get(key);
  if (typeof v !== "boolean") {
    throw new SchemaError(`${f.source}: config ${key} is not a boolean`);
  }
  return v;
}

export function cfgString(f: StatsFile, key: string): string {
  const v = f.config.get(key);
  if (typeof v !== "string") {
    throw new SchemaError(`${f.source}: config ${key} is not a string`);
  }
  return v;
}
