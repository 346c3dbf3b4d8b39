/**
 * Stream-prediction gap view: efficiency vs matrix size with the
 * prediction buffer on and off, plus a text table of the per-size gap.
 * Values are rendered from the CSVs as-is; the gap column is the exact
 * decimal difference of the two efficiency cells.
 */

import { percentDiff } from "./decimal.js";
import {
  StatsFile,
  SchemaError,
  cell,
  cfgBoolean,
  cfgNumber,
  totalRow,
} from "./stats.js";
import { lineChart } from "./svg.js";

/** One run per (size, prediction on/off) is required for a two-series view. */
export class MissingSeriesError extends Error {}

export interface GapRow {
  size: number;
  /** Raw efficiency cells from the CSVs. */
  on: string;
  off: string;
  /** Exact (on - off) as a percent string. */
  gapPercent: string;
}

interface SeriesMap {
  on: Map<number, string>;
  off: Map<number, string>;
}

function collect(files: StatsFile[]): SeriesMap {
  const on = new Map<number, string>();
  const off = new Map<number, string>();
  for (const f of files) {
    const size = cfgNumber(f, "workload.m");
    const enabled = cfgBoolean(f, "machine.matlb_enabled");
    const eff = cell(totalRow(f), "efficiency");
    const target = enabled ? on : off;
    if (target.has(size)) {
      throw new SchemaError(
        `${f.source}: duplicate run for size ${size}, prediction ${enabled ? "on" : "off"}`,
      );
    }
    target.set(size, eff);
  }
  return { on, off };
}

export function gapTable(files: StatsFile[]): GapRow[] {
  const { on, off } = collect(files);
  if (on.size === 0 || off.size === 0) {
    throw new MissingSeriesError(
      `need runs with prediction on and off, got ${on.size} on / ${off.size} off`,
    );
  }
  const sizes = [...on.keys()].filter((s) => off.has(s)).sort((a, b) => a - b);
  if (sizes.length === 0) {
    throw new MissingSeriesError("no matrix size appears in both series");
  }
  return sizes.map((size) => ({
    size,
    on: on.get(size) as string,
    off: off.get(size) as string,
    gapPercent: percentDiff(on.get(size) as string, off.get(size) as string),
  }));
}

export function formatGapTable(rows: GapRow[]): string {
  const head = ["size", "eff(on)", "eff(off)", "gap(%)"];
  const body = rows.map((r) => [String(r.size), r.on, r.off, r.gapPercent]);
  const widths = head.map((h, i) =>
    Math.max(h.length, ...body.map((row) => (row[i] as string).length)),
  );
  const pad = (cells: string[]) =>
    cells.map((c, i) => c.padStart(widths[i] as number)).join("  ");
  return [pad(head), ...body.map(pad)].join("\n") + "\n";
}

export function gapChart(files: StatsFile[]): string {
  const rows = gapTable(files);
  const sizes = rows.map((r) => r.size);
  const onYs = rows.map((r) => Number(r.on));
  const offYs = rows.map((r) => Number(r.off));
  const lo = Math.min(...onYs, ...offYs);
  const yMin = Math.max(0, Math.floor((lo - 0.01) * 20) / 20);
  return lineChart({
    title: "Efficiency vs matrix size, stream prediction on / off",
    subtitle: `${rows.length} sizes, single node`,
    xLabel: "matrix size (M = N = K)",
    yLabel: "efficiency",
    xTicks: sizes,
    yMin,
    yMax: 1.0,
    series: [
      { label: "prediction on", color: "#4361ee", xs: sizes, ys: onYs },
      { label: "prediction off", color: "#e63946", xs: sizes, ys: offYs, dash: "5,3" },
    ],
  });
}
