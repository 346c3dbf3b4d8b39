/**
 * Throughput view: modeled GFLOPS per node as bars from one stats file,
 * with the machine-wide rate in the subtitle.
 */

import { StatsFile, cell, cfgString, nodeRows, totalRow } from "./stats.js";
import { barChart } from "./svg.js";

export function throughputChart(f: StatsFile): string {
  const rows = nodeRows(f);
  if (rows.length === 0) throw new Error(`${f.source}: no per-node rows`);
  const categories = rows.map((r) => cell(r, "node"));
  const values = rows.map((r) => Number(cell(r, "gflops")));
  const total = totalRow(f);
  const precision = cfgString(f, "workload.precision");
  return barChart({
    title: "Modeled throughput per node",
    subtitle: `${precision}, machine total ${cell(total, "gflops")} GFLOPS, efficiency ${cell(total, "efficiency")}`,
    xLabel: "node",
    yLabel: "GFLOPS",
    categories,
    series: [{ label: `${precision} rate`, color: "#4361ee", values }],
    yMin: 0,
  });
}
