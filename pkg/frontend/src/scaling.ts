/**
 * Scaling view: machine-wide per-node efficiency against node count, one
 * bar series per problem size, with each node's own efficiency overlaid
 * as dots so the spread is visible.
 */

import {
  StatsFile,
  cell,
  cfgNumber,
  nodeRows,
  totalRow,
} from "./stats.js";
import { barChart } from "./svg.js";

/** The directory holds no runs to put on the node-count axis. */
export class MissingAxisError extends Error {}

export interface ScalingPoint {
  nodes: number;
  size: number;
  efficiency: number;
  perNode: number[];
}

const PALETTE = ["#4361ee", "#2d6a4f", "#e63946", "#f3722c", "#7209b7"];

export function collectScaling(files: StatsFile[]): ScalingPoint[] {
  const points = files.map((f) => ({
    nodes: cfgNumber(f, "machine.nodes"),
    size: cfgNumber(f, "workload.m"),
    efficiency: Number(cell(totalRow(f), "efficiency")),
    perNode: nodeRows(f).map((r) => Number(cell(r, "efficiency"))),
  }));
  if (points.length === 0) {
    throw new MissingAxisError("no stats files on the node-count axis");
  }
  return points.sort((a, b) => a.nodes - b.nodes || a.size - b.size);
}

export function scalingChart(files: StatsFile[]): string {
  const points = collectScaling(files);
  const nodeCounts = [...new Set(points.map((p) => p.nodes))].sort((a, b) => a - b);
  const sizes = [...new Set(points.map((p) => p.size))].sort((a, b) => a - b);
  const categories = nodeCounts.map(String);

  const series = sizes.map((size, i) => ({
    label: `size ${size}`,
    color: PALETTE[i % PALETTE.length] as string,
    values: nodeCounts.map((n) => {
      const p = points.find((q) => q.nodes === n && q.size === size);
      return p ? p.efficiency : null;
    }),
  }));

  const dotPoints = points.flatMap((p) =>
    p.perNode.map((v) => ({ cat: nodeCounts.indexOf(p.nodes), value: v })),
  );

  const effs = points.flatMap((p) => [p.efficiency, ...p.perNode]);
  const lo = Math.min(...effs);
  const yMin = Math.max(0, Math.floor((lo - 0.02) * 20) / 20);

  return barChart({
    title: "Per-node efficiency vs node count",
    subtitle: `${points.length} runs, sizes ${sizes.join("/")}`,
    xLabel: "nodes",
    yLabel: "per-node efficiency",
    categories,
    series,
    dots: { label: "individual nodes", color: "#333", points: dotPoints },
    yMin,
    yMax: 1.0,
  });
}
