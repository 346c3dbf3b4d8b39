#!/usr/bin/env node
/**
 * Command line entry: regenerate the chart set from a directory of
 * maco-stats-v1 CSV files.
 *
 *   maco-plots gap <csv_dir> [--out <dir>]
 *   maco-plots scaling <csv_dir> [--out <dir>]
 *   maco-plots throughput <csv_file> [--out <dir>]
 *
 * `gap` also prints the per-size efficiency gap table; its numbers are
 * the CSV cells and their exact differences, nothing recomputed.
 */

import { statSync, writeFileSync } from "node:fs";
import path from "node:path";
import { pathToFileURL } from "node:url";

import { gapChart, gapTable, formatGapTable } from "./gap.js";
import { scalingChart } from "./scaling.js";
import { readStats, readStatsDir } from "./stats.js";
import { throughputChart } from "./throughput.js";

const USAGE = `usage: maco-plots <command> <path> [--out <dir>]
commands:
  gap <csv_dir>          efficiency vs size chart + printed gap table
  scaling <csv_dir>      per-node efficiency vs node count chart
  throughput <csv_file>  per-node GFLOPS bars for one run
`;

interface Args {
  command: string;
  input: string;
  out?: string;
}

function parseArgs(argv: string[]): Args {
  const rest: string[] = [];
  let out: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i] as string;
    if (a === "--out") {
      out = argv[++i];
      if (out === undefined) throw new Error("--out needs a directory");
    } else if (a.startsWith("-")) {
      throw new Error(`unknown flag ${a}`);
    } else {
      rest.push(a);
    }
  }
  const [command, input] = rest;
  if (!command || !input || rest.length > 2) throw new Error(USAGE.trimEnd());
  return { command, input, out };
}

function write(outDir: string, name: string, svg: string): void {
  const file = path.join(outDir, name);
  writeFileSync(file, svg);
  console.log(`wrote ${file}`);
}

export function run(argv: string[]): number {
  const args = parseArgs(argv);
  if (args.command === "gap") {
    const files = readStatsDir(args.input);
    process.stdout.write(formatGapTable(gapTable(files)));
    write(args.out ?? args.input, "gap.svg", gapChart(files));
    return 0;
  }
  if (args.command === "scaling") {
    const files = readStatsDir(args.input);
    write(args.out ?? args.input, "scaling.svg", scalingChart(files));
    return 0;
  }
  if (args.command === "throughput") {
    if (statSync(args.input).isDirectory()) {
      throw new Error("throughput takes a single CSV file, not a directory");
    }
    const f = readStats(args.input);
    write(args.out ?? path.dirname(args.input), "throughput.svg", throughputChart(f));
    return 0;
  }
  throw new Error(`unknown command "${args.command}"\n${USAGE.trimEnd()}`);
}

const entry = process.argv[1];
if (entry !== undefined && import.meta.url === pathToFileURL(path.resolve(entry)).href) {
  try {
    process.exit(run(process.argv.slice(2)));
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  }
}
