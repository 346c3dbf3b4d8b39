/**
 * Builds small maco-stats-v1 documents for the tests. Only the columns
 * the chart code reads are included; the parser does not require the
 * full production column set.
 */

export interface FakeRun {
  size?: number;
  nodes?: number;
  matlb?: boolean;
  precision?: string;
  /** [node label, efficiency cell, gflops cell] per row; "all" row appended. */
  rows: Array<[string, string, string]>;
}

export function statsCsv(run: FakeRun): string {
  const lines = [
    "#schema=maco-stats-v1",
    `#config machine.matlb_enabled=${run.matlb ?? true}`,
    `#config machine.nodes=${run.nodes ?? 1}`,
    `#config workload.m=${run.size ?? 256}`,
    `#config workload.precision="${run.precision ?? "fp64"}"`,
    "node,precision,efficiency,gflops",
  ];
  for (const [node, eff, gf] of run.rows) {
    lines.push(`${node},${run.precision ?? "fp64"},${eff},${gf}`);
  }
  return lines.join("\n") + "\n";
}

/** A single-node run whose summary row repeats the node row. */
export function simpleCsv(size: number, matlb: boolean, eff: string): string {
  return statsCsv({
    size,
    matlb,
    rows: [
      ["0", eff, "75.0"],
      ["all", eff, "75.0"],
    ],
  });
}
