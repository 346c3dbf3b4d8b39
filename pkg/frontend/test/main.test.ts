import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";

import { afterEach, describe, expect, it, vi } from "vitest";

import { run } from "../src/main.js";
import { simpleCsv, statsCsv } from "./helpers.js";

function sweepDir(): string {
  const dir = mkdtempSync(path.join(tmpdir(), "maco-plots-"));
  for (const [size, on, off] of [
    [256, "0.9799", "0.9714"],
    [1024, "0.9669", "0.9171"],
  ] as Array<[number, string, string]>) {
    writeFileSync(path.join(dir, `s${size}_on.csv`), simpleCsv(size, true, on));
    writeFileSync(path.join(dir, `s${size}_off.csv`), simpleCsv(size, false, off));
  }
  return dir;
}

afterEach(() => {
  vi.restoreAllMocks();
});

describe("gap command", () => {
  it("prints the table and writes gap.svg", () => {
    const dir = sweepDir();
    const out: string[] = [];
    vi.spyOn(process.stdout, "write").mockImplementation((chunk) => {
      out.push(String(chunk));
      return true;
    });
    vi.spyOn(console, "log").mockImplementation(() => {});
    expect(run(["gap", dir])).toBe(0);
    const table = out.join("");
    expect(table).toContain("gap(%)");
    expect(table).toContain("4.98");
    const svg = readFileSync(path.join(dir, "gap.svg"), "utf-8");
    expect(svg).toContain("prediction off");
  });

  it("honors --out", () => {
    const dir = sweepDir();
    const outDir = mkdtempSync(path.join(tmpdir(), "maco-plots-out-"));
    vi.spyOn(process.stdout, "write").mockImplementation(() => true);
    vi.spyOn(console, "log").mockImplementation(() => {});
    run(["gap", dir, "--out", outDir]);
    expect(existsSync(path.join(outDir, "gap.svg"))).toBe(true);
  });
});

describe("scaling command", () => {
  it("writes scaling.svg", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "maco-plots-"));
    writeFileSync(
      path.join(dir, "n2.csv"),
      statsCsv({
        nodes: 2,
        rows: [
          ["0", "0.99", "79.0"],
          ["1", "0.99", "79.0"],
          ["all", "0.99", "158.0"],
        ],
      }),
    );
    vi.spyOn(console, "log").mockImplementation(() => {});
    expect(run(["scaling", dir])).toBe(0);
    expect(existsSync(path.join(dir, "scaling.svg"))).toBe(true);
  });
});

describe("throughput command", () => {
  it("writes throughput.svg next to the file", () => {
    const dir = mkdtempSync(path.join(tmpdir(), "maco-plots-"));
    const file = path.join(dir, "throughput_16node.csv");
    writeFileSync(
      file,
      statsCsv({
        nodes: 16,
        precision: "fp32",
        rows: [
          ...Array.from({ length: 16 }, (_, i) =>
            [String(i), "0.999", "159.8"] as [string, string, string]),
          ["all", "0.999", "2556.6"],
        ],
      }),
    );
    vi.spyOn(console, "log").mockImplementation(() => {});
    expect(run(["throughput", file])).toBe(0);
    const svg = readFileSync(path.join(dir, "throughput.svg"), "utf-8");
    expect(svg).toContain("2556.6");
    expect((svg.match(/<rect [^>]*fill="#4361ee"/g) ?? []).length).toBe(16);
  });

  it("refuses a directory", () => {
    const dir = sweepDir();
    expect(() => run(["throughput", dir])).toThrow(/single CSV file/);
  });
});

describe("argument handling", () => {
  it("rejects unknown commands and flags", () => {
    expect(() => run(["nope", "somewhere"])).toThrow(/unknown command/);
    expect(() => run(["gap", "dir", "--wat"])).toThrow(/unknown flag/);
    expect(() => run(["gap"])).toThrow(/usage/);
    expect(() => run(["gap", "a", "b"])).toThrow(/usage/);
  });
});
