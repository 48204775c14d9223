import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { CsvError, parseCsvText, readCsv, requireColumns } from "../src/csv";

const FIXTURE = join(__dirname, "fixtures", "desk-advdiff2d.csv");

describe("harness CSV reader", () => {
  it("reads the desk fixture and keeps exact field text", () => {
    const table = readCsv(FIXTURE);
    expect(table.rows.length).toBeGreaterThan(0);
    expect(table.columns).toContain("aggregate_error");
    for (const row of table.rows) {
      expect(Number(row.raw["aggregate_error"])).toBe(
        row.num["aggregate_error"],
      );
      expect(row.raw["dt"]).toMatch(/e[-+]\d+$/);
    }
  });

  it("rejects an empty file", () => {
    expect(() => parseCsvText("", "empty.csv")).toThrow(CsvError);
    expect(() => parseCsvText("", "empty.csv")).toThrow(/no data/);
  });

  it("rejects ragged rows with a line number", () => {
    const text = "problem,method,dt\nadvdiff2d,be\n";
    expect(() => parseCsvText(text, "ragged.csv")).toThrow(/line 2/);
  });

  it("reports missing columns by name", () => {
    const table = parseCsvText("problem,method\nadvdiff2d,be\n", "x.csv");
    expect(() => requireColumns(table, ["dt", "aggregate_error"])).toThrow(
      /dt, aggregate_error/,
    );
  });

  it("fails loudly on unreadable paths", () => {
    const missing = join(mkdtempSync(join(tmpdir(), "plots-")), "nope.csv");
    expect(() => readCsv(missing)).toThrow(CsvError);
  });
});
