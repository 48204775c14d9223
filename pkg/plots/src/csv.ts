/**
 * Reader for the harness result CSV.
 *
 * Fields are kept both as the exact text written by the harness (so figures
 * can carry values through without reformatting) and as parsed numbers.
 */

import { readFileSync } from "node:fs";

export interface HarnessTable {
  columns: string[];
  rows: HarnessRow[];
  path: string;
}

export interface HarnessRow {
  /** exact CSV field text per column */
  raw: Record<string, string>;
  /** numeric view (NaN for non-numeric fields) */
  num: Record<string, number>;
}

export class CsvError extends Error {}

export function parseCsvText(text: string, path: string): HarnessTable {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new CsvError(`${path}: no data (file is empty)`);
  }
  const columns = lines[0].split(",");
  if (columns.length < 2 || !columns.includes("problem")) {
    throw new CsvError(`${path}: malformed header: ${lines[0]}`);
  }
  const rows: HarnessRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== columns.length) {
      throw new CsvError(
        `${path}: line ${i + 1} has ${parts.length} fields, ` +
          `expected ${columns.length}`,
      );
    }
    const raw: Record<string, string> = {};
    const num: Record<string, number> = {};
    columns.forEach((col, j) => {
      raw[col] = parts[j];
      num[col] = Number(parts[j]);
    });
    rows.push({ raw, num });
  }
  return { columns, rows, path };
}

export function readCsv(path: string): HarnessTable {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new CsvError(`${path}: cannot read CSV: ${(err as Error).message}`);
  }
  return parseCsvText(text, path);
}

/** Ensure every referenced column exists in the table. */
export function requireColumns(table: HarnessTable, needed: string[]): void {
  const missing = needed.filter((c) => !table.columns.includes(c));
  if (missing.length > 0) {
    throw new CsvError(
      `${table.path}: missing required column(s): ${missing.join(", ")}`,
    );
  }
}
