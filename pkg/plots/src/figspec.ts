/** Figure description: which CSVs, which panel kind, how series group. */

import { readFileSync } from "node:fs";
import { dirname, resolve } from "node:path";

export type FigureKind = "convergence" | "timing" | "iterations";
export type GroupKey = "epsilon" | "n_basis";

export interface FigureSpec {
  csv: string[];
  kind: FigureKind;
  groupBy: GroupKey;
  out: string;
}

export class FigureSpecError extends Error {}

const KINDS: FigureKind[] = ["convergence", "timing", "iterations"];
const GROUP_KEYS: GroupKey[] = ["epsilon", "n_basis"];

export function parseFigureSpec(data: unknown, baseDir = "."): FigureSpec {
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    throw new FigureSpecError("figure spec must be a JSON object");
  }
  const obj = data as Record<string, unknown>;

  const rawCsv = obj["csv"];
  let csv: string[];
  if (typeof rawCsv === "string") {
    csv = [rawCsv];
  } else if (
    Array.isArray(rawCsv) &&
    rawCsv.length > 0 &&
    rawCsv.every((p) => typeof p === "string")
  ) {
    csv = rawCsv as string[];
  } else {
    throw new FigureSpecError(
      "'csv' must be a path or a nonempty list of paths",
    );
  }

  const kind = obj["kind"];
  if (typeof kind !== "string" || !KINDS.includes(kind as FigureKind)) {
    throw new FigureSpecError(
      `'kind' must be one of ${KINDS.join(" | ")}, got ${JSON.stringify(kind)}`,
    );
  }

  const groupBy = obj["group_by"] ?? "epsilon";
  if (
    typeof groupBy !== "string" ||
    !GROUP_KEYS.includes(groupBy as GroupKey)
  ) {
    throw new FigureSpecError(
      `'group_by' must be one of ${GROUP_KEYS.join(" | ")}`,
    );
  }

  const out = obj["out"];
  if (typeof out !== "string" || out.length === 0) {
    throw new FigureSpecError("'out' must be a nonempty output path");
  }

  const known = new Set(["csv", "kind", "group_by", "out"]);
  const unknown = Object.keys(obj).filter((k) => !known.has(k));
  if (unknown.length > 0) {
    throw new FigureSpecError(
      `unknown figure spec field(s): ${unknown.join(", ")}`,
    );
  }

  return {
    csv: csv.map((p) => resolve(baseDir, p)),
    kind: kind as FigureKind,
    groupBy: groupBy as GroupKey,
    out: resolve(baseDir, out),
  };
}

export function loadFigureSpec(path: string): FigureSpec {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new FigureSpecError(
      `${path}: cannot read figure spec: ${(err as Error).message}`,
    );
  }
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch (err) {
    throw new FigureSpecError(
      `${path}: invalid JSON: ${(err as Error).message}`,
    );
  }
  return parseFigureSpec(data, dirname(path));
}
