/**
 * Panel assembly for the three figure kinds.
 *
 * One panel per grid resolution found in the data; within a panel one
 * series per method (the reduced-basis method further split by the
 * grouping key).  Convergence panels are log-log and carry an order-1
 * reference line plus the forward Euler stability marker when the data
 * provides one.  Every plotted point embeds the exact CSV field text in
 * ``data-*`` attributes, so values can be read back from the figure
 * without any unit or precision change.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { dirname } from "node:path";

import { CsvError, HarnessRow, HarnessTable, readCsv, requireColumns } from "./csv.js";
import { FigureKind, FigureSpec, GroupKey } from "./figspec.js";
import {
  SERIES_COLORS,
  MARKERS,
  Scale,
  decadeTicks,
  esc,
  extent,
  linearExtent,
  linearScale,
  linearTicks,
  logScale,
  markerShape,
  px,
  tickLabel,
} from "./svg.js";

export class NoDataError extends Error {}

const Y_FIELD: Record<FigureKind, string> = {
  convergence: "aggregate_error",
  timing: "wall_time_seconds",
  iterations: "mean_inner_iterations",
};

const Y_LABEL: Record<FigureKind, string> = {
  convergence: "aggregate relative error",
  timing: "wall time [s]",
  iterations: "mean inner iterations",
};

const BASE_COLUMNS = ["problem", "method", "n_per_dim", "dt", "epsilon",
  "n_basis", "dt_fe", "diverged"];

const PANEL = { width: 420, height: 360 };
const MARGIN = { left: 64, right: 16, top: 36, bottom: 48 };

interface SeriesPoint {
  dt: number;
  y: number;
  dtRaw: string;
  yRaw: string;
}

interface Series {
  label: string;
  points: SeriesPoint[];
}

interface Panel {
  nPerDim: number;
  series: Series[];
  dtFe: number;
}

function seriesLabel(row: HarnessRow, groupBy: GroupKey): string {
  const method = row.raw["method"];
  if (method !== "imexrb") {
    return method;
  }
  const value = row.num[groupBy];
  const shown = groupBy === "epsilon" ? value.toExponential(2) : String(value);
  return `imexrb ${groupBy}=${shown}`;
}

function collectPanels(
  tables: HarnessTable[],
  kind: FigureKind,
  groupBy: GroupKey,
): Panel[] {
  const yField = Y_FIELD[kind];
  const panels = new Map<number, Map<string, Series>>();
  const dtFe = new Map<number, number>();

  for (const table of tables) {
    for (const row of table.rows) {
      const y = row.num[yField];
      const dt = row.num["dt"];
      if (!Number.isFinite(dt) || dt <= 0 || !Number.isFinite(y)) {
        continue; // diverged or degenerate sweep points carry no point
      }
      if (kind !== "iterations" && y <= 0) {
        continue; // log axis
      }
      if (kind === "iterations" && row.raw["method"] !== "imexrb") {
        continue;
      }
      const n = row.num["n_per_dim"];
      if (!panels.has(n)) {
        panels.set(n, new Map());
      }
      const label = seriesLabel(row, groupBy);
      const series = panels.get(n)!;
      if (!series.has(label)) {
        series.set(label, { label, points: [] });
      }
      series.get(label)!.points.push({
        dt,
        y,
        dtRaw: row.raw["dt"],
        yRaw: row.raw[yField],
      });
      const marker = row.num["dt_fe"];
      if (Number.isFinite(marker) && marker > 0 && !dtFe.has(n)) {
        dtFe.set(n, marker);
      }
    }
  }

  const out: Panel[] = [];
  for (const n of [...panels.keys()].sort((a, b) => a - b)) {
    const series = [...panels.get(n)!.values()]
      .sort((a, b) => a.label.localeCompare(b.label));
    for (const s of series) {
      s.points.sort((a, b) => a.dt - b.dt);
    }
    out.push({ nPerDim: n, series, dtFe: dtFe.get(n) ?? NaN });
  }
  return out;
}

function renderPanel(
  panel: Panel,
  kind: FigureKind,
  offsetX: number,
  title: string,
): string {
  const allDts = panel.series.flatMap((s) => s.points.map((p) => p.dt));
  const allYs = panel.series.flatMap((s) => s.points.map((p) => p.y));
  const xDomainValues = Number.isFinite(panel.dtFe)
    ? [...allDts, panel.dtFe]
    : allDts;
  const xDomain = extent(xDomainValues);
  const logY = kind !== "iterations";
  const yDomain = logY ? extent(allYs) : linearExtent(allYs);

  const xRange = {
    min: offsetX + MARGIN.left,
    max: offsetX + PANEL.width - MARGIN.right,
  };
  const yRange = { min: PANEL.height - MARGIN.bottom, max: MARGIN.top };
  const xs = logScale(xDomain, xRange);
  const ys: Scale = logY
    ? logScale(yDomain, yRange)
    : linearScale(yDomain, yRange);

  const parts: string[] = [];
  parts.push(`<g class="panel" data-n-per-dim="${panel.nPerDim}">`);
  parts.push(
    `<rect x="${px(xRange.min)}" y="${px(yRange.max)}" width="${px(xRange.max - xRange.min)}" height="${px(yRange.min - yRange.max)}" fill="none" stroke="#444" stroke-width="1"/>`,
  );
  parts.push(
    `<text x="${px((xRange.min + xRange.max) / 2)}" y="${px(MARGIN.top - 14)}" text-anchor="middle" font-size="13">${esc(title)}</text>`,
  );

  for (const t of decadeTicks(xDomain)) {
    const x = xs.apply(t);
    parts.push(
      `<line x1="${px(x)}" y1="${px(yRange.min)}" x2="${px(x)}" y2="${px(yRange.min + 5)}" stroke="#444"/>`,
      `<text x="${px(x)}" y="${px(yRange.min + 18)}" text-anchor="middle" font-size="10">${tickLabel(t)}</text>`,
    );
  }
  const yTicks = logY ? decadeTicks(yDomain) : linearTicks(yDomain);
  for (const t of yTicks) {
    const y = ys.apply(t);
    parts.push(
      `<line x1="${px(xRange.min - 5)}" y1="${px(y)}" x2="${px(xRange.min)}" y2="${px(y)}" stroke="#444"/>`,
      `<text x="${px(xRange.min - 8)}" y="${px(y + 3)}" text-anchor="end" font-size="10">${tickLabel(t)}</text>`,
    );
  }
  parts.push(
    `<text x="${px((xRange.min + xRange.max) / 2)}" y="${px(PANEL.height - 10)}" text-anchor="middle" font-size="11">dt</text>`,
  );

  // order-1 reference line anchored at the first series' largest-dt point
  if (kind === "convergence" && panel.series.length > 0) {
    const anchorSeries = panel.series[0];
    const anchor = anchorSeries.points[anchorSeries.points.length - 1];
    const yAt = (dt: number) => anchor.y * (dt / anchor.dt);
    parts.push(
      `<line class="reference-order1" data-anchor-dt="${esc(anchor.dtRaw)}" ` +
        `data-anchor-value="${esc(anchor.yRaw)}" ` +
        `x1="${px(xs.apply(xDomain.min))}" y1="${px(ys.apply(yAt(xDomain.min)))}" ` +
        `x2="${px(xs.apply(xDomain.max))}" y2="${px(ys.apply(yAt(xDomain.max)))}" ` +
        `stroke="#999" stroke-dasharray="6 3"/>`,
      `<text x="${px(xRange.max - 4)}" y="${px(ys.apply(yAt(xDomain.max)) - 6)}" text-anchor="end" font-size="10" fill="#777">order 1</text>`,
    );
  }

  if (Number.isFinite(panel.dtFe)) {
    const x = xs.apply(panel.dtFe);
    parts.push(
      `<line class="dt-fe-marker" data-dt-fe="${panel.dtFe}" x1="${px(x)}" y1="${px(yRange.min)}" x2="${px(x)}" y2="${px(yRange.max)}" stroke="#555" stroke-dasharray="2 3"/>`,
      `<text x="${px(x + 3)}" y="${px(yRange.max + 12)}" font-size="10" fill="#555">dt_FE</text>`,
    );
  }

  panel.series.forEach((series, si) => {
    const color = SERIES_COLORS[si % SERIES_COLORS.length];
    const marker = MARKERS[si % MARKERS.length];
    const coords = series.points.map(
      (p) => `${px(xs.apply(p.dt))},${px(ys.apply(p.y))}`,
    );
    if (coords.length > 1) {
      parts.push(
        `<polyline fill="none" stroke="${color}" stroke-width="1.5" points="${coords.join(" ")}"/>`,
      );
    }
    for (const p of series.points) {
      const attrs =
        `class="pt" fill="${color}" data-series="${esc(series.label)}" ` +
        `data-dt="${esc(p.dtRaw)}" data-value="${esc(p.yRaw)}"`;
      parts.push(markerShape(marker, xs.apply(p.dt), ys.apply(p.y), 3.2, attrs));
    }
    const ly = MARGIN.top + 14 + 14 * si;
    parts.push(
      markerShape(marker, xRange.min + 10, ly - 3, 3.2, `fill="${color}"`),
      `<text x="${px(xRange.min + 18)}" y="${px(ly)}" font-size="10">${esc(series.label)}</text>`,
    );
  });

  parts.push("</g>");
  return parts.join("\n");
}

export function renderFigure(spec: FigureSpec): string {
  const tables = spec.csv.map((path) => readCsv(path));
  const needed = [...BASE_COLUMNS, Y_FIELD[spec.kind]];
  for (const table of tables) {
    requireColumns(table, needed);
  }
  const panels = collectPanels(tables, spec.kind, spec.groupBy);
  if (panels.length === 0) {
    throw new NoDataError(
      `no data: no plottable ${spec.kind} rows found in ` +
        spec.csv.join(", "),
    );
  }

  const width = PANEL.width * panels.length;
  const body = panels
    .map((panel, i) =>
      renderPanel(
        panel,
        spec.kind,
        PANEL.width * i,
        `${Y_LABEL[spec.kind]} (n=${panel.nPerDim})`,
      ),
    )
    .join("\n");
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
    `height="${PANEL.height}" viewBox="0 0 ${width} ${PANEL.height}" ` +
    `font-family="sans-serif" data-kind="${spec.kind}">\n` +
    `<rect width="${width}" height="${PANEL.height}" fill="white"/>\n` +
    `${body}\n</svg>\n`
  );
}

/** Render and write the figure; nothing is written when rendering fails. */
export function writeFigure(spec: FigureSpec): string {
  const svg = renderFigure(spec);
  mkdirSync(dirname(spec.out), { recursive: true });
  writeFileSync(spec.out, svg, "utf8");
  return spec.out;
}

export { CsvError };
