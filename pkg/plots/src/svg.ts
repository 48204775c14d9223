/** Minimal deterministic SVG builders: scales, axes, series, markers. */

export interface Extent {
  min: number;
  max: number;
}

export interface Scale {
  apply(v: number): number;
  readonly log: boolean;
}

export function logScale(domain: Extent, range: Extent): Scale {
  const d0 = Math.log10(domain.min);
  const d1 = Math.log10(domain.max);
  const span = d1 - d0 || 1;
  return {
    log: true,
    apply: (v: number) =>
      range.min + ((Math.log10(v) - d0) / span) * (range.max - range.min),
  };
}

export function linearScale(domain: Extent, range: Extent): Scale {
  const span = domain.max - domain.min || 1;
  return {
    log: false,
    apply: (v: number) =>
      range.min + ((v - domain.min) / span) * (range.max - range.min),
  };
}

export function extent(values: number[], padFactor = 1.15): Extent {
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    if (v < min) min = v;
    if (v > max) max = v;
  }
  return { min: min / padFactor, max: max * padFactor };
}

export function linearExtent(values: number[], pad = 0.1): Extent {
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    if (v < min) min = v;
    if (v > max) max = v;
  }
  const span = max - min || 1;
  return { min: Math.min(0, min - pad * span), max: max + pad * span };
}

export function decadeTicks(domain: Extent): number[] {
  const ticks: number[] = [];
  const lo = Math.ceil(Math.log10(domain.min) - 1e-12);
  const hi = Math.floor(Math.log10(domain.max) + 1e-12);
  for (let e = lo; e <= hi; e++) {
    ticks.push(Math.pow(10, e));
  }
  return ticks;
}

export function linearTicks(domain: Extent, count = 5): number[] {
  const span = domain.max - domain.min;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const scaled = span / count / step;
  const unit = scaled >= 5 ? 5 * step : scaled >= 2 ? 2 * step : step;
  const ticks: number[] = [];
  for (
    let v = Math.ceil(domain.min / unit) * unit;
    v <= domain.max + 1e-12 * span;
    v += unit
  ) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function px(v: number): string {
  return v.toFixed(3);
}

export function tickLabel(v: number): string {
  const e = Math.log10(Math.abs(v));
  if (Number.isFinite(e) && Math.abs(e - Math.round(e)) < 1e-9) {
    return `1e${Math.round(e)}`;
  }
  return v.toPrecision(3);
}

export const SERIES_COLORS = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#e377c2",
  "#17becf",
];

export const MARKERS = ["circle", "square", "diamond", "triangle"] as const;

export function markerShape(
  kind: (typeof MARKERS)[number],
  cx: number,
  cy: number,
  r: number,
  attrs: string,
): string {
  switch (kind) {
    case "square":
      return `<rect ${attrs} x="${px(cx - r)}" y="${px(cy - r)}" width="${px(2 * r)}" height="${px(2 * r)}"/>`;
    case "diamond":
      return `<path ${attrs} d="M ${px(cx)} ${px(cy - r)} L ${px(cx + r)} ${px(cy)} L ${px(cx)} ${px(cy + r)} L ${px(cx - r)} ${px(cy)} Z"/>`;
    case "triangle":
      return `<path ${attrs} d="M ${px(cx)} ${px(cy - r)} L ${px(cx + r)} ${px(cy + r)} L ${px(cx - r)} ${px(cy + r)} Z"/>`;
    default:
      return `<circle ${attrs} cx="${px(cx)}" cy="${px(cy)}" r="${px(r)}"/>`;
  }
}
