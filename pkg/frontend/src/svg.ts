/**
 * Minimal deterministic SVG chart scaffold.
 *
 * Everything renders through fixed-precision string building: no dates,
 * no randomness, no environment lookups, so the same inputs always give
 * the same bytes.
 */

export const WIDTH = 760;
export const HEIGHT = 420;
const MARGIN = { left: 64, right: 24, top: 46, bottom: 52 };

export interface Frame {
  x: (v: number) => number;
  y: (v: number) => number;
  x0: number;
  x1: number;
  y0: number;
  y1: number;
  plotLeft: number;
  plotRight: number;
  plotTop: number;
  plotBottom: number;
}

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

/** Pixel coordinate with fixed precision. */
export function px(v: number): string {
  return v.toFixed(2);
}

/** Compact deterministic tick label. */
export function label(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1).replace("e+", "e");
  const s = v.toPrecision(4);
  return s.includes(".") ? s.replace(/\.?0+$/, "") : s;
}

export function niceTicks(min: number, max: number, count = 5): number[] {
  const range = max - min || 1;
  const rough = range / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((n) => n >= rough) ?? rough;
  const ticks: number[] = [];
  for (let v = Math.ceil(min / step) * step; v <= max + step * 1e-9; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

export function makeFrame(x0: number, x1: number, y0: number, y1: number): Frame {
  const plotLeft = MARGIN.left;
  const plotRight = WIDTH - MARGIN.right;
  const plotTop = MARGIN.top;
  const plotBottom = HEIGHT - MARGIN.bottom;
  const sx = (plotRight - plotLeft) / (x1 - x0 || 1);
  const sy = (plotBottom - plotTop) / (y1 - y0 || 1);
  return {
    x: (v) => plotLeft + (v - x0) * sx,
    y: (v) => plotBottom - (v - y0) * sy,
    x0, x1, y0, y1,
    plotLeft, plotRight, plotTop, plotBottom,
  };
}

export function openChart(title: string, subtitle: string): string {
  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica, Arial, sans-serif">\n`;
  s += `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>\n`;
  s += `<text x="${MARGIN.left}" y="22" font-size="14" font-weight="600" fill="#222222">${esc(title)}</text>\n`;
  s += `<text x="${MARGIN.left}" y="37" font-size="10" fill="#888888">${esc(subtitle)}</text>\n`;
  return s;
}

export function axes(
  frame: Frame,
  xTicks: number[],
  yTicks: number[],
  xLabel: string,
  yLabel: string,
  fmtX: (v: number) => string = label,
  fmtY: (v: number) => string = label
): string {
  let s = "";
  for (const v of yTicks) {
    const y = frame.y(v);
    s += `<line x1="${px(frame.plotLeft)}" y1="${px(y)}" x2="${px(frame.plotRight)}" y2="${px(y)}" stroke="#eeeeee" stroke-width="1"/>\n`;
    s += `<text x="${px(frame.plotLeft - 6)}" y="${px(y + 3)}" font-size="10" text-anchor="end" fill="#555555">${esc(fmtY(v))}</text>\n`;
  }
  for (const v of xTicks) {
    const x = frame.x(v);
    s += `<line x1="${px(x)}" y1="${px(frame.plotBottom)}" x2="${px(x)}" y2="${px(frame.plotBottom + 4)}" stroke="#999999" stroke-width="1"/>\n`;
    s += `<text x="${px(x)}" y="${px(frame.plotBottom + 16)}" font-size="10" text-anchor="middle" fill="#555555">${esc(fmtX(v))}</text>\n`;
  }
  s += `<rect x="${px(frame.plotLeft)}" y="${px(frame.plotTop)}" width="${px(frame.plotRight - frame.plotLeft)}" height="${px(frame.plotBottom - frame.plotTop)}" fill="none" stroke="#999999" stroke-width="1"/>\n`;
  s += `<text x="${px((frame.plotLeft + frame.plotRight) / 2)}" y="${HEIGHT - 14}" font-size="11" text-anchor="middle" fill="#333333">${esc(xLabel)}</text>\n`;
  s += `<text transform="translate(16 ${px((frame.plotTop + frame.plotBottom) / 2)}) rotate(-90)" font-size="11" text-anchor="middle" fill="#333333">${esc(yLabel)}</text>\n`;
  return s;
}

export function polyline(
  pts: Array<[number, number]>,
  frame: Frame,
  color: string,
  width = 1.5,
  dash = ""
): string {
  if (pts.length === 0) return "";
  const d = pts.map(([x, y]) => `${px(frame.x(x))},${px(frame.y(y))}`).join(" ");
  const dashAttr = dash ? ` stroke-dasharray="${dash}"` : "";
  return `<polyline points="${d}" fill="none" stroke="${color}" stroke-width="${width}"${dashAttr}/>\n`;
}

export function band(
  upper: Array<[number, number]>,
  lower: Array<[number, number]>,
  frame: Frame,
  color: string
): string {
  if (upper.length === 0) return "";
  const fwd = upper.map(([x, y]) => `${px(frame.x(x))},${px(frame.y(y))}`);
  const back = [...lower].reverse().map(([x, y]) => `${px(frame.x(x))},${px(frame.y(y))}`);
  return `<polygon points="${[...fwd, ...back].join(" ")}" fill="${color}" opacity="0.15" stroke="none"/>\n`;
}

export function dots(
  pts: Array<[number, number]>,
  frame: Frame,
  color: string,
  r = 3
): string {
  return pts
    .map(([x, y]) => `<circle cx="${px(frame.x(x))}" cy="${px(frame.y(y))}" r="${r}" fill="${color}"/>\n`)
    .join("");
}

export function legend(entries: Array<[string, string]>, frame: Frame): string {
  let s = "";
  let y = frame.plotTop + 14;
  for (const [color, text] of entries) {
    const x = frame.plotLeft + 10;
    s += `<line x1="${px(x)}" y1="${px(y - 3)}" x2="${px(x + 18)}" y2="${px(y - 3)}" stroke="${color}" stroke-width="2"/>\n`;
    s += `<text x="${px(x + 24)}" y="${px(y)}" font-size="10" fill="#333333">${esc(text)}</text>\n`;
    y += 14;
  }
  return s;
}

export function note(text: string, frame: Frame): string {
  const x = (frame.plotLeft + frame.plotRight) / 2;
  const y = (frame.plotTop + frame.plotBottom) / 2;
  return `<text x="${px(x)}" y="${px(y)}" font-size="12" text-anchor="middle" fill="#888888">${esc(text)}</text>\n`;
}

export function closeChart(): string {
  return "</svg>\n";
}
