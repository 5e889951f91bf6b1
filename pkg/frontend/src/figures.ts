/**
 * The four figure kinds, each a pure function from table rows to SVG text.
 *
 * tail         one file per level base a: ln(frequency) against the
 *              stretched level x = -ln(bound), with the bound line of
 *              slope -1 overlaid
 * levels       ensemble median level energy vs level index, log scale,
 *              with the interquartile band, one series per a
 * holder       two files: histogram of fitted exponents, and exponent
 *              vs log seminorm with a least-squares line
 * convergence  log-log error vs step per benchmark kind with fitted
 *              order lines
 */

import { ConvergenceRow, HolderRow, LevelRow, TailRow } from "./csv";
import {
  axes,
  band,
  closeChart,
  dots,
  label,
  legend,
  makeFrame,
  niceTicks,
  note,
  openChart,
  polyline,
  px,
} from "./svg";

export interface Figure {
  suffix: string;
  svg: string;
}

const COLORS = ["#4361ee", "#2d6a4f", "#e63946", "#9d4edd", "#f77f00"];

function uniqueSorted(values: number[]): number[] {
  return [...new Set(values)].sort((a, b) => a - b);
}

function compact(v: number): string {
  return Number.isInteger(v) ? String(v) : String(v);
}

/** Linear-interpolation quantile of an unsorted sample. */
export function quantile(sample: number[], q: number): number {
  const s = [...sample].sort((a, b) => a - b);
  if (s.length === 0) throw new Error("quantile of an empty sample");
  const pos = (s.length - 1) * q;
  const lo = Math.floor(pos);
  const hi = Math.ceil(pos);
  return s[lo] + (s[hi] - s[lo]) * (pos - lo);
}

/** Least-squares slope and intercept of y against x. */
export function fitLine(xs: number[], ys: number[]): { slope: number; intercept: number } {
  const n = xs.length;
  if (n < 2) throw new Error("need at least two points to fit a line");
  const mx = xs.reduce((a, b) => a + b, 0) / n;
  const my = ys.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (xs[i] - mx) ** 2;
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx === 0) throw new Error("degenerate horizontal spread in line fit");
  const slope = sxy / sxx;
  return { slope, intercept: my - slope * mx };
}

// --------------------------------------------------------------- tail

export function tailFigures(rows: TailRow[]): Figure[] {
  if (rows.length === 0) throw new Error("tails.csv holds no rows");
  const out: Figure[] = [];
  for (const a of uniqueSorted(rows.map((r) => r.a))) {
    const mine = rows.filter((r) => r.a === a).sort((p, q) => p.M - q.M);
    // the bound column is e^(-M^delta), so -ln(bound) recovers the
    // stretched level and the bound line has slope exactly -1
    const xs = mine.map((r) => -Math.log(r.bound));
    const pts: Array<[number, number]> = [];
    for (let i = 0; i < mine.length; i++) {
      if (mine[i].frequency > 0) pts.push([xs[i], Math.log(mine[i].frequency)]);
    }
    const xMax = Math.max(...xs) * 1.08;
    const yLow = Math.min(-xMax, ...pts.map(([, y]) => y)) - 0.5;
    const frame = makeFrame(0, xMax, yLow, 0.2);
    let s = openChart(
      `Joint exceedance tail, level a = ${compact(a)}`,
      `${pts.length} of ${mine.length} frequencies positive; bound line ln p = -x`
    );
    s += axes(
      frame,
      niceTicks(0, xMax),
      niceTicks(yLow, 0.2),
      "stretched margin  x = -ln bound",
      "ln frequency"
    );
    s += polyline(
      [
        [0, 0],
        [xMax, -xMax],
      ],
      frame,
      "#2d6a4f",
      1.5,
      "6,3"
    );
    s += dots(pts, frame, "#4361ee");
    s += legend(
      [
        ["#4361ee", "empirical joint frequency"],
        ["#2d6a4f", "stretched-exponential bound"],
      ],
      frame
    );
    if (pts.length === 0) {
      s += note("all empirical frequencies are zero: bound only", frame);
    }
    s += closeChart();
    out.push({ suffix: `_a${compact(a)}`, svg: s });
  }
  return out;
}

// ------------------------------------------------------------- levels

export function levelsFigure(rows: LevelRow[]): Figure[] {
  if (rows.length === 0) throw new Error("levels.csv holds no rows");
  // rows repeat one U per level-set sample; collapse to one U per
  // (path, a, k) before taking ensemble statistics
  const energy = new Map<string, number>();
  for (const r of rows) {
    energy.set(`${r.path_id}|${r.a}|${r.k}`, r.U);
  }
  const as = uniqueSorted(rows.map((r) => r.a));
  const ks = uniqueSorted(rows.map((r) => r.k));
  const byLevel = new Map<string, number[]>();
  for (const [key, U] of energy) {
    const [, a, k] = key.split("|");
    const lk = `${a}|${k}`;
    if (!byLevel.has(lk)) byLevel.set(lk, []);
    byLevel.get(lk)!.push(U);
  }
  const positives = [...energy.values()].filter((u) => u > 0);
  const allZero = positives.length === 0;
  const floor = allZero ? 0 : Math.floor(Math.log10(Math.min(...positives))) - 1;
  const toY = (u: number) => (allZero ? 0 : u > 0 ? Math.log10(u) : floor);

  let yTop: number;
  let yBot: number;
  if (allZero) {
    yBot = -0.05;
    yTop = 1;
  } else {
    yTop = Math.ceil(Math.log10(Math.max(...positives))) + 0.5;
    yBot = floor - 0.5;
  }
  const frame = makeFrame(Math.min(...ks), Math.max(...ks) || 1, yBot, yTop);
  const nPaths = new Set(rows.map((r) => r.path_id)).size;
  let s = openChart(
    "Level energy cascade",
    `${nPaths} paths; median with interquartile band per level base`
  );
  const yTicks = allZero
    ? [0, 0.5, 1]
    : niceTicks(Math.ceil(yBot), Math.floor(yTop), 6).filter(Number.isInteger);
  s += axes(
    frame,
    ks,
    yTicks,
    "level index k",
    allZero ? "level energy" : "level energy (powers of ten)",
    (v) => String(v),
    allZero ? label : (v) => `1e${v}`
  );
  const entries: Array<[string, string]> = [];
  as.forEach((a, i) => {
    const color = COLORS[i % COLORS.length];
    const med: Array<[number, number]> = [];
    const q25: Array<[number, number]> = [];
    const q75: Array<[number, number]> = [];
    for (const k of ks) {
      const us = byLevel.get(`${a}|${k}`) ?? [];
      if (us.length === 0) continue;
      med.push([k, toY(quantile(us, 0.5))]);
      q25.push([k, toY(quantile(us, 0.25))]);
      q75.push([k, toY(quantile(us, 0.75))]);
    }
    s += band(q75, q25, frame, color);
    s += polyline(med, frame, color, 2);
    s += dots(med, frame, color, 2.5);
    entries.push([color, `a = ${compact(a)}`]);
  });
  s += legend(entries, frame);
  if (allZero) s += note("all level energies are zero", frame);
  s += closeChart();
  return [{ suffix: "", svg: s }];
}

// ------------------------------------------------------------- holder

export function holderFigures(rows: HolderRow[]): Figure[] {
  const out: Figure[] = [];

  let hist = openChart(
    "Fitted regularity exponents",
    `${rows.length} nondegenerate paths; bin width 0.05`
  );
  if (rows.length === 0) {
    const frame = makeFrame(0, 1, 0, 1);
    hist += axes(frame, niceTicks(0, 1), niceTicks(0, 1), "fitted exponent", "paths");
    hist += note("no nondegenerate paths to plot", frame);
  } else {
    const alphas = rows.map((r) => r.alpha_hat);
    const binW = 0.05;
    const lo = Math.floor(Math.min(...alphas) / binW) * binW;
    const hi = Math.ceil(Math.max(...alphas) / binW + 1e-9) * binW;
    const nBins = Math.max(1, Math.round((hi - lo) / binW));
    const counts = new Array<number>(nBins).fill(0);
    for (const v of alphas) {
      const j = Math.min(nBins - 1, Math.floor((v - lo) / binW));
      counts[j] += 1;
    }
    const frame = makeFrame(lo, hi, 0, Math.max(...counts) * 1.12);
    hist += axes(
      frame,
      niceTicks(lo, hi),
      niceTicks(0, Math.max(...counts) * 1.12).filter(Number.isInteger),
      "fitted exponent",
      "paths"
    );
    counts.forEach((c, j) => {
      if (c === 0) return;
      const x0 = frame.x(lo + j * binW);
      const x1 = frame.x(lo + (j + 1) * binW);
      const yTop = frame.y(c);
      hist += `<rect x="${px(x0 + 0.5)}" y="${px(yTop)}" width="${px(x1 - x0 - 1)}" height="${px(frame.y(0) - yTop)}" fill="#4361ee" opacity="0.8"/>\n`;
    });
    const med = quantile(alphas, 0.5);
    hist += polyline(
      [
        [med, 0],
        [med, Math.max(...counts) * 1.12],
      ],
      frame,
      "#e63946",
      1.5,
      "5,3"
    );
    hist += `<text x="${px(frame.x(med) + 4)}" y="${px(frame.plotTop + 12)}" font-size="10" fill="#e63946">median ${label(med)}</text>\n`;
  }
  hist += closeChart();
  out.push({ suffix: "_hist", svg: hist });

  let fit = openChart(
    "Exponent against seminorm",
    `${rows.length} nondegenerate paths, least-squares line`
  );
  if (rows.length === 0) {
    const frame = makeFrame(0, 1, 0, 1);
    fit += axes(frame, niceTicks(0, 1), niceTicks(0, 1), "fitted exponent", "log10 seminorm");
    fit += note("no nondegenerate paths to plot", frame);
  } else {
    const pts: Array<[number, number]> = rows
      .filter((r) => r.seminorm > 0)
      .map((r) => [r.alpha_hat, Math.log10(r.seminorm)]);
    const xsAll = rows.map((r) => r.alpha_hat);
    const x0 = Math.min(...xsAll) - 0.02;
    const x1 = Math.max(...xsAll) + 0.02;
    const ys = pts.map(([, y]) => y);
    const y0 = ys.length ? Math.min(...ys) - 0.3 : -1;
    const y1 = ys.length ? Math.max(...ys) + 0.3 : 1;
    const frame = makeFrame(x0, x1, y0, y1);
    fit += axes(frame, niceTicks(x0, x1), niceTicks(y0, y1), "fitted exponent", "log10 seminorm");
    fit += dots(pts, frame, "#4361ee");
    if (pts.length >= 2 && new Set(pts.map(([x]) => x)).size >= 2) {
      const { slope, intercept } = fitLine(pts.map(([x]) => x), ys);
      fit += polyline(
        [
          [x0, slope * x0 + intercept],
          [x1, slope * x1 + intercept],
        ],
        frame,
        "#e63946",
        1.5,
        "5,3"
      );
      fit += legend([["#e63946", `least squares slope ${label(slope)}`]], frame);
    }
  }
  fit += closeChart();
  out.push({ suffix: "_fit", svg: fit });
  return out;
}

// -------------------------------------------------------- convergence

export function convergenceFigure(rows: ConvergenceRow[]): Figure[] {
  if (rows.length === 0) throw new Error("convergence.csv holds no rows");
  for (const r of rows) {
    if (r.step <= 0 || r.error <= 0) {
      throw new Error(`convergence.csv: nonpositive step or error for kind ${r.kind}`);
    }
  }
  const kinds = [...new Set(rows.map((r) => r.kind))];
  const xs = rows.map((r) => Math.log10(r.step));
  const ys = rows.map((r) => Math.log10(r.error));
  const frame = makeFrame(
    Math.min(...xs) - 0.15,
    Math.max(...xs) + 0.15,
    Math.min(...ys) - 0.3,
    Math.max(...ys) + 0.3
  );
  let s = openChart("Solver error scaling", `${rows.length} benchmark rows, log-log`);
  s += axes(
    frame,
    niceTicks(frame.x0, frame.x1),
    niceTicks(frame.y0, frame.y1),
    "log10 step",
    "log10 error"
  );
  const entries: Array<[string, string]> = [];
  kinds.forEach((kind, i) => {
    const color = COLORS[i % COLORS.length];
    const mine = rows.filter((r) => r.kind === kind).sort((p, q) => p.step - q.step);
    const pts: Array<[number, number]> = mine.map((r) => [
      Math.log10(r.step),
      Math.log10(r.error),
    ]);
    s += dots(pts, frame, color);
    if (pts.length >= 2) {
      const { slope, intercept } = fitLine(pts.map(([x]) => x), pts.map(([, y]) => y));
      const lx0 = pts[0][0] - 0.08;
      const lx1 = pts[pts.length - 1][0] + 0.08;
      s += polyline(
        [
          [lx0, slope * lx0 + intercept],
          [lx1, slope * lx1 + intercept],
        ],
        frame,
        color,
        1.2
      );
      entries.push([color, `${kind}: fitted order ${label(slope)}`]);
    } else {
      entries.push([color, `${kind}: single point`]);
    }
  });
  s += legend(entries, frame);
  s += closeChart();
  return [{ suffix: "", svg: s }];
}

export function figureTitleOf(svg: string): string {
  const m = svg.match(/font-weight="600" fill="#222222">([^<]*)</);
  return m ? m[1] : "";
}
