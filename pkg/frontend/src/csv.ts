/**
 * Strict readers for the run-directory tables.
 *
 * Every reader checks the header against the expected schema and refuses
 * rows of the wrong width, so a mismatched or truncated file fails loudly
 * instead of plotting garbage.
 */

export interface TailRow {
  a: number;
  M: number;
  frequency: number;
  bound: number;
}

export interface LevelRow {
  path_id: number;
  a: number;
  k: number;
  U: number;
  X_star: number;
  qv: number;
  t: number | null;
  levelset: number | null;
}

export interface HolderRow {
  path_id: number;
  alpha_hat: number;
  seminorm: number;
}

export interface ConvergenceRow {
  kind: string;
  step: number;
  error: number;
}

function splitLines(text: string): string[] {
  const lines = text.split("\n");
  if (lines.length > 0 && lines[lines.length - 1] === "") lines.pop();
  return lines;
}

function parseTable(text: string, expected: string[], file: string): string[][] {
  const lines = splitLines(text);
  if (lines.length === 0) {
    throw new Error(`${file}: empty file`);
  }
  const header = lines[0].split(",");
  if (header.length !== expected.length || expected.some((h, i) => header[i] !== h)) {
    throw new Error(
      `${file}: header [${header.join(",")}] does not match schema [${expected.join(",")}]`
    );
  }
  return lines.slice(1).map((line, i) => {
    const cells = line.split(",");
    if (cells.length !== expected.length) {
      throw new Error(`${file}: row ${i + 2} has ${cells.length} cells, expected ${expected.length}`);
    }
    return cells;
  });
}

function num(cell: string, file: string, col: string): number {
  const v = Number(cell);
  if (cell === "" || !Number.isFinite(v)) {
    throw new Error(`${file}: column ${col} holds ${JSON.stringify(cell)}, not a finite number`);
  }
  return v;
}

function optNum(cell: string, file: string, col: string): number | null {
  return cell === "" ? null : num(cell, file, col);
}

export function readTails(text: string, file = "tails.csv"): TailRow[] {
  return parseTable(text, ["a", "M", "frequency", "bound"], file).map((c) => ({
    a: num(c[0], file, "a"),
    M: num(c[1], file, "M"),
    frequency: num(c[2], file, "frequency"),
    bound: num(c[3], file, "bound"),
  }));
}

export function readLevels(text: string, file = "levels.csv"): LevelRow[] {
  const cols = ["path_id", "a", "k", "U", "X_star", "qv", "t", "levelset"];
  return parseTable(text, cols, file).map((c) => ({
    path_id: num(c[0], file, "path_id"),
    a: num(c[1], file, "a"),
    k: num(c[2], file, "k"),
    U: num(c[3], file, "U"),
    X_star: num(c[4], file, "X_star"),
    qv: num(c[5], file, "qv"),
    t: optNum(c[6], file, "t"),
    levelset: optNum(c[7], file, "levelset"),
  }));
}

export function readHolder(text: string, file = "holder.csv"): HolderRow[] {
  return parseTable(text, ["path_id", "alpha_hat", "seminorm"], file).map((c) => ({
    path_id: num(c[0], file, "path_id"),
    alpha_hat: num(c[1], file, "alpha_hat"),
    seminorm: num(c[2], file, "seminorm"),
  }));
}

export function readConvergence(text: string, file = "convergence.csv"): ConvergenceRow[] {
  return parseTable(text, ["kind", "step", "error"], file).map((c) => ({
    kind: c[0],
    step: num(c[1], file, "step"),
    error: num(c[2], file, "error"),
  }));
}
