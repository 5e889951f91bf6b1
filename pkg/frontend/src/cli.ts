#!/usr/bin/env node
/**
 * spde-figs: render SVG figures from the tables a run directory holds.
 *
 *   spde-figs --in <dir> [--kind tail|levels|holder|convergence|all] [--out <dir>]
 *
 * Reads the CSVs the simulation package writes and emits fig_<kind>*.svg.
 * Exit codes: 0 rendered, 1 missing or malformed data, 2 bad usage.
 */

import * as fs from "fs";
import * as path from "path";
import { readConvergence, readHolder, readLevels, readTails } from "./csv";
import {
  Figure,
  convergenceFigure,
  holderFigures,
  levelsFigure,
  tailFigures,
} from "./figures";

export const KINDS = ["tail", "levels", "holder", "convergence"] as const;
export type Kind = (typeof KINDS)[number];

const SOURCE: Record<Kind, string> = {
  tail: "tails.csv",
  levels: "levels.csv",
  holder: "holder.csv",
  convergence: "convergence.csv",
};

class UsageError extends Error {}

export interface Rendered {
  file: string;
  svg: string;
}

/** Build every figure for one kind from the files in dir. */
export function renderKind(dir: string, kind: Kind): Rendered[] {
  const source = path.join(dir, SOURCE[kind]);
  if (!fs.existsSync(source)) {
    throw new Error(`${source}: no such file (run the report step first)`);
  }
  const text = fs.readFileSync(source, "utf8");
  let figs: Figure[];
  if (kind === "tail") figs = tailFigures(readTails(text, SOURCE[kind]));
  else if (kind === "levels") figs = levelsFigure(readLevels(text, SOURCE[kind]));
  else if (kind === "holder") figs = holderFigures(readHolder(text, SOURCE[kind]));
  else figs = convergenceFigure(readConvergence(text, SOURCE[kind]));
  return figs.map((f) => ({ file: `fig_${kind}${f.suffix}.svg`, svg: f.svg }));
}

interface Args {
  inDir: string;
  kinds: Kind[];
  outDir: string;
}

function parseArgs(argv: string[]): Args {
  let inDir = "";
  let outDir = "";
  let kindArg = "all";
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--in" || a === "--kind" || a === "--out") {
      const v = argv[i + 1];
      if (v === undefined) throw new UsageError(`${a} needs a value`);
      if (a === "--in") inDir = v;
      else if (a === "--kind") kindArg = v;
      else outDir = v;
      i++;
    } else if (a === "--help" || a === "-h") {
      throw new UsageError("");
    } else {
      throw new UsageError(`unknown argument ${a}`);
    }
  }
  if (!inDir) throw new UsageError("--in <dir> is required");
  const kinds =
    kindArg === "all" ? [...KINDS] : ([kindArg] as Kind[]);
  if (kindArg !== "all" && !KINDS.includes(kindArg as Kind)) {
    throw new UsageError(`--kind must be one of all, ${KINDS.join(", ")}`);
  }
  return { inDir, kinds, outDir: outDir || inDir };
}

const USAGE =
  "usage: spde-figs --in <dir> [--kind tail|levels|holder|convergence|all] [--out <dir>]";

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (e) {
    const msg = (e as Error).message;
    if (msg) console.error(`usage error: ${msg}`);
    console.error(USAGE);
    return 2;
  }
  try {
    const rendered: Rendered[] = [];
    for (const kind of args.kinds) {
      rendered.push(...renderKind(args.inDir, kind));
    }
    fs.mkdirSync(args.outDir, { recursive: true });
    for (const r of rendered) {
      const target = path.join(args.outDir, r.file);
      fs.writeFileSync(target, r.svg);
      console.log(`SVG → ${target}`);
    }
    return 0;
  } catch (e) {
    console.error(`error: ${(e as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
