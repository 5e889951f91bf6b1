import * as fs from "fs";
import * as path from "path";
import { describe, expect, it } from "vitest";
import { readConvergence, readHolder, readLevels, readTails } from "../src/csv";

const FIX = path.join(__dirname, "fixtures");

function fixture(name: string): string {
  return fs.readFileSync(path.join(FIX, name), "utf8");
}

describe("readTails", () => {
  it("parses the real fixture", () => {
    const rows = readTails(fixture("tails.csv"));
    expect(rows).toHaveLength(12);
    expect(new Set(rows.map((r) => r.a))).toEqual(new Set([1, 2, 4]));
    for (const r of rows) {
      expect(r.bound).toBeGreaterThan(0);
      expect(r.bound).toBeLessThan(1);
      expect(r.frequency).toBeGreaterThanOrEqual(0);
    }
  });

  it("rejects a wrong header", () => {
    expect(() => readTails("a,M,freq,bound\n1,4,0,0.1\n")).toThrow(
      /does not match schema/
    );
  });

  it("rejects a short row", () => {
    expect(() => readTails("a,M,frequency,bound\n1,4,0\n")).toThrow(
      /row 2 has 3 cells/
    );
  });

  it("rejects a non-numeric cell", () => {
    expect(() => readTails("a,M,frequency,bound\n1,4,x,0.1\n")).toThrow(
      /not a finite number/
    );
  });

  it("rejects an empty file", () => {
    expect(() => readTails("")).toThrow(/empty file/);
  });
});

describe("readLevels", () => {
  it("parses the real fixture and dedupes to one U per path, a, k", () => {
    const rows = readLevels(fixture("levels.csv"));
    expect(rows.length).toBeGreaterThan(100);
    const seen = new Map<string, number>();
    for (const r of rows) {
      const key = `${r.path_id}|${r.a}|${r.k}`;
      if (seen.has(key)) {
        expect(r.U).toBe(seen.get(key));
      } else {
        seen.set(key, r.U);
      }
    }
    // 12 paths x 3 level bases x 5 level indices
    expect(seen.size).toBe(12 * 3 * 5);
  });

  it("turns empty sample cells into null", () => {
    const text =
      "path_id,a,k,U,X_star,qv,t,levelset\n" + "3,1.0,4,0.0,0.0,0.0,,\n";
    const rows = readLevels(text);
    expect(rows[0].t).toBeNull();
    expect(rows[0].levelset).toBeNull();
    expect(rows[0].U).toBe(0);
  });
});

describe("readHolder", () => {
  it("parses the real fixture", () => {
    const rows = readHolder(fixture("holder.csv"));
    expect(rows).toHaveLength(512);
    for (const r of rows) {
      expect(r.alpha_hat).toBeGreaterThan(0);
      expect(r.seminorm).toBeGreaterThan(0);
    }
  });
});

describe("readConvergence", () => {
  it("parses the real fixture", () => {
    const rows = readConvergence(fixture("convergence.csv"));
    expect(rows.map((r) => r.kind)).toContain("temporal");
    expect(rows.map((r) => r.kind)).toContain("spatial");
    expect(rows.map((r) => r.kind)).toContain("self");
    for (const r of rows) {
      expect(r.step).toBeGreaterThan(0);
      expect(r.error).toBeGreaterThan(0);
    }
  });

  it("keeps the kind column as text", () => {
    const rows = readConvergence("kind,step,error\ntemporal,0.1,0.01\n");
    expect(rows[0].kind).toBe("temporal");
  });
});
