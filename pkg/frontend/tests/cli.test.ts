import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { main, renderKind } from "../src/cli";

const FIX = path.join(__dirname, "fixtures");

let tmp: string;

beforeEach(() => {
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), "figs-"));
  vi.spyOn(console, "log").mockImplementation(() => {});
  vi.spyOn(console, "error").mockImplementation(() => {});
});

afterEach(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
  vi.restoreAllMocks();
});

describe("main", () => {
  it("renders all seven files for --kind all", () => {
    const rc = main(["--in", FIX, "--out", tmp]);
    expect(rc).toBe(0);
    expect(fs.readdirSync(tmp).sort()).toEqual([
      "fig_convergence.svg",
      "fig_holder_fit.svg",
      "fig_holder_hist.svg",
      "fig_levels.svg",
      "fig_tail_a1.svg",
      "fig_tail_a2.svg",
      "fig_tail_a4.svg",
    ]);
  });

  it("routes a single kind to its own files", () => {
    const rc = main(["--in", FIX, "--kind", "holder", "--out", tmp]);
    expect(rc).toBe(0);
    expect(fs.readdirSync(tmp).sort()).toEqual([
      "fig_holder_fit.svg",
      "fig_holder_hist.svg",
    ]);
  });

  it("writes identical bytes on a second run", () => {
    const other = fs.mkdtempSync(path.join(os.tmpdir(), "figs-"));
    try {
      expect(main(["--in", FIX, "--out", tmp])).toBe(0);
      expect(main(["--in", FIX, "--out", other])).toBe(0);
      for (const name of fs.readdirSync(tmp)) {
        const a = fs.readFileSync(path.join(tmp, name), "utf8");
        const b = fs.readFileSync(path.join(other, name), "utf8");
        expect(a).toBe(b);
      }
    } finally {
      fs.rmSync(other, { recursive: true, force: true });
    }
  });

  it("fails with 1 when an input table is missing", () => {
    const rc = main(["--in", tmp, "--out", tmp]);
    expect(rc).toBe(1);
    expect(
      (console.error as ReturnType<typeof vi.fn>).mock.calls.some((c) =>
        String(c[0]).includes("no such file")
      )
    ).toBe(true);
  });

  it("fails with 2 on a bad kind", () => {
    expect(main(["--in", FIX, "--kind", "pie", "--out", tmp])).toBe(2);
  });

  it("fails with 2 without --in", () => {
    expect(main(["--kind", "tail"])).toBe(2);
  });

  it("fails with 2 on an unknown flag", () => {
    expect(main(["--in", FIX, "--frobnicate"])).toBe(2);
  });
});

describe("renderKind", () => {
  it("names tail files by level base", () => {
    const rendered = renderKind(FIX, "tail");
    expect(rendered.map((r) => r.file)).toEqual([
      "fig_tail_a1.svg",
      "fig_tail_a2.svg",
      "fig_tail_a4.svg",
    ]);
  });

  it("raises a readable error for a missing table", () => {
    expect(() => renderKind(tmp, "levels")).toThrow(/no such file/);
  });
});
