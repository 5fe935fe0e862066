import { execFileSync } from "node:child_process";
import {
  cpSync,
  mkdtempSync,
  readFileSync,
  rmSync,
  writeFileSync,
} from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterEach, describe, expect, it } from "vitest";

import { parseCsv, requireColumns, SchemaError } from "../src/csv.js";
import {
  BUILDERS,
  FIGURE_NAMES,
  readManifest,
} from "../src/figures.js";
import { main, makeFigures } from "../src/main.js";
import { renderPng } from "../src/png.js";
import { renderSvg } from "../src/plot.js";

const GOLDEN = join(__dirname, "..", "fixtures", "golden");

const tmpDirs: string[] = [];
function tmp(): string {
  const d = mkdtempSync(join(tmpdir(), "figs-"));
  tmpDirs.push(d);
  return d;
}

afterEach(() => {
  while (tmpDirs.length) {
    rmSync(tmpDirs.pop()!, { recursive: true, force: true });
  }
});

describe("csv", () => {
  it("parses headers and rows", () => {
    const t = parseCsv("a,b\n1,2\n3,4\n");
    expect(t.columns).toEqual(["a", "b"]);
    expect(t.rows).toEqual([
      [1, 2],
      [3, 4],
    ]);
  });

  it("reports every missing column", () => {
    const t = parseCsv("a,b\n1,2\n");
    expect(() => requireColumns("f.csv", t, ["a", "c", "d"])).toThrowError(
      /f\.csv: missing columns c, d/,
    );
  });
});

describe("golden rendering", () => {
  const manifest = readManifest(GOLDEN);

  it("all six figure types render scenes with the caption", () => {
    for (const name of FIGURE_NAMES) {
      const scene = BUILDERS[name](GOLDEN, manifest);
      expect(scene.items.length).toBeGreaterThan(10);
      const texts = scene.items
        .filter((i) => i.kind === "text")
        .map((i) => (i as { text: string }).text);
      expect(
        texts.some((t) => t.includes("golden_composite") && t.includes("31")),
      ).toBe(true);
    }
  });

  it("svg output is deterministic byte for byte", () => {
    for (const name of FIGURE_NAMES) {
      const a = renderSvg(BUILDERS[name](GOLDEN, manifest));
      const b = renderSvg(BUILDERS[name](GOLDEN, manifest));
      expect(a).toBe(b);
      expect(a.startsWith("<svg ")).toBe(true);
    }
  });

  it("png output is deterministic and well-formed", () => {
    const scene = BUILDERS.marginal(GOLDEN, manifest);
    const a = renderPng(scene, "run golden_composite, seed 31");
    const b = renderPng(scene, "run golden_composite, seed 31");
    expect(a.equals(b)).toBe(true);
    expect([...a.subarray(0, 8)]).toEqual([137, 80, 78, 71, 13, 10, 26, 10]);
    expect(a.includes(Buffer.from("tEXt"))).toBe(true);
    expect(a.includes(Buffer.from("golden_composite"))).toBe(true);
  });
});

describe("make-figures batch behaviour", () => {
  it("writes every figure from the golden directory", () => {
    const out = tmp();
    const results = makeFigures({
      inDir: GOLDEN,
      outDir: out,
      format: "svg",
      only: null,
    });
    expect(results.filter((r) => r.status === "written")).toHaveLength(6);
    const svg = readFileSync(join(out, "marginal.svg"), "utf8");
    expect(svg).toContain("golden_composite");
  });

  it("skips an empty covariance.csv with a warning and renders the rest", () => {
    const dir = tmp();
    cpSync(GOLDEN, dir, { recursive: true });
    writeFileSync(join(dir, "covariance.csv"), "");
    const out = tmp();
    const results = makeFigures({
      inDir: dir,
      outDir: out,
      format: "svg",
      only: null,
    });
    const byName = new Map(results.map((r) => [r.name, r.status]));
    expect(byName.get("covariance")).toBe("skipped");
    expect(byName.get("marginal")).toBe("written");
  });

  it("schema violations give per-file errors and nonzero exit", () => {
    const dir = tmp();
    cpSync(GOLDEN, dir, { recursive: true });
    writeFileSync(join(dir, "msd.csv"), "time,value\n1,2\n");
    const out = tmp();
    const code = main(["--in", dir, "--out", out, "--format", "svg"]);
    expect(code).toBe(2);
  });

  it("refuses a directory without a manifest", () => {
    const dir = tmp();
    const out = tmp();
    const code = main(["--in", dir, "--out", out]);
    expect(code).toBe(1);
  });

  it("--only restricts figure selection and rejects unknown names", () => {
    const out = tmp();
    const results = makeFigures({
      inDir: GOLDEN,
      outDir: out,
      format: "svg",
      only: ["msd"],
    });
    expect(results).toHaveLength(1);
    expect(main(["--in", GOLDEN, "--out", out, "--only", "bogus"])).toBe(1);
  });

  it("antisymmetric pinned-boundary series plot carries both signs", () => {
    const scene = BUILDERS.magnetization(GOLDEN, readManifest(GOLDEN));
    const text = renderSvg(scene);
    expect(text).toContain("pin=1");
    expect(text).toContain("pin=-1");
  });

  it("cli renders png end to end", () => {
    const out = tmp();
    const code = main(["--in", GOLDEN, "--out", out, "--format", "png"]);
    expect(code).toBe(0);
    const png = readFileSync(join(out, "eg.png"));
    expect(png.length).toBeGreaterThan(1000);
  });
});

describe("schema error type", () => {
  it("lists the file and missing names", () => {
    const err = new SchemaError("x.csv", ["a"]);
    expect(err.file).toBe("x.csv");
    expect(err.missing).toEqual(["a"]);
  });
});

describe("built bundle", () => {
  it("dist entrypoint runs as a CLI", () => {
    const out = tmp();
    const stdout = execFileSync(
      process.execPath,
      [
        join(__dirname, "..", "dist", "main.js"),
        "--in",
        GOLDEN,
        "--out",
        out,
        "--only",
        "marginal",
      ],
      { encoding: "utf8" },
    );
    expect(stdout).toContain("[ok] marginal");
  });
});
