/**
 * make-figures --in DIR --out DIR --format svg|png --only LIST
 *
 * Renders every figure whose input CSV exists in the study directory;
 * empty or absent inputs are skipped with a warning, schema violations are
 * reported per file and the exit code is nonzero.
 */

import { existsSync, mkdirSync, statSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import {
  BUILDERS,
  FIGURE_NAMES,
  FigureName,
  inputFileFor,
  MissingInputError,
  readManifest,
  RenderResult,
  SchemaError,
} from "./figures.js";
import { renderPng } from "./png.js";
import { renderSvg } from "./plot.js";

interface Options {
  inDir: string;
  outDir: string;
  format: "svg" | "png";
  only: FigureName[] | null;
}

export function parseArgs(argv: string[]): Options {
  const opts: Options = {
    inDir: "",
    outDir: "",
    format: "svg",
    only: null,
  };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      i++;
      if (i >= argv.length) throw new Error(`missing value for ${a}`);
      return argv[i];
    };
    if (a === "--in") opts.inDir = next();
    else if (a === "--out") opts.outDir = next();
    else if (a === "--format") {
      const f = next();
      if (f !== "svg" && f !== "png") {
        throw new Error(`unknown format ${f}; use svg or png`);
      }
      opts.format = f;
    } else if (a === "--only") {
      const names = next().split(",").map((s) => s.trim()) as FigureName[];
      for (const n of names) {
        if (!FIGURE_NAMES.includes(n)) {
          throw new Error(
            `unknown figure ${n}; known: ${FIGURE_NAMES.join(", ")}`,
          );
        }
      }
      opts.only = names;
    } else {
      throw new Error(`unknown argument ${a}`);
    }
  }
  if (!opts.inDir || !opts.outDir) {
    throw new Error("usage: make-figures --in DIR --out DIR [--format svg|png] [--only LIST]");
  }
  return opts;
}

export function makeFigures(opts: Options): RenderResult[] {
  const manifest = readManifest(opts.inDir);
  mkdirSync(opts.outDir, { recursive: true });
  const targets = opts.only ?? [...FIGURE_NAMES];
  const results: RenderResult[] = [];
  for (const name of targets) {
    const input = join(opts.inDir, inputFileFor(name));
    if (!existsSync(input) || statSync(input).size === 0) {
      results.push({
        name,
        status: "skipped",
        detail: `${inputFileFor(name)} absent or empty`,
      });
      continue;
    }
    try {
      const scene = BUILDERS[name](opts.inDir, manifest);
      const outPath = join(opts.outDir, `${name}.${opts.format}`);
      if (opts.format === "svg") {
        writeFileSync(outPath, renderSvg(scene));
      } else {
        writeFileSync(
          outPath,
          renderPng(scene, `run ${manifest.experiment_id}, seed ${manifest.seed}`),
        );
      }
      results.push({ name, status: "written", detail: outPath });
    } catch (err) {
      if (err instanceof SchemaError || err instanceof MissingInputError) {
        results.push({ name, status: "error", detail: String(err.message) });
      } else {
        throw err;
      }
    }
  }
  return results;
}

export function main(argv: string[]): number {
  let opts: Options;
  try {
    opts = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
  let results: RenderResult[];
  try {
    results = makeFigures(opts);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
  let failed = 0;
  for (const r of results) {
    const tag = r.status === "written" ? "ok" : r.status;
    if (r.status === "error") {
      failed += 1;
      console.error(`[${tag}] ${r.name}: ${r.detail}`);
    } else {
      console.log(`[${tag}] ${r.name}: ${r.detail}`);
    }
  }
  return failed > 0 ? 2 : 0;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
