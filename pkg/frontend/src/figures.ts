/**
 * The six figure types rendered from study output directories.
 *
 * Figures never recompute statistics: they draw exactly what the CSVs
 * contain.  Every caption embeds the manifest's experiment id and seed.
 */

import { existsSync, readFileSync } from "node:fs";
import { join } from "node:path";

import { readCsv, requireColumns, SchemaError } from "./csv.js";
import {
  errorBars,
  Frame,
  legend,
  makeFrame,
  markers,
  polyline,
  Scene,
} from "./plot.js";

export interface Manifest {
  experiment_id: string;
  seed: number;
}

export const FIGURE_NAMES = [
  "marginal",
  "covariance",
  "magnetization",
  "msd",
  "eg",
  "cluster",
] as const;

export type FigureName = (typeof FIGURE_NAMES)[number];

export class MissingInputError extends Error {}

export function readManifest(dir: string): Manifest {
  const path = join(dir, "manifest.json");
  if (!existsSync(path)) {
    throw new MissingInputError(`${dir}: no manifest.json; refusing to render`);
  }
  const m = JSON.parse(readFileSync(path, "utf8"));
  return { experiment_id: m.experiment_id ?? "unknown", seed: m.seed ?? -1 };
}

function captionFor(m: Manifest): string {
  return `run ${m.experiment_id}, seed ${m.seed}`;
}

function span(values: number[], padFrac = 0.06): [number, number] {
  const finite = values.filter(Number.isFinite);
  if (finite.length === 0) return [0, 1];
  let lo = Math.min(...finite);
  let hi = Math.max(...finite);
  if (!(hi > lo)) {
    hi = lo + 1;
  }
  const pad = (hi - lo) * padFrac;
  return [lo - pad, hi + pad];
}

const BLUE = "#1f6fb2";
const ORANGE = "#d9621f";
const GREEN = "#2d8a4a";
const PURPLE = "#7b4fa6";

/** Empirical single-time marginal with the stationary-density overlay. */
export function figureMarginal(dir: string, m: Manifest): Scene {
  const file = join(dir, "marginal.csv");
  const t = readCsv(file);
  const cols = requireColumns(file, t, [
    "x",
    "nu_density",
    "empirical_density",
    "ci_lo",
    "ci_hi",
  ]);
  const x = cols.get("x")!;
  const nu = cols.get("nu_density")!;
  const emp = cols.get("empirical_density")!;
  const frame = makeFrame({
    title: "Single-time marginal vs stationary density",
    caption: captionFor(m),
    xLabel: "x",
    yLabel: "density",
    xRange: span(x),
    yRange: span([...nu, ...emp, 0]),
  });
  polyline(frame, x, nu, ORANGE, 2);
  markers(frame, x, emp, BLUE, 2.5);
  const lo = cols.get("ci_lo")!;
  const hi = cols.get("ci_hi")!;
  for (let i = 0; i < x.length; i++) {
    frame.scene.items.push({
      kind: "polyline",
      points: [
        [frame.x(x[i]), frame.y(lo[i])],
        [frame.x(x[i]), frame.y(hi[i])],
      ],
      color: BLUE,
      width: 1,
    });
  }
  legend(frame, [
    { label: "stationary density", color: ORANGE },
    { label: "empirical", color: BLUE },
  ]);
  return frame.scene;
}

/** Covariance decay on log-log axes (nonpositive entries dropped). */
export function figureCovariance(dir: string, m: Manifest): Scene {
  const file = join(dir, "covariance.csv");
  const t = readCsv(file);
  const cols = requireColumns(file, t, ["lag", "cov", "stderr"]);
  const lag = cols.get("lag")!;
  const cov = cols.get("cov")!;
  const keep = lag
    .map((v, i) => i)
    .filter((i) => lag[i] > 0 && cov[i] > 0);
  if (keep.length === 0) {
    throw new MissingInputError(`${file}: no positive lag/cov rows to draw`);
  }
  const xs = keep.map((i) => lag[i]);
  const ys = keep.map((i) => cov[i]);
  const frame = makeFrame({
    title: "Covariance decay",
    caption: captionFor(m),
    xLabel: "lag t",
    yLabel: "cov",
    xLog: true,
    yLog: true,
    xRange: [Math.min(...xs), Math.max(...xs)],
    yRange: [Math.min(...ys), Math.max(...ys)],
  });
  polyline(frame, xs, ys, BLUE, 2);
  markers(frame, xs, ys, BLUE, 3);
  return frame.scene;
}

/** Boundary-pinned mean at the origin vs window size, per parameter row. */
export function figureMagnetization(dir: string, m: Manifest): Scene {
  const file = join(dir, "magnetization.csv");
  const t = readCsv(file);
  const cols = requireColumns(file, t, [
    "T",
    "b",
    "alpha",
    "beta",
    "mean",
    "stderr",
  ]);
  const T = cols.get("T")!;
  const b = cols.get("b")!;
  const alpha = cols.get("alpha")!;
  const mean = cols.get("mean")!;
  const err = cols.get("stderr")!;
  const frame = makeFrame({
    title: "Pinned-boundary mean vs window size",
    caption: captionFor(m),
    xLabel: "T",
    yLabel: "<X0>",
    xRange: span(T),
    yRange: span([...mean.map((v, i) => v + err[i]), ...mean.map((v, i) => v - err[i])]),
  });
  const palette = [BLUE, ORANGE, GREEN, PURPLE];
  const seriesKeys = Array.from(
    new Set(T.map((_, i) => `${alpha[i]}|${b[i]}`)),
  ).sort();
  const entries: { label: string; color: string }[] = [];
  seriesKeys.forEach((key, ki) => {
    const color = palette[ki % palette.length];
    const idx = T.map((_, i) => i).filter(
      (i) => `${alpha[i]}|${b[i]}` === key,
    );
    idx.sort((p, q) => T[p] - T[q]);
    const xs = idx.map((i) => T[i]);
    const ys = idx.map((i) => mean[i]);
    polyline(frame, xs, ys, color, 1.5);
    markers(frame, xs, ys, color, 3);
    errorBars(frame, xs, ys, idx.map((i) => err[i]), color);
    const [a, pin] = key.split("|");
    entries.push({ label: `alpha=${a} pin=${pin}`, color });
  });
  legend(frame, entries.slice(0, 6));
  return frame.scene;
}

/** Mean squared displacement with the fitted linear slope. */
export function figureMsd(dir: string, m: Manifest): Scene {
  const file = join(dir, "msd.csv");
  const t = readCsv(file);
  const cols = requireColumns(file, t, ["t", "msd", "stderr"]);
  const tt = cols.get("t")!;
  const msd = cols.get("msd")!;
  const err = cols.get("stderr")!;
  // fitted slope through the origin, weighted by the tabulated errors
  let sw = 0;
  let swxy = 0;
  for (let i = 0; i < tt.length; i++) {
    if (!Number.isFinite(msd[i]) || !(err[i] > 0)) continue;
    const w = 1 / (err[i] * err[i]);
    sw += w * tt[i] * tt[i];
    swxy += w * tt[i] * msd[i];
  }
  const slope = sw > 0 ? swxy / sw : 0;
  const frame = makeFrame({
    title: `Mean squared displacement (slope ${slope.toFixed(4)})`,
    caption: captionFor(m),
    xLabel: "t",
    yLabel: "E|X_t|^2",
    xRange: span([0, ...tt]),
    yRange: span([0, ...msd]),
  });
  polyline(frame, [0, Math.max(...tt)], [0, slope * Math.max(...tt)], ORANGE, 1.5, "6,4");
  markers(frame, tt, msd, BLUE, 2.5);
  errorBars(frame, tt, msd, err, BLUE);
  legend(frame, [
    { label: "measured", color: BLUE },
    { label: "fitted slope", color: ORANGE },
  ]);
  return frame.scene;
}

/** Ground-state energy curve from the thermodynamic-integration table. */
export function figureEg(dir: string, m: Manifest): Scene {
  const file = join(dir, "logz.csv");
  const t = readCsv(file);
  const cols = requireColumns(file, t, ["coupling", "logZ", "stderr", "T"]);
  const k = cols.get("coupling")!;
  const logz = cols.get("logZ")!;
  const err = cols.get("stderr")!;
  const T = cols.get("T")!;
  const eg = logz.map((v, i) => -v / (2 * T[i]));
  const egErr = err.map((v, i) => v / (2 * T[i]));
  const frame = makeFrame({
    title: "Ground-state energy vs coupling",
    caption: captionFor(m),
    xLabel: "coupling",
    yLabel: "E_g",
    xRange: span(k),
    yRange: span([...eg.map((v, i) => v - egErr[i]), ...eg.map((v, i) => v + egErr[i]), 0]),
  });
  const palette = [BLUE, ORANGE, GREEN, PURPLE];
  const Ts = Array.from(new Set(T)).sort((a, b) => a - b);
  const entries: { label: string; color: string }[] = [];
  Ts.forEach((tv, ti) => {
    const color = palette[ti % palette.length];
    const idx = k.map((_, i) => i).filter((i) => T[i] === tv);
    idx.sort((p, q) => k[p] - k[q]);
    polyline(frame, idx.map((i) => k[i]), idx.map((i) => eg[i]), color, 1.5);
    markers(frame, idx.map((i) => k[i]), idx.map((i) => eg[i]), color, 3);
    errorBars(frame, idx.map((i) => k[i]), idx.map((i) => eg[i]),
      idx.map((i) => egErr[i]), color);
    entries.push({ label: `T=${tv}`, color });
  });
  legend(frame, entries);
  return frame.scene;
}

/** Expansion partial sums against the directly enumerated value. */
export function figureCluster(dir: string, m: Manifest): Scene {
  const file = join(dir, "cluster.csv");
  const t = readCsv(file);
  const cols = requireColumns(file, t, [
    "order",
    "partial_sum",
    "direct_value",
    "lambda",
    "N",
    "n_positions",
  ]);
  const order = cols.get("order")!;
  const partial = cols.get("partial_sum")!;
  const direct = cols.get("direct_value")!;
  const lambda = cols.get("lambda")!;
  const N = cols.get("N")!;
  const dev = partial.map((v, i) =>
    Math.max(Math.abs(v / direct[i] - 1), 1e-17),
  );
  const frame = makeFrame({
    title: "Expansion value vs direct enumeration",
    caption: captionFor(m),
    xLabel: "interval count N",
    yLabel: "|relative deviation|",
    yLog: true,
    xRange: span(N, 0.15),
    yRange: [1e-17, Math.max(1e-8, ...dev)],
  });
  const pos = lambda.map((v) => v > 0);
  markers(frame, N.filter((_, i) => pos[i]), dev.filter((_, i) => pos[i]), BLUE, 3);
  markers(frame, N.filter((_, i) => !pos[i]), dev.filter((_, i) => !pos[i]), ORANGE, 3);
  polyline(frame, span(N, 0.15) as unknown as number[],
    [1e-9, 1e-9], GREEN, 1.5, "6,4");
  legend(frame, [
    { label: "lambda > 0", color: BLUE },
    { label: "lambda < 0", color: ORANGE },
    { label: "1e-9 gate", color: GREEN },
  ]);
  void order;
  return frame.scene;
}

export const BUILDERS: Record<FigureName, (dir: string, m: Manifest) => Scene> =
  {
    marginal: figureMarginal,
    covariance: figureCovariance,
    magnetization: figureMagnetization,
    msd: figureMsd,
    eg: figureEg,
    cluster: figureCluster,
  };

export interface RenderResult {
  name: FigureName;
  status: "written" | "skipped" | "error";
  detail: string;
}

export function inputFileFor(name: FigureName): string {
  return {
    marginal: "marginal.csv",
    covariance: "covariance.csv",
    magnetization: "magnetization.csv",
    msd: "msd.csv",
    eg: "logz.csv",
    cluster: "cluster.csv",
  }[name];
}

export { SchemaError };
