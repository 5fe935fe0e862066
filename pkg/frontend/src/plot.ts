/**
 * Deterministic plotting primitives.
 *
 * A Scene is a resolution-independent list of primitives in pixel space;
 * it renders to SVG text (vector, exact) or to PNG bytes through the
 * rasterizer.  No randomness, no timestamps: identical scenes yield
 * identical bytes.
 */

export interface LineSeg {
  kind: "polyline";
  points: [number, number][];
  color: string;
  width: number;
  dash?: string;
}

export interface Marker {
  kind: "marker";
  x: number;
  y: number;
  r: number;
  color: string;
}

export interface TextItem {
  kind: "text";
  x: number;
  y: number;
  text: string;
  color: string;
  size: number;
  anchor: "start" | "middle" | "end";
}

export interface RectItem {
  kind: "rect";
  x: number;
  y: number;
  w: number;
  h: number;
  color: string;
}

export type Primitive = LineSeg | Marker | TextItem | RectItem;

export interface Scene {
  width: number;
  height: number;
  items: Primitive[];
}

export interface Scale {
  (v: number): number;
  ticks: number[];
  label: (v: number) => string;
}

const FMT = (v: number): string => {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 0.01 && a < 10000) {
    return String(Number(v.toPrecision(4)));
  }
  return v.toExponential(1).replace("e+", "e");
};

export function linearScale(
  lo: number,
  hi: number,
  pixLo: number,
  pixHi: number,
): Scale {
  if (!(hi > lo)) {
    hi = lo + 1;
  }
  const f = ((v: number) =>
    pixLo + ((v - lo) / (hi - lo)) * (pixHi - pixLo)) as Scale;
  f.ticks = niceTicks(lo, hi, 6);
  f.label = FMT;
  return f;
}

export function logScale(
  lo: number,
  hi: number,
  pixLo: number,
  pixHi: number,
): Scale {
  const llo = Math.log10(Math.max(lo, 1e-300));
  const lhi = Math.log10(Math.max(hi, lo * 10));
  const f = ((v: number) =>
    pixLo +
    ((Math.log10(Math.max(v, 1e-300)) - llo) / (lhi - llo)) *
      (pixHi - pixLo)) as Scale;
  const ticks: number[] = [];
  for (let e = Math.ceil(llo); e <= Math.floor(lhi); e++) {
    ticks.push(Math.pow(10, e));
  }
  f.ticks = ticks.length >= 2 ? ticks : [Math.pow(10, llo), Math.pow(10, lhi)];
  f.label = (v) => {
    const e = Math.log10(v);
    return Number.isInteger(e) ? `1e${e}` : FMT(v);
  };
  return f;
}

function niceTicks(lo: number, hi: number, n: number): number[] {
  const span = hi - lo;
  const raw = span / n;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const steps = [1, 2, 2.5, 5, 10];
  let step = steps[steps.length - 1] * mag;
  for (const s of steps) {
    if (raw <= s * mag) {
      step = s * mag;
      break;
    }
  }
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-12 * span; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}

export interface Frame {
  scene: Scene;
  x: Scale;
  y: Scale;
  plot: { x0: number; x1: number; y0: number; y1: number };
}

export interface FrameOptions {
  width?: number;
  height?: number;
  title: string;
  caption: string;
  xLabel: string;
  yLabel: string;
  xLog?: boolean;
  yLog?: boolean;
  xRange: [number, number];
  yRange: [number, number];
}

const AXIS = "#333333";
const GRID = "#dddddd";

/** Axes, ticks, labels, title, caption; returns scales mapping data to px. */
export function makeFrame(o: FrameOptions): Frame {
  const width = o.width ?? 640;
  const height = o.height ?? 440;
  const plot = { x0: 70, x1: width - 20, y0: height - 70, y1: 40 };
  const x = (o.xLog ? logScale : linearScale)(
    o.xRange[0],
    o.xRange[1],
    plot.x0,
    plot.x1,
  );
  const y = (o.yLog ? logScale : linearScale)(
    o.yRange[0],
    o.yRange[1],
    plot.y0,
    plot.y1,
  );
  const items: Primitive[] = [];
  for (const t of x.ticks) {
    const px = x(t);
    items.push({
      kind: "polyline",
      points: [
        [px, plot.y0],
        [px, plot.y1],
      ],
      color: GRID,
      width: 1,
    });
    items.push({
      kind: "polyline",
      points: [
        [px, plot.y0],
        [px, plot.y0 + 5],
      ],
      color: AXIS,
      width: 1,
    });
    items.push({
      kind: "text",
      x: px,
      y: plot.y0 + 18,
      text: x.label(t),
      color: AXIS,
      size: 11,
      anchor: "middle",
    });
  }
  for (const t of y.ticks) {
    const py = y(t);
    items.push({
      kind: "polyline",
      points: [
        [plot.x0, py],
        [plot.x1, py],
      ],
      color: GRID,
      width: 1,
    });
    items.push({
      kind: "text",
      x: plot.x0 - 8,
      y: py + 4,
      text: y.label(t),
      color: AXIS,
      size: 11,
      anchor: "end",
    });
  }
  items.push({
    kind: "polyline",
    points: [
      [plot.x0, plot.y1],
      [plot.x0, plot.y0],
      [plot.x1, plot.y0],
    ],
    color: AXIS,
    width: 1.5,
  });
  items.push({
    kind: "text",
    x: (plot.x0 + plot.x1) / 2,
    y: 22,
    text: o.title,
    color: "#000000",
    size: 14,
    anchor: "middle",
  });
  items.push({
    kind: "text",
    x: (plot.x0 + plot.x1) / 2,
    y: plot.y0 + 36,
    text: o.xLabel,
    color: AXIS,
    size: 12,
    anchor: "middle",
  });
  items.push({
    kind: "text",
    x: 16,
    y: plot.y1 - 10,
    text: o.yLabel,
    color: AXIS,
    size: 12,
    anchor: "start",
  });
  items.push({
    kind: "text",
    x: (plot.x0 + plot.x1) / 2,
    y: height - 14,
    text: o.caption,
    color: "#555555",
    size: 11,
    anchor: "middle",
  });
  return { scene: { width, height, items }, x, y, plot };
}

export function polyline(
  frame: Frame,
  xs: number[],
  ys: number[],
  color: string,
  width = 1.5,
  dash?: string,
): void {
  const pts: [number, number][] = [];
  for (let i = 0; i < xs.length; i++) {
    if (Number.isFinite(xs[i]) && Number.isFinite(ys[i])) {
      pts.push([frame.x(xs[i]), frame.y(ys[i])]);
    }
  }
  if (pts.length > 1) {
    frame.scene.items.push({ kind: "polyline", points: pts, color, width, dash });
  }
}

export function markers(
  frame: Frame,
  xs: number[],
  ys: number[],
  color: string,
  r = 3,
): void {
  for (let i = 0; i < xs.length; i++) {
    if (Number.isFinite(xs[i]) && Number.isFinite(ys[i])) {
      frame.scene.items.push({
        kind: "marker",
        x: frame.x(xs[i]),
        y: frame.y(ys[i]),
        r,
        color,
      });
    }
  }
}

export function errorBars(
  frame: Frame,
  xs: number[],
  ys: number[],
  es: number[],
  color: string,
): void {
  for (let i = 0; i < xs.length; i++) {
    if (!Number.isFinite(ys[i]) || !Number.isFinite(es[i])) continue;
    const px = frame.x(xs[i]);
    frame.scene.items.push({
      kind: "polyline",
      points: [
        [px, frame.y(ys[i] - es[i])],
        [px, frame.y(ys[i] + es[i])],
      ],
      color,
      width: 1,
    });
  }
}

export function legend(
  frame: Frame,
  entries: { label: string; color: string }[],
): void {
  let yPos = frame.plot.y1 + 14;
  const xPos = frame.plot.x1 - 170;
  for (const e of entries) {
    frame.scene.items.push({
      kind: "polyline",
      points: [
        [xPos, yPos - 4],
        [xPos + 22, yPos - 4],
      ],
      color: e.color,
      width: 2,
    });
    frame.scene.items.push({
      kind: "text",
      x: xPos + 28,
      y: yPos,
      text: e.label,
      color: "#333333",
      size: 11,
      anchor: "start",
    });
    yPos += 15;
  }
}

const XML_ESCAPE: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
};

function esc(s: string): string {
  return s.replace(/[&<>"]/g, (c) => XML_ESCAPE[c]);
}

const px = (v: number): string => String(Math.round(v * 100) / 100);

export function renderSvg(scene: Scene): string {
  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${scene.width}" height="${scene.height}" viewBox="0 0 ${scene.width} ${scene.height}">`,
    `<rect x="0" y="0" width="${scene.width}" height="${scene.height}" fill="#ffffff"/>`,
  ];
  for (const item of scene.items) {
    if (item.kind === "polyline") {
      const d = item.points.map(([a, b]) => `${px(a)},${px(b)}`).join(" ");
      const dash = item.dash ? ` stroke-dasharray="${item.dash}"` : "";
      parts.push(
        `<polyline points="${d}" fill="none" stroke="${item.color}" stroke-width="${item.width}"${dash}/>`,
      );
    } else if (item.kind === "marker") {
      parts.push(
        `<circle cx="${px(item.x)}" cy="${px(item.y)}" r="${item.r}" fill="${item.color}"/>`,
      );
    } else if (item.kind === "rect") {
      parts.push(
        `<rect x="${px(item.x)}" y="${px(item.y)}" width="${px(item.w)}" height="${px(item.h)}" fill="${item.color}"/>`,
      );
    } else {
      const anchor =
        item.anchor === "start"
          ? "start"
          : item.anchor === "end"
            ? "end"
            : "middle";
      parts.push(
        `<text x="${px(item.x)}" y="${px(item.y)}" font-family="Helvetica,Arial,sans-serif" font-size="${item.size}" fill="${item.color}" text-anchor="${anchor}">${esc(item.text)}</text>`,
      );
    }
  }
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
