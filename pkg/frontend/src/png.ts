/**
 * PNG rasterisation of a Scene with zero native dependencies.
 *
 * Output is a truecolor 8-bit PNG with filter 0 rows deflated at a fixed
 * level, so identical scenes produce identical bytes.  Text uses an
 * embedded 5x7 bitmap font (lowercase maps to uppercase); the figure
 * caption is additionally stored in a tEXt chunk.
 */

import { deflateSync } from "node:zlib";

import type { Scene } from "./plot.js";

// 5x7 column-major glyphs, bit 0 = top row
const FONT: Record<string, number[]> = {
  " ": [0x00, 0x00, 0x00, 0x00, 0x00],
  "0": [0x3e, 0x51, 0x49, 0x45, 0x3e],
  "1": [0x00, 0x42, 0x7f, 0x40, 0x00],
  "2": [0x42, 0x61, 0x51, 0x49, 0x46],
  "3": [0x21, 0x41, 0x45, 0x4b, 0x31],
  "4": [0x18, 0x14, 0x12, 0x7f, 0x10],
  "5": [0x27, 0x45, 0x45, 0x45, 0x39],
  "6": [0x3c, 0x4a, 0x49, 0x49, 0x30],
  "7": [0x01, 0x71, 0x09, 0x05, 0x03],
  "8": [0x36, 0x49, 0x49, 0x49, 0x36],
  "9": [0x06, 0x49, 0x49, 0x29, 0x1e],
  A: [0x7e, 0x11, 0x11, 0x11, 0x7e],
  B: [0x7f, 0x49, 0x49, 0x49, 0x36],
  C: [0x3e, 0x41, 0x41, 0x41, 0x22],
  D: [0x7f, 0x41, 0x41, 0x22, 0x1c],
  E: [0x7f, 0x49, 0x49, 0x49, 0x41],
  F: [0x7f, 0x09, 0x09, 0x09, 0x01],
  G: [0x3e, 0x41, 0x49, 0x49, 0x7a],
  H: [0x7f, 0x08, 0x08, 0x08, 0x7f],
  I: [0x00, 0x41, 0x7f, 0x41, 0x00],
  J: [0x20, 0x40, 0x41, 0x3f, 0x01],
  K: [0x7f, 0x08, 0x14, 0x22, 0x41],
  L: [0x7f, 0x40, 0x40, 0x40, 0x40],
  M: [0x7f, 0x02, 0x0c, 0x02, 0x7f],
  N: [0x7f, 0x04, 0x08, 0x10, 0x7f],
  O: [0x3e, 0x41, 0x41, 0x41, 0x3e],
  P: [0x7f, 0x09, 0x09, 0x09, 0x06],
  Q: [0x3e, 0x41, 0x51, 0x21, 0x5e],
  R: [0x7f, 0x09, 0x19, 0x29, 0x46],
  S: [0x46, 0x49, 0x49, 0x49, 0x31],
  T: [0x01, 0x01, 0x7f, 0x01, 0x01],
  U: [0x3f, 0x40, 0x40, 0x40, 0x3f],
  V: [0x1f, 0x20, 0x40, 0x20, 0x1f],
  W: [0x3f, 0x40, 0x38, 0x40, 0x3f],
  X: [0x63, 0x14, 0x08, 0x14, 0x63],
  Y: [0x07, 0x08, 0x70, 0x08, 0x07],
  Z: [0x61, 0x51, 0x49, 0x45, 0x43],
  ".": [0x00, 0x60, 0x60, 0x00, 0x00],
  ",": [0x00, 0x50, 0x30, 0x00, 0x00],
  "-": [0x08, 0x08, 0x08, 0x08, 0x08],
  "+": [0x08, 0x08, 0x3e, 0x08, 0x08],
  "=": [0x14, 0x14, 0x14, 0x14, 0x14],
  ":": [0x00, 0x36, 0x36, 0x00, 0x00],
  _: [0x40, 0x40, 0x40, 0x40, 0x40],
  "(": [0x00, 0x1c, 0x22, 0x41, 0x00],
  ")": [0x00, 0x41, 0x22, 0x1c, 0x00],
  "/": [0x20, 0x10, 0x08, 0x04, 0x02],
  "%": [0x23, 0x13, 0x08, 0x64, 0x62],
  "<": [0x08, 0x14, 0x22, 0x41, 0x00],
  ">": [0x00, 0x41, 0x22, 0x14, 0x08],
  "|": [0x00, 0x00, 0x7f, 0x00, 0x00],
  "^": [0x04, 0x02, 0x01, 0x02, 0x04],
  "*": [0x14, 0x08, 0x3e, 0x08, 0x14],
  "'": [0x00, 0x05, 0x03, 0x00, 0x00],
  '"': [0x00, 0x07, 0x00, 0x07, 0x00],
  "!": [0x00, 0x00, 0x5f, 0x00, 0x00],
  "?": [0x02, 0x01, 0x51, 0x09, 0x06],
  "[": [0x00, 0x7f, 0x41, 0x41, 0x00],
  "]": [0x00, 0x41, 0x41, 0x7f, 0x00],
};

function parseColor(c: string): [number, number, number] {
  const h = c.startsWith("#") ? c.slice(1) : c;
  return [
    parseInt(h.slice(0, 2), 16),
    parseInt(h.slice(2, 4), 16),
    parseInt(h.slice(4, 6), 16),
  ];
}

class Raster {
  data: Uint8Array;

  constructor(
    public width: number,
    public height: number,
  ) {
    this.data = new Uint8Array(width * height * 3);
    this.data.fill(255);
  }

  set(x: number, y: number, rgb: [number, number, number]): void {
    const xi = Math.round(x);
    const yi = Math.round(y);
    if (xi < 0 || yi < 0 || xi >= this.width || yi >= this.height) return;
    const o = (yi * this.width + xi) * 3;
    this.data[o] = rgb[0];
    this.data[o + 1] = rgb[1];
    this.data[o + 2] = rgb[2];
  }

  disc(x: number, y: number, r: number, rgb: [number, number, number]): void {
    const ri = Math.max(0, Math.ceil(r));
    for (let dy = -ri; dy <= ri; dy++) {
      for (let dx = -ri; dx <= ri; dx++) {
        if (dx * dx + dy * dy <= r * r + 0.25) {
          this.set(x + dx, y + dy, rgb);
        }
      }
    }
  }

  line(
    x0: number,
    y0: number,
    x1: number,
    y1: number,
    width: number,
    rgb: [number, number, number],
  ): void {
    const steps = Math.max(
      1,
      Math.ceil(Math.max(Math.abs(x1 - x0), Math.abs(y1 - y0))),
    );
    const r = Math.max(0.5, width / 2);
    for (let i = 0; i <= steps; i++) {
      const t = i / steps;
      this.disc(x0 + t * (x1 - x0), y0 + t * (y1 - y0), r, rgb);
    }
  }

  fillRect(
    x: number,
    y: number,
    w: number,
    h: number,
    rgb: [number, number, number],
  ): void {
    for (let yy = Math.round(y); yy < Math.round(y + h); yy++) {
      for (let xx = Math.round(x); xx < Math.round(x + w); xx++) {
        this.set(xx, yy, rgb);
      }
    }
  }

  text(
    x: number,
    y: number,
    s: string,
    size: number,
    anchor: "start" | "middle" | "end",
    rgb: [number, number, number],
  ): void {
    const scale = Math.max(1, Math.round(size / 9));
    const adv = 6 * scale;
    const total = s.length * adv;
    let cx =
      anchor === "middle" ? x - total / 2 : anchor === "end" ? x - total : x;
    const top = y - 7 * scale; // baseline at y
    for (const ch of s) {
      const glyph = FONT[ch] ?? FONT[ch.toUpperCase()] ?? FONT["?"];
      for (let col = 0; col < 5; col++) {
        const bits = glyph[col];
        for (let row = 0; row < 7; row++) {
          if ((bits >> row) & 1) {
            this.fillRect(cx + col * scale, top + row * scale, scale, scale, rgb);
          }
        }
      }
      cx += adv;
    }
  }
}

// CRC32 for PNG chunks
const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < buf.length; i++) {
    c = CRC_TABLE[(c ^ buf[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const out = new Uint8Array(12 + data.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, data.length);
  for (let i = 0; i < 4; i++) {
    out[4 + i] = type.charCodeAt(i);
  }
  out.set(data, 8);
  view.setUint32(8 + data.length, crc32(out.subarray(4, 8 + data.length)));
  return out;
}

export function renderPng(scene: Scene, caption?: string): Buffer {
  const raster = new Raster(scene.width, scene.height);
  for (const item of scene.items) {
    if (item.kind === "polyline") {
      const rgb = parseColor(item.color);
      for (let i = 1; i < item.points.length; i++) {
        raster.line(
          item.points[i - 1][0],
          item.points[i - 1][1],
          item.points[i][0],
          item.points[i][1],
          item.width,
          rgb,
        );
      }
    } else if (item.kind === "marker") {
      raster.disc(item.x, item.y, item.r, parseColor(item.color));
    } else if (item.kind === "rect") {
      raster.fillRect(item.x, item.y, item.w, item.h, parseColor(item.color));
    } else {
      raster.text(
        item.x,
        item.y,
        item.text,
        item.size,
        item.anchor,
        parseColor(item.color),
      );
    }
  }
  // assemble: signature, IHDR, optional tEXt, IDAT, IEND
  const sig = Uint8Array.from([137, 80, 78, 71, 13, 10, 26, 10]);
  const ihdr = new Uint8Array(13);
  const hv = new DataView(ihdr.buffer);
  hv.setUint32(0, scene.width);
  hv.setUint32(4, scene.height);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 2; // truecolor
  const stride = scene.width * 3;
  const rows = new Uint8Array((stride + 1) * scene.height);
  for (let y = 0; y < scene.height; y++) {
    rows[y * (stride + 1)] = 0; // filter: none
    rows.set(
      raster.data.subarray(y * stride, (y + 1) * stride),
      y * (stride + 1) + 1,
    );
  }
  const idat = deflateSync(rows, { level: 9 });
  const parts: Uint8Array[] = [sig, chunk("IHDR", ihdr)];
  if (caption) {
    const keyword = "Description";
    const text = new Uint8Array(keyword.length + 1 + caption.length);
    for (let i = 0; i < keyword.length; i++) text[i] = keyword.charCodeAt(i);
    for (let i = 0; i < caption.length; i++) {
      text[keyword.length + 1 + i] = caption.charCodeAt(i) & 0x7f;
    }
    parts.push(chunk("tEXt", text));
  }
  parts.push(chunk("IDAT", idat), chunk("IEND", new Uint8Array(0)));
  return Buffer.concat(parts.map((p) => Buffer.from(p)));
}
