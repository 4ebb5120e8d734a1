import { FigureData } from "./series.js";

export interface RenderOptions {
  errorbars: boolean;
  title?: string;
}

const WIDTH = 800;
const HEIGHT = 500;
const MARGIN = { top: 48, right: 170, bottom: 58, left: 86 };
const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

interface Scale {
  (value: number): number;
  ticks: number[];
}

function niceTicks(lo: number, hi: number, count: number): number[] {
  const span = hi - lo || Math.abs(hi) || 1;
  const rawStep = span / Math.max(1, count);
  const mag = 10 ** Math.floor(Math.log10(rawStep));
  const norm = rawStep / mag;
  const step = (norm >= 5 ? 5 : norm >= 2 ? 2 : 1) * mag;
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + step * 1e-9; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

function makeScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  if (hi === lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const scale = ((value: number) =>
    outLo + ((value - lo) / (hi - lo)) * (outHi - outLo)) as Scale;
  scale.ticks = niceTicks(lo, hi, 6);
  return scale;
}

function formatTick(value: number): string {
  const abs = Math.abs(value);
  if (abs >= 1e9) return trim(value / 1e9) + "G";
  if (abs >= 1e6) return trim(value / 1e6) + "M";
  if (abs >= 1e3) return trim(value / 1e3) + "k";
  return trim(value);
}

function trim(value: number): string {
  return Number(value.toPrecision(6)).toString();
}

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

/** Render one figure (one series per scheme) to a standalone SVG string. */
export function renderFigure(data: FigureData, options: RenderOptions): string {
  const xs = data.series.flatMap((s) => s.points.map((p) => p.x));
  const tops = data.series.flatMap((s) =>
    s.points.map((p) => p.mean + (options.errorbars ? p.stderr : 0)),
  );
  const xScale = makeScale(
    Math.min(...xs), Math.max(...xs), MARGIN.left, WIDTH - MARGIN.right);
  const yMax = Math.max(...tops, 0) * 1.05 || 1;
  const yScale = makeScale(0, yMax, HEIGHT - MARGIN.bottom, MARGIN.top);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica, Arial, sans-serif">`,
    `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
  );

  const title = options.title ?? `${data.yColumn} vs ${data.xColumn}`;
  parts.push(
    `<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="16">${esc(title)}</text>`,
  );

  for (const tick of yScale.ticks) {
    const y = yScale(tick);
    parts.push(
      `<line x1="${MARGIN.left}" y1="${y}" x2="${WIDTH - MARGIN.right}" y2="${y}" ` +
        `stroke="#dddddd" stroke-width="1"/>`,
      `<text x="${MARGIN.left - 8}" y="${y + 4}" text-anchor="end" font-size="12">` +
        `${formatTick(tick)}</text>`,
    );
  }
  for (const tick of xScale.ticks) {
    const x = xScale(tick);
    parts.push(
      `<line x1="${x}" y1="${HEIGHT - MARGIN.bottom}" x2="${x}" ` +
        `y2="${HEIGHT - MARGIN.bottom + 6}" stroke="#333333"/>`,
      `<text x="${x}" y="${HEIGHT - MARGIN.bottom + 22}" text-anchor="middle" ` +
        `font-size="12">${formatTick(tick)}</text>`,
    );
  }
  parts.push(
    `<line x1="${MARGIN.left}" y1="${HEIGHT - MARGIN.bottom}" ` +
      `x2="${WIDTH - MARGIN.right}" y2="${HEIGHT - MARGIN.bottom}" stroke="#333333"/>`,
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" ` +
      `y2="${HEIGHT - MARGIN.bottom}" stroke="#333333"/>`,
    `<text x="${(MARGIN.left + WIDTH - MARGIN.right) / 2}" y="${HEIGHT - 14}" ` +
      `text-anchor="middle" font-size="13">${esc(data.xColumn)}</text>`,
    `<text transform="rotate(-90 20 ${HEIGHT / 2})" x="20" y="${HEIGHT / 2}" ` +
      `text-anchor="middle" font-size="13">${esc(data.yColumn)}</text>`,
  );

  data.series.forEach((series, index) => {
    const color = PALETTE[index % PALETTE.length];
    const coords = series.points.map(
      (p) => `${xScale(p.x).toFixed(2)},${yScale(p.mean).toFixed(2)}`,
    );
    if (options.errorbars) {
      for (const p of series.points) {
        if (p.stderr <= 0) continue;
        const x = xScale(p.x);
        const yLo = yScale(p.mean - p.stderr);
        const yHi = yScale(p.mean + p.stderr);
        parts.push(
          `<line x1="${x.toFixed(2)}" y1="${yLo.toFixed(2)}" x2="${x.toFixed(2)}" ` +
            `y2="${yHi.toFixed(2)}" stroke="${color}" stroke-width="1.5"/>`,
          `<line x1="${(x - 4).toFixed(2)}" y1="${yLo.toFixed(2)}" ` +
            `x2="${(x + 4).toFixed(2)}" y2="${yLo.toFixed(2)}" stroke="${color}"/>`,
          `<line x1="${(x - 4).toFixed(2)}" y1="${yHi.toFixed(2)}" ` +
            `x2="${(x + 4).toFixed(2)}" y2="${yHi.toFixed(2)}" stroke="${color}"/>`,
        );
      }
    }
    parts.push(
      `<polyline points="${coords.join(" ")}" fill="none" stroke="${color}" ` +
        `stroke-width="2" class="series" data-scheme="${esc(series.scheme)}"/>`,
    );
    for (const p of series.points) {
      parts.push(
        `<circle cx="${xScale(p.x).toFixed(2)}" cy="${yScale(p.mean).toFixed(2)}" ` +
          `r="3.2" fill="${color}"/>`,
      );
    }
    const ly = MARGIN.top + 10 + index * 22;
    const lx = WIDTH - MARGIN.right + 14;
    parts.push(
      `<line x1="${lx}" y1="${ly}" x2="${lx + 26}" y2="${ly}" stroke="${color}" ` +
        `stroke-width="2"/>`,
      `<text x="${lx + 32}" y="${ly + 4}" font-size="13">${esc(series.scheme)}</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
