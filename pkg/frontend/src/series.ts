import { CsvTable, PlotInputError, numericCell, requireColumn } from "./csv.js";

export interface SeriesPoint {
  x: number;
  mean: number;
  stderr: number;
  count: number;
}

export interface Series {
  scheme: string;
  points: SeriesPoint[];
}

export interface FigureData {
  xColumn: string;
  yColumn: string;
  series: Series[];
}

const Y_CANDIDATES = ["esr_bps", "streams"];

/** Pick the value column: ergodic sum-rate tables carry esr_bps, the
 *  stream-count table carries streams. */
export function pickValueColumn(table: CsvTable): string {
  for (const candidate of Y_CANDIDATES) {
    if (table.columns.includes(candidate)) {
      return candidate;
    }
  }
  throw new PlotInputError(
    "MissingColumnError",
    `no value column found; expected one of: ${Y_CANDIDATES.join(", ")}`,
  );
}

/** Group rows by (scheme, x), average the value column over the group
 *  (one row per drop in experiment tables), and sort everything so the
 *  same CSV always yields the same series. */
export function buildSeries(table: CsvTable, xColumn: string): FigureData {
  requireColumn(table, "scheme");
  requireColumn(table, xColumn);
  const yColumn = pickValueColumn(table);
  const groups = new Map<string, Map<number, number[]>>();
  table.rows.forEach((row, i) => {
    const scheme = row.scheme;
    if (scheme === undefined || scheme === "") {
      throw new PlotInputError("InvalidValueError", `row ${i + 1}: empty scheme`);
    }
    const x = numericCell(row, xColumn, i);
    const y = numericCell(row, yColumn, i);
    const byX = groups.get(scheme) ?? new Map<number, number[]>();
    groups.set(scheme, byX);
    const bucket = byX.get(x) ?? [];
    byX.set(x, bucket);
    bucket.push(y);
  });
  const series: Series[] = [...groups.keys()].sort().map((scheme) => {
    const byX = groups.get(scheme)!;
    const points = [...byX.keys()].sort((a, b) => a - b).map((x) => {
      const values = byX.get(x)!;
      const mean = values.reduce((s, v) => s + v, 0) / values.length;
      let stderr = 0;
      if (values.length > 1) {
        const ss = values.reduce((s, v) => s + (v - mean) ** 2, 0);
        stderr = Math.sqrt(ss / (values.length - 1) / values.length);
      }
      return { x, mean, stderr, count: values.length };
    });
    return { scheme, points };
  });
  return { xColumn, yColumn, series };
}
