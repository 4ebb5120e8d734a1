import { describe, expect, it } from "vitest";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import { readCsv, PlotInputError } from "../src/csv.js";
import { buildSeries, pickValueColumn } from "../src/series.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = (name: string) => join(here, "fixtures", name);

describe("readCsv", () => {
  it("parses header and rows", () => {
    const table = readCsv(fixture("sweep.csv"));
    expect(table.columns).toContain("esr_bps");
    expect(table.rows).toHaveLength(8);
  });

  it("raises EmptyCsvError on a blank file", () => {
    expect(() => readCsv(fixture("blank.csv"))).toThrowError(
      expect.objectContaining({ name: "EmptyCsvError" }),
    );
  });

  it("raises EmptyCsvError on a header-only file", () => {
    expect(() => readCsv(fixture("header_only.csv"))).toThrowError(
      expect.objectContaining({ name: "EmptyCsvError" }),
    );
  });
});

describe("buildSeries", () => {
  it("averages drops per (scheme, x) and sorts deterministically", () => {
    const data = buildSeries(readCsv(fixture("sweep.csv")), "axis_value");
    expect(data.yColumn).toBe("esr_bps");
    expect(data.series.map((s) => s.scheme)).toEqual(["rs_cmd", "tin"]);
    const rs = data.series[0];
    expect(rs.points.map((p) => p.x)).toEqual([4, 8]);
    expect(rs.points[0].mean).toBeCloseTo(125e6, 6);
    expect(rs.points[0].count).toBe(2);
    // two drops 120e6/130e6: sample std 5e6*sqrt(2), stderr = std/sqrt(2)
    expect(rs.points[0].stderr).toBeCloseTo(5e6, 6);
    const tin = data.series[1];
    expect(tin.points[1].mean).toBeCloseTo(145e6, 6);
  });

  it("uses the streams column for the catalogue table", () => {
    const table = readCsv(fixture("streams.csv"));
    expect(pickValueColumn(table)).toBe("streams");
    const data = buildSeries(table, "axis_value");
    const grs = data.series.find((s) => s.scheme === "grs")!;
    expect(grs.points.map((p) => p.mean)).toEqual([1, 15, 255]);
    expect(grs.points.every((p) => p.stderr === 0)).toBe(true);
  });

  it("raises MissingColumnError naming an absent x column", () => {
    const table = readCsv(fixture("sweep.csv"));
    expect(() => buildSeries(table, "bandwidth")).toThrowError(
      expect.objectContaining({
        name: "MissingColumnError",
        message: expect.stringContaining('"bandwidth"'),
      }),
    );
  });

  it("raises MissingColumnError when no value column exists", () => {
    const table = readCsv(fixture("no_value_column.csv"));
    expect(() => buildSeries(table, "drop")).toThrowError(
      expect.objectContaining({ name: "MissingColumnError" }),
    );
  });

  it("raises InvalidValueError on non-numeric cells", () => {
    const table = {
      columns: ["scheme", "axis_value", "esr_bps"],
      rows: [{ scheme: "tin", axis_value: "low", esr_bps: "1.0" }],
    };
    expect(() => buildSeries(table, "axis_value")).toThrowError(
      expect.objectContaining({ name: "InvalidValueError" }),
    );
  });
});

describe("PlotInputError", () => {
  it("carries the given name", () => {
    const err = new PlotInputError("SomethingError", "detail");
    expect(err.name).toBe("SomethingError");
    expect(err.message).toBe("detail");
  });
});
