import { readFileSync } from "node:fs";
import Papa from "papaparse";

/** Error whose name survives into the CLI's stderr line. */
export class PlotInputError extends Error {
  constructor(name: string, message: string) {
    super(message);
    this.name = name;
  }
}

export interface CsvTable {
  columns: string[];
  rows: Record<string, string>[];
}

/** Parse a harness CSV file into header + string-valued rows.
 *  Empty input (no header or no data rows) raises EmptyCsvError. */
export function readCsv(path: string): CsvTable {
  const text = readFileSync(path, "utf8").trim();
  if (text === "") {
    throw new PlotInputError("EmptyCsvError", `${path}: file is empty`);
  }
  const parsed = Papa.parse<Record<string, string>>(text, {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new PlotInputError(
      "CsvParseError",
      `${path}: ${first.message} (row ${first.row})`,
    );
  }
  const columns = parsed.meta.fields ?? [];
  if (columns.length === 0 || parsed.data.length === 0) {
    throw new PlotInputError("EmptyCsvError", `${path}: no data rows`);
  }
  return { columns, rows: parsed.data };
}

/** Assert that a column exists; MissingColumnError names the offender. */
export function requireColumn(table: CsvTable, column: string): void {
  if (!table.columns.includes(column)) {
    throw new PlotInputError(
      "MissingColumnError",
      `column "${column}" not in CSV header (have: ${table.columns.join(", ")})`,
    );
  }
}

/** Parse one cell as a finite number or fail with the cell's address. */
export function numericCell(
  row: Record<string, string>,
  column: string,
  index: number,
): number {
  const value = Number(row[column]);
  if (!Number.isFinite(value)) {
    throw new PlotInputError(
      "InvalidValueError",
      `row ${index + 1}: column "${column}" is not numeric: ${JSON.stringify(row[column])}`,
    );
  }
  return value;
}
