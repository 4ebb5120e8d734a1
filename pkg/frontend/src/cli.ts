#!/usr/bin/env node
import { writeFileSync } from "node:fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { PlotInputError, readCsv } from "./csv.js";
import { buildSeries } from "./series.js";
import { renderFigure } from "./svg.js";

export function runPlot(argv: {
  csv: string;
  x: string;
  out: string;
  errorbars: boolean;
  title?: string;
}): void {
  const table = readCsv(argv.csv);
  const data = buildSeries(table, argv.x);
  const svg = renderFigure(data, { errorbars: argv.errorbars, title: argv.title });
  writeFileSync(argv.out, svg, "utf8");
}

export function main(args: string[]): number {
  const parsed = yargs(args)
    .scriptName("plot")
    .usage("$0 --csv <path> --x <col> --out <path> [--errorbars]")
    .option("csv", { type: "string", demandOption: true, describe: "input CSV path" })
    .option("x", { type: "string", demandOption: true, describe: "x-axis column" })
    .option("out", { type: "string", demandOption: true, describe: "output SVG path" })
    .option("errorbars", { type: "boolean", default: false, describe: "draw stderr bars" })
    .option("title", { type: "string", describe: "figure title override" })
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      throw err ?? new PlotInputError("UsageError", msg ?? "bad arguments");
    });
  try {
    const argv = parsed.parseSync();
    runPlot({
      csv: argv.csv,
      x: argv.x,
      out: argv.out,
      errorbars: argv.errorbars,
      title: argv.title,
    });
    return 0;
  } catch (error) {
    const name = error instanceof Error ? error.name : "Error";
    const message = error instanceof Error ? error.message : String(error);
    process.stderr.write(`${name}: ${message}\n`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(hideBin(process.argv)));
}
