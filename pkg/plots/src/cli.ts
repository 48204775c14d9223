#!/usr/bin/env node
/** CLI: `plot <figure-spec.json>` renders one figure from harness CSVs. */

import { CsvError } from "./csv.js";
import { FigureSpecError, loadFigureSpec } from "./figspec.js";
import { NoDataError, writeFigure } from "./figures.js";

export function main(argv: string[]): number {
  if (argv.length !== 2 || argv[0] !== "plot") {
    process.stderr.write("usage: plot <figure-spec.json>\n");
    return 2;
  }
  try {
    const spec = loadFigureSpec(argv[1]);
    const out = writeFigure(spec);
    process.stdout.write(`wrote ${out}\n`);
    return 0;
  } catch (err) {
    if (
      err instanceof FigureSpecError ||
      err instanceof CsvError ||
      err instanceof NoDataError
    ) {
      process.stderr.write(`error: ${err.message}\n`);
      return 1;
    }
    throw err;
  }
}

process.exit(main(process.argv.slice(2)));
