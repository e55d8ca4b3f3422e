#!/usr/bin/env node
/**
 * tsamlt-export --manifest list.csv --frames 8 --backbone seeded-cnn --out features.tsae
 *
 * The manifest CSV has columns `path,class`; each path is a clip directory
 * of netpbm frame images.  Output is a TSAE container plus a JSON sidecar
 * mapping class ids to names (and `<out>.skipped.json` when clips fail).
 */

import { readFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { createBackbone } from "./backbone.js";
import { runExport } from "./export.js";
import { parseManifest } from "./manifest.js";

export function main(argv: string[]): number {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        manifest: { type: "string" },
        frames: { type: "string", default: "8" },
        backbone: { type: "string", default: "seeded-cnn" },
        out: { type: "string" },
      },
    }));
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    return 2;
  }
  if (!values.manifest || !values.out) {
    console.error(
      "usage: tsamlt-export --manifest list.csv [--frames 8] " +
        "[--backbone seeded-cnn] --out features.tsae",
    );
    return 2;
  }
  const frames = Number(values.frames);
  if (!Number.isInteger(frames) || frames < 2) {
    console.error(`--frames must be an integer >= 2, got ${values.frames}`);
    return 2;
  }
  try {
    const entries = parseManifest(readFileSync(values.manifest, "utf-8"));
    const backbone = createBackbone(values.backbone as string);
    const result = runExport({ entries, frames, backbone, outPath: values.out });
    console.error(
      `wrote ${result.dataset.videos.length} clips ` +
        `(M=${frames}, D=${backbone.featureDim}) to ${values.out}` +
        (result.skipped.length ? `; skipped ${result.skipped.length}` : ""),
    );
    return 0;
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
