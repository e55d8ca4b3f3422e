/**
 * The export pipeline: for each manifest clip, sample frames sparsely and
 * uniformly, decode, resize + center-crop to 224, run the frozen backbone,
 * and collect one (frames, dim) block per clip.  Undecodable clips are
 * skipped with a warning and recorded alongside the output.
 */

import { readFileSync, readdirSync, writeFileSync } from "node:fs";
import { basename, join } from "node:path";

import { Backbone, resizeCenterCrop } from "./backbone.js";
import { ManifestEntry } from "./manifest.js";
import { decodeNetpbm } from "./ppm.js";
import { sampleIndices } from "./sampling.js";
import { TsaeDataset, VideoFeatures, writeTsae } from "./tsae.js";

export interface ExportJob {
  entries: ManifestEntry[];
  frames: number;
  backbone: Backbone;
  outPath: string;
}

export interface SkipRecord {
  path: string;
  reason: string;
}

export interface ExportResult {
  dataset: TsaeDataset;
  skipped: SkipRecord[];
}

const FRAME_SUFFIXES = [".ppm", ".pgm", ".pnm"];

function listFrameFiles(clipDir: string): string[] {
  const names = readdirSync(clipDir)
    .filter((name) => FRAME_SUFFIXES.some((sfx) => name.toLowerCase().endsWith(sfx)))
    .sort();
  return names.map((name) => join(clipDir, name));
}

export function extractClip(clipDir: string, frames: number, backbone: Backbone): Float64Array {
  const files = listFrameFiles(clipDir);
  if (files.length === 0) {
    throw new Error("no decodable frame images in clip directory");
  }
  const picks = sampleIndices(files.length, frames);
  const out = new Float64Array(frames * backbone.featureDim);
  picks.forEach((frameIndex, row) => {
    const image = decodeNetpbm(readFileSync(files[frameIndex]));
    const cropped = resizeCenterCrop(image);
    const feature = backbone.forward(cropped);
    out.set(feature, row * backbone.featureDim);
  });
  return out;
}

export function runExport(job: ExportJob, warn: (msg: string) => void = console.warn): ExportResult {
  const classIds = new Map<string, number>();
  const classNames = new Map<number, string>();
  const videos: VideoFeatures[] = [];
  const skipped: SkipRecord[] = [];

  for (const entry of job.entries) {
    let classId = classIds.get(entry.className);
    if (classId === undefined) {
      classId = classIds.size;
      classIds.set(entry.className, classId);
      classNames.set(classId, entry.className);
    }
    try {
      const features = extractClip(entry.path, job.frames, job.backbone);
      videos.push({ videoId: basename(entry.path), classId, features });
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      warn(`skipping ${entry.path}: ${reason}`);
      skipped.push({ path: entry.path, reason });
    }
  }
  if (videos.length === 0) {
    throw new Error("every clip failed to decode; nothing to write");
  }

  const dataset: TsaeDataset = {
    frames: job.frames,
    dim: job.backbone.featureDim,
    videos,
    classNames,
  };
  writeTsae(job.outPath, dataset);
  if (skipped.length > 0) {
    writeFileSync(job.outPath + ".skipped.json", JSON.stringify(skipped, null, 2) + "\n");
  }
  return { dataset, skipped };
}
