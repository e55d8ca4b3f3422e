/**
 * TSAE container: magic "TSAE", u32 version=1, u32 video count, u32 M,
 * u32 D, then per video: u32 class id, u32 id length, UTF-8 id, and
 * M*D little-endian float32 values.  A sidecar `<path>.json` maps class
 * ids to class names.
 */

import { writeFileSync, readFileSync } from "node:fs";

export const TSAE_MAGIC = "TSAE";
export const TSAE_VERSION = 1;

export interface VideoFeatures {
  videoId: string;
  classId: number;
  /** (frames, dim) row-major */
  features: Float64Array;
}

export interface TsaeDataset {
  frames: number;
  dim: number;
  videos: VideoFeatures[];
  classNames: Map<number, string>;
}

export function encodeTsae(dataset: TsaeDataset): Buffer {
  const { frames, dim, videos } = dataset;
  const parts: Buffer[] = [];
  const header = Buffer.alloc(20);
  header.write(TSAE_MAGIC, 0, "ascii");
  header.writeUInt32LE(TSAE_VERSION, 4);
  header.writeUInt32LE(videos.length, 8);
  header.writeUInt32LE(frames, 12);
  header.writeUInt32LE(dim, 16);
  parts.push(header);
  for (const video of videos) {
    if (video.features.length !== frames * dim) {
      throw new Error(`feature block of ${video.videoId} has wrong size`);
    }
    const id = Buffer.from(video.videoId, "utf-8");
    const head = Buffer.alloc(8);
    head.writeUInt32LE(video.classId, 0);
    head.writeUInt32LE(id.length, 4);
    const block = Buffer.alloc(frames * dim * 4);
    for (let i = 0; i < video.features.length; i++) {
      block.writeFloatLE(Math.fround(video.features[i]), 4 * i);
    }
    parts.push(head, id, block);
  }
  return Buffer.concat(parts);
}

export function writeTsae(path: string, dataset: TsaeDataset): void {
  writeFileSync(path, encodeTsae(dataset));
  const manifest: Record<string, string> = {};
  for (const [id, name] of dataset.classNames) manifest[String(id)] = name;
  writeFileSync(path + ".json", JSON.stringify(manifest, null, 2) + "\n");
}

/** Reader (tests and tooling; the engine has its own loader). */
export function readTsae(path: string): TsaeDataset {
  const buf = readFileSync(path);
  if (buf.toString("ascii", 0, 4) !== TSAE_MAGIC) throw new Error("bad magic");
  const version = buf.readUInt32LE(4);
  if (version !== TSAE_VERSION) throw new Error(`unsupported version ${version}`);
  const count = buf.readUInt32LE(8);
  const frames = buf.readUInt32LE(12);
  const dim = buf.readUInt32LE(16);
  let pos = 20;
  const videos: VideoFeatures[] = [];
  for (let i = 0; i < count; i++) {
    const classId = buf.readUInt32LE(pos);
    const idLen = buf.readUInt32LE(pos + 4);
    pos += 8;
    const videoId = buf.toString("utf-8", pos, pos + idLen);
    pos += idLen;
    const features = new Float64Array(frames * dim);
    for (let j = 0; j < features.length; j++) {
      features[j] = buf.readFloatLE(pos + 4 * j);
    }
    pos += frames * dim * 4;
    videos.push({ videoId, classId, features });
  }
  if (pos !== buf.length) throw new Error("trailing bytes");
  const classNames = new Map<number, string>();
  try {
    const sidecar = JSON.parse(readFileSync(path + ".json", "utf-8"));
    for (const [key, value] of Object.entries(sidecar)) {
      classNames.set(Number(key), String(value));
    }
  } catch {
    // sidecar is optional for the reader
  }
  return { frames, dim, videos, classNames };
}
