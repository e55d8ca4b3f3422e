/** Programmatic toy clips: netpbm frame directories with class-coded content. */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { encodeP6, Image } from "../src/ppm.js";

export function syntheticFrame(
  classIndex: number,
  clipIndex: number,
  frameIndex: number,
  width = 64,
  height = 48,
): Image {
  const pixels = new Float64Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 3;
      // class-dependent base hue, clip-dependent phase, a moving stripe in time
      const stripe = Math.sin(0.3 * (x + 4 * frameIndex + clipIndex)) > 0 ? 60 : 0;
      pixels[i] = (40 + 50 * classIndex + stripe) % 256;
      pixels[i + 1] = (120 + 30 * classIndex + ((y + frameIndex * 3) % 64)) % 256;
      pixels[i + 2] = (200 - 40 * classIndex + ((x * y) % 32)) % 256;
    }
  }
  return { width, height, pixels };
}

export function writeClip(
  dir: string,
  classIndex: number,
  clipIndex: number,
  frameCount = 12,
): string {
  mkdirSync(dir, { recursive: true });
  for (let f = 0; f < frameCount; f++) {
    const name = join(dir, `frame-${String(f).padStart(3, "0")}.ppm`);
    writeFileSync(name, encodeP6(syntheticFrame(classIndex, clipIndex, f)));
  }
  return dir;
}

export function writeToyManifest(
  root: string,
  classes: string[],
  clipsPerClass: number,
): { manifestPath: string; clipDirs: string[] } {
  const lines = ["path,class"];
  const clipDirs: string[] = [];
  classes.forEach((className, classIndex) => {
    for (let clip = 0; clip < clipsPerClass; clip++) {
      const dir = join(root, `${className}-${clip}`);
      writeClip(dir, classIndex, clip);
      clipDirs.push(dir);
      lines.push(`${dir},${className}`);
    }
  });
  const manifestPath = join(root, "clips.csv");
  writeFileSync(manifestPath, lines.join("\n") + "\n");
  return { manifestPath, clipDirs };
}
