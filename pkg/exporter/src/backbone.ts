/**
 * Frozen image backbones: 224x224 RGB in, a pooled feature vector out.
 *
 * The default backbone is a small convolutional net whose weights are
 * generated from a fixed seed, so it is frozen by construction, needs no
 * downloads, and produces the same 2048-wide frame features as the
 * reference pipeline geometry.  A real pretrained graph (resnet50) would
 * slot in behind the same interface but requires a local weights bundle.
 */

import { Image } from "./ppm.js";

export const INPUT_SIZE = 224;
export const FEATURE_DIM = 2048;

export interface Backbone {
  readonly name: string;
  readonly featureDim: number;
  /** (224*224*3) RGB 0..255 -> pooled feature vector */
  forward(pixels: Float64Array): Float64Array;
}

/** Deterministic PRNG (mulberry32); good enough for frozen weights. */
function rng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussianWeights(count: number, scale: number, seed: number): Float64Array {
  const next = rng(seed);
  const out = new Float64Array(count);
  for (let i = 0; i < count; i += 2) {
    // Box-Muller; the paired layout keeps the stream aligned.
    const u = Math.max(next(), 1e-12);
    const v = next();
    const r = Math.sqrt(-2 * Math.log(u));
    out[i] = r * Math.cos(2 * Math.PI * v) * scale;
    if (i + 1 < count) out[i + 1] = r * Math.sin(2 * Math.PI * v) * scale;
  }
  return out;
}

interface ConvLayer {
  inCh: number;
  outCh: number;
  /** (outCh, inCh, 3, 3) flattened */
  weights: Float64Array;
}

/** 3x3 stride-2 convolution with zero padding 1, ReLU. */
function convDown(
  input: Float64Array,
  size: number,
  layer: ConvLayer,
): { data: Float64Array; size: number } {
  const outSize = Math.floor((size + 1) / 2);
  const { inCh, outCh, weights } = layer;
  const out = new Float64Array(outSize * outSize * outCh);
  for (let oy = 0; oy < outSize; oy++) {
    for (let ox = 0; ox < outSize; ox++) {
      const cy = oy * 2;
      const cx = ox * 2;
      for (let oc = 0; oc < outCh; oc++) {
        let acc = 0;
        for (let ky = -1; ky <= 1; ky++) {
          const y = cy + ky;
          if (y < 0 || y >= size) continue;
          for (let kx = -1; kx <= 1; kx++) {
            const x = cx + kx;
            if (x < 0 || x >= size) continue;
            const base = (y * size + x) * inCh;
            const wbase = ((oc * 3 + (ky + 1)) * 3 + (kx + 1)) * inCh;
            for (let ic = 0; ic < inCh; ic++) {
              acc += input[base + ic] * weights[wbase + ic];
            }
          }
        }
        out[(oy * outSize + ox) * outCh + oc] = acc > 0 ? acc : 0;
      }
    }
  }
  return { data: out, size: outSize };
}

class SeededCnn implements Backbone {
  readonly name = "seeded-cnn";
  readonly featureDim = FEATURE_DIM;
  private layers: ConvLayer[];
  private projection: Float64Array; // (FEATURE_DIM, lastCh)
  private lastCh: number;

  constructor() {
    const channels = [3, 8, 16, 32];
    this.layers = [];
    for (let i = 0; i < channels.length - 1; i++) {
      const inCh = channels[i];
      const outCh = channels[i + 1];
      this.layers.push({
        inCh,
        outCh,
        weights: gaussianWeights(outCh * inCh * 9, 1 / Math.sqrt(inCh * 9), 0xa11ce + i),
      });
    }
    this.lastCh = channels[channels.length - 1];
    this.projection = gaussianWeights(
      FEATURE_DIM * this.lastCh,
      1 / Math.sqrt(this.lastCh),
      0xfeed5,
    );
  }

  forward(pixels: Float64Array): Float64Array {
    if (pixels.length !== INPUT_SIZE * INPUT_SIZE * 3) {
      throw new Error(`backbone expects ${INPUT_SIZE}x${INPUT_SIZE} RGB input`);
    }
    // scale to roughly unit range
    let act: Float64Array = new Float64Array(pixels.length);
    for (let i = 0; i < pixels.length; i++) act[i] = pixels[i] / 127.5 - 1.0;
    let size = INPUT_SIZE;
    for (const layer of this.layers) {
      const res = convDown(act, size, layer);
      act = res.data;
      size = res.size;
    }
    // global average pool over space
    const pooled = new Float64Array(this.lastCh);
    const cells = size * size;
    for (let i = 0; i < cells; i++) {
      for (let c = 0; c < this.lastCh; c++) pooled[c] += act[i * this.lastCh + c];
    }
    for (let c = 0; c < this.lastCh; c++) pooled[c] /= cells;
    // fixed projection up to the 2048-wide frame feature
    const feature = new Float64Array(FEATURE_DIM);
    for (let f = 0; f < FEATURE_DIM; f++) {
      let acc = 0;
      const base = f * this.lastCh;
      for (let c = 0; c < this.lastCh; c++) acc += this.projection[base + c] * pooled[c];
      feature[f] = acc;
    }
    return feature;
  }
}

let cached: SeededCnn | null = null;

export function createBackbone(name: string): Backbone {
  if (name === "seeded-cnn") {
    if (!cached) cached = new SeededCnn();
    return cached;
  }
  if (name === "resnet50") {
    throw new Error(
      "resnet50 needs a local pretrained weights bundle, which this " +
        "environment cannot download; use --backbone seeded-cnn (same " +
        "interface and output shape)",
    );
  }
  throw new Error(`unknown backbone ${JSON.stringify(name)}`);
}

/** Bilinear resize (shortest side to `target`) followed by a center crop. */
export function resizeCenterCrop(image: Image, target: number = INPUT_SIZE): Float64Array {
  const { width, height, pixels } = image;
  const scale = target / Math.min(width, height);
  const newW = Math.max(target, Math.round(width * scale));
  const newH = Math.max(target, Math.round(height * scale));
  const offX = Math.floor((newW - target) / 2);
  const offY = Math.floor((newH - target) / 2);
  const out = new Float64Array(target * target * 3);
  for (let y = 0; y < target; y++) {
    const srcY = ((y + offY + 0.5) * height) / newH - 0.5;
    const y0 = Math.max(0, Math.floor(srcY));
    const y1 = Math.min(height - 1, y0 + 1);
    const fy = Math.min(1, Math.max(0, srcY - y0));
    for (let x = 0; x < target; x++) {
      const srcX = ((x + offX + 0.5) * width) / newW - 0.5;
      const x0 = Math.max(0, Math.floor(srcX));
      const x1 = Math.min(width - 1, x0 + 1);
      const fx = Math.min(1, Math.max(0, srcX - x0));
      for (let c = 0; c < 3; c++) {
        const p00 = pixels[(y0 * width + x0) * 3 + c];
        const p01 = pixels[(y0 * width + x1) * 3 + c];
        const p10 = pixels[(y1 * width + x0) * 3 + c];
        const p11 = pixels[(y1 * width + x1) * 3 + c];
        const top = p00 + (p01 - p00) * fx;
        const bottom = p10 + (p11 - p10) * fx;
        out[(y * target + x) * 3 + c] = top + (bottom - top) * fy;
      }
    }
  }
  return out;
}
