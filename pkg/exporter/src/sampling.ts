/**
 * Sparse uniform frame sampling: split the clip into `count` equal
 * segments and take the middle frame of each.  Deterministic (eval-style
 * center rule), so re-exports are byte-identical.
 */
export function sampleIndices(totalFrames: number, count: number): number[] {
  if (totalFrames < 1) throw new Error("clip has no frames");
  if (count < 1) throw new Error("need at least one sample");
  const out: number[] = [];
  for (let i = 0; i < count; i++) {
    const start = (i * totalFrames) / count;
    const end = ((i + 1) * totalFrames) / count;
    const mid = Math.min(totalFrames - 1, Math.floor((start + end) / 2));
    out.push(mid);
  }
  return out;
}
