/**
 * Minimal decoder/encoder for binary netpbm images (P6 RGB, P5 gray).
 * Clip directories hold one image per frame; anything this module cannot
 * parse counts as an undecodable frame.
 */

export interface Image {
  width: number;
  height: number;
  /** RGB interleaved, length = width * height * 3, values 0..255 */
  pixels: Float64Array;
}

export class DecodeError extends Error {}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

/** Read the next whitespace/comment-delimited ASCII token. */
function nextToken(buf: Buffer, pos: number): { token: string; pos: number } {
  while (pos < buf.length) {
    if (isSpace(buf[pos])) {
      pos += 1;
    } else if (buf[pos] === 0x23) {
      // '#' comment runs to end of line
      while (pos < buf.length && buf[pos] !== 0x0a) pos += 1;
    } else {
      break;
    }
  }
  const start = pos;
  while (pos < buf.length && !isSpace(buf[pos]) && buf[pos] !== 0x23) pos += 1;
  if (start === pos) throw new DecodeError("truncated header");
  return { token: buf.toString("ascii", start, pos), pos };
}

export function decodeNetpbm(buf: Buffer): Image {
  if (buf.length < 2) throw new DecodeError("not a netpbm file");
  const magic = buf.toString("ascii", 0, 2);
  if (magic !== "P6" && magic !== "P5") {
    throw new DecodeError(`unsupported magic ${JSON.stringify(magic)}`);
  }
  let pos = 2;
  const w = nextToken(buf, pos);
  const h = nextToken(buf, w.pos);
  const max = nextToken(buf, h.pos);
  const width = Number(w.token);
  const height = Number(h.token);
  const maxval = Number(max.token);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new DecodeError(`bad dimensions ${w.token}x${h.token}`);
  }
  if (!Number.isInteger(maxval) || maxval < 1 || maxval > 255) {
    throw new DecodeError(`unsupported maxval ${max.token}`);
  }
  pos = max.pos + 1; // single whitespace byte after maxval
  const channels = magic === "P6" ? 3 : 1;
  const need = width * height * channels;
  if (buf.length - pos < need) throw new DecodeError("truncated pixel data");

  const pixels = new Float64Array(width * height * 3);
  const scale = 255 / maxval;
  for (let i = 0; i < width * height; i++) {
    if (channels === 3) {
      pixels[3 * i] = buf[pos + 3 * i] * scale;
      pixels[3 * i + 1] = buf[pos + 3 * i + 1] * scale;
      pixels[3 * i + 2] = buf[pos + 3 * i + 2] * scale;
    } else {
      const v = buf[pos + i] * scale;
      pixels[3 * i] = v;
      pixels[3 * i + 1] = v;
      pixels[3 * i + 2] = v;
    }
  }
  return { width, height, pixels };
}

/** Encode RGB pixels (0..255) as binary P6; used by tests and tooling. */
export function encodeP6(image: Image): Buffer {
  const { width, height, pixels } = image;
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  const body = Buffer.alloc(width * height * 3);
  for (let i = 0; i < body.length; i++) {
    body[i] = Math.max(0, Math.min(255, Math.round(pixels[i])));
  }
  return Buffer.concat([header, body]);
}
