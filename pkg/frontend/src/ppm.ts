/** Decoder for the binary PPM (P6) preview frames the pipeline emits. */

export interface PpmImage {
  width: number;
  height: number;
  /** packed RGB, 3 bytes per pixel, row-major */
  rgb: Uint8Array;
}

export function decodePpm(buffer: ArrayBuffer): PpmImage {
  const bytes = new Uint8Array(buffer);
  // header: "P6" <ws> width <ws> height <ws> maxval <single ws> pixel data
  let offset = 0;
  const token = (): string => {
    while (offset < bytes.length && isSpace(bytes[offset])) offset++;
    const start = offset;
    while (offset < bytes.length && !isSpace(bytes[offset])) offset++;
    return String.fromCharCode(...bytes.subarray(start, offset));
  };
  const magic = token();
  if (magic !== "P6") throw new Error(`not a binary PPM (magic ${magic})`);
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  if (!(width > 0 && height > 0) || maxval !== 255) {
    throw new Error(`unsupported PPM header: ${width}x${height} maxval=${maxval}`);
  }
  offset++; // the single whitespace after maxval
  const expected = width * height * 3;
  const rgb = bytes.subarray(offset, offset + expected);
  if (rgb.length !== expected) throw new Error("PPM pixel data truncated");
  return { width, height, rgb: new Uint8Array(rgb) };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}
