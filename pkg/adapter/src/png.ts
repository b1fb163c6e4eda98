/** Thin PNG codec wrappers: everything internal works on plain RGBA bytes. */

import { PNG } from 'pngjs';

export interface RgbaImage {
  width: number;
  height: number;
  data: Buffer; // RGBA, 4 bytes per pixel
}

export function decodePng(bytes: Buffer): RgbaImage {
  const png = PNG.sync.read(bytes);
  return { width: png.width, height: png.height, data: png.data };
}

export function encodePng(image: RgbaImage): Buffer {
  if (image.data.length !== image.width * image.height * 4) {
    throw new Error(
      `pixel buffer has ${image.data.length} bytes, expected ${image.width * image.height * 4}`,
    );
  }
  const png = new PNG({ width: image.width, height: image.height });
  image.data.copy(png.data);
  return PNG.sync.write(png);
}
