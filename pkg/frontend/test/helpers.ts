import { readFileSync } from "node:fs";

export function loadFixture(name: string): any {
  const url = new URL(`./fixtures/${name}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf8"));
}

/** Flatten a nested number[][] fixture matrix into a typed array. */
export function flat(rows: number[][]): Float64Array {
  const width = rows.length ? rows[0].length : 0;
  const out = new Float64Array(rows.length * width);
  for (let r = 0; r < rows.length; r++) {
    for (let c = 0; c < width; c++) {
      out[r * width + c] = rows[r][c];
    }
  }
  return out;
}

export function maxAbsDiff(a: ArrayLike<number>, b: ArrayLike<number>): number {
  if (a.length !== b.length) {
    throw new Error(`length mismatch: ${a.length} vs ${b.length}`);
  }
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    worst = Math.max(worst, Math.abs(a[i] - b[i]));
  }
  return worst;
}
