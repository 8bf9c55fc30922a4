// Run-length mask transport: alternating background/foreground counts
// over a row-major scan, starting with background (a leading 0 encodes a
// mask that begins with foreground).

export function decodeRle(runs: number[], iw: number, ih: number): Uint8Array {
  let total = 0;
  for (const r of runs) {
    if (r < 0 || !Number.isInteger(r)) throw new Error(`bad run length ${r}`);
    total += r;
  }
  if (total !== iw * ih) {
    throw new Error(`runs sum ${total}, expected ${iw * ih}`);
  }
  const out = new Uint8Array(total);
  let pos = 0;
  let foreground = false;
  for (const r of runs) {
    if (foreground) out.fill(1, pos, pos + r);
    pos += r;
    foreground = !foreground;
  }
  return out;
}

export function encodeRle(flat: Uint8Array | number[]): number[] {
  const runs: number[] = [];
  let current = 0;
  let count = 0;
  for (const v of flat) {
    const bit = v ? 1 : 0;
    if (bit === current) {
      count += 1;
    } else {
      runs.push(count);
      current = bit;
      count = 1;
    }
  }
  runs.push(count);
  return runs;
}

export function foregroundCount(runs: number[]): number {
  let n = 0;
  for (let i = 1; i < runs.length; i += 2) n += runs[i];
  return n;
}
