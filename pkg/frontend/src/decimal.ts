/**
 * Exact arithmetic on the decimal literals stored in a stats CSV.
 *
 * The gap table must be the file's arithmetic with no floating-point
 * rounding on top, so differences are computed on scaled BigInt values
 * parsed straight from the cell text (plain or exponent form) and
 * rendered back without ever passing through a double.
 */

/** value = units / 10^scale, sign carried by `units`. */
export interface Dec {
  units: bigint;
  scale: number;
}

const DEC_RE = /^([+-]?)(\d+)(?:\.(\d+))?(?:[eE]([+-]?\d+))?$/;

export function parseDec(text: string): Dec {
  const m = DEC_RE.exec(text.trim());
  if (!m) throw new Error(`not a decimal literal: "${text}"`);
  const [, sign, intPart, fracPart = "", expPart] = m;
  let units = BigInt(intPart + fracPart);
  let scale = fracPart.length;
  const exp = expPart ? parseInt(expPart, 10) : 0;
  if (exp > 0) {
    const shift = Math.min(exp, scale);
    scale -= shift;
    units *= 10n ** BigInt(exp - shift);
  } else {
    scale -= exp;
  }
  if (sign === "-") units = -units;
  return { units, scale };
}

function aligned(a: Dec, b: Dec): [bigint, bigint, number] {
  const scale = Math.max(a.scale, b.scale);
  const ua = a.units * 10n ** BigInt(scale - a.scale);
  const ub = b.units * 10n ** BigInt(scale - b.scale);
  return [ua, ub, scale];
}

export function sub(a: Dec, b: Dec): Dec {
  const [ua, ub, scale] = aligned(a, b);
  return { units: ua - ub, scale };
}

export function compare(a: Dec, b: Dec): number {
  const [ua, ub] = aligned(a, b);
  return ua < ub ? -1 : ua > ub ? 1 : 0;
}

/** Multiply by 10^k exactly (k may be negative). */
export function shift(d: Dec, k: number): Dec {
  if (k >= 0) {
    const fromScale = Math.min(k, d.scale);
    return {
      units: d.units * 10n ** BigInt(k - fromScale),
      scale: d.scale - fromScale,
    };
  }
  return { units: d.units, scale: d.scale - k };
}

/** Canonical text: no exponent, trailing fraction zeros trimmed. */
export function formatDec(d: Dec): string {
  const neg = d.units < 0n;
  let digits = (neg ? -d.units : d.units).toString();
  if (digits.length <= d.scale) {
    digits = "0".repeat(d.scale - digits.length + 1) + digits;
  }
  const cut = digits.length - d.scale;
  let intPart = digits.slice(0, cut);
  let fracPart = digits.slice(cut).replace(/0+$/, "");
  if (intPart === "") intPart = "0";
  const text = fracPart ? `${intPart}.${fracPart}` : intPart;
  return text === "0" ? "0" : (neg ? "-" : "") + text;
}

/** Exact difference of two cell strings, as a percentage string. */
export function percentDiff(a: string, b: string): string {
  return formatDec(shift(sub(parseDec(a), parseDec(b)), 2));
}
