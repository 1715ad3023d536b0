/** Minimal color mapping: one sequential and one diverging ramp. Diff views
 * always use the diverging ramp centered at zero. */

export type Rgb = [number, number, number];

function lerp(a: number, b: number, t: number): number {
  return a + (b - a) * t;
}

function ramp(stops: Rgb[], t: number): Rgb {
  const x = Math.min(Math.max(t, 0), 1) * (stops.length - 1);
  const i = Math.min(Math.floor(x), stops.length - 2);
  const f = x - i;
  return [
    Math.round(lerp(stops[i][0], stops[i + 1][0], f)),
    Math.round(lerp(stops[i][1], stops[i + 1][1], f)),
    Math.round(lerp(stops[i][2], stops[i + 1][2], f)),
  ];
}

const SEQUENTIAL: Rgb[] = [
  [68, 1, 84],
  [59, 82, 139],
  [33, 145, 140],
  [94, 201, 98],
  [253, 231, 37],
];

const DIVERGING: Rgb[] = [
  [5, 48, 97],
  [146, 197, 222],
  [247, 247, 247],
  [244, 165, 130],
  [103, 0, 31],
];

export function sequentialColor(value: number, min: number, max: number): Rgb {
  const span = max - min;
  return ramp(SEQUENTIAL, span > 0 ? (value - min) / span : 0.5);
}

/** Diverging map centered at zero: the color at value 0 is the midpoint. */
export function divergingColor(value: number, absMax: number): Rgb {
  if (absMax <= 0) return ramp(DIVERGING, 0.5);
  return ramp(DIVERGING, 0.5 + value / (2 * absMax));
}

export function colorsForStage(
  stage: "raw" | "anomaly" | "perturbed" | "before" | "after" | "diff",
  values: number[],
): Rgb[] {
  if (stage === "diff") {
    const absMax = values.reduce((m, v) => Math.max(m, Math.abs(v)), 0);
    return values.map((v) => divergingColor(v, absMax));
  }
  const min = Math.min(...values);
  const max = Math.max(...values);
  return values.map((v) => sequentialColor(v, min, max));
}
