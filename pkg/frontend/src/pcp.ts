/** Parallel-coordinates brushing. Axes are the channels of one role plus
 * dedicated latitude and longitude axes; lat/lon brushes act as a spatial
 * region filter identical to the server's box mask. */

import { boxContains } from "./geo.js";

export interface BrushRange {
  min: number;
  max: number;
}

/** Brushes keyed by axis id; "lat" and "lon" are the spatial axes. */
export type BrushState = Record<string, BrushRange>;

export interface PcpData {
  /** channel id -> per-vertex values */
  channels: Record<string, number[]>;
  lat: number[];
  lon: number[];
}

/** Indices of vertices passing every active brush (inclusive bounds). */
export function filterVertices(data: PcpData, brushes: BrushState): number[] {
  const n = data.lat.length;
  const out: number[] = [];
  const channelBrushes = Object.entries(brushes).filter(
    ([axis]) => axis !== "lat" && axis !== "lon",
  );
  const latB = brushes["lat"];
  const lonB = brushes["lon"];
  for (let v = 0; v < n; v++) {
    let keep = true;
    if (latB || lonB) {
      keep = boxContains(data.lat[v], data.lon[v], [
        latB ? latB.min : -90,
        latB ? latB.max : 90,
        lonB ? lonB.min : -180,
        lonB ? lonB.max : 180,
      ]);
    }
    if (keep) {
      for (const [axis, range] of channelBrushes) {
        const series = data.channels[axis];
        if (!series) continue;
        const val = series[v];
        if (val < range.min || val > range.max) {
          keep = false;
          break;
        }
      }
    }
    if (keep) out.push(v);
  }
  return out;
}

export function setBrush(
  brushes: BrushState,
  axis: string,
  range: BrushRange | null,
): BrushState {
  const next = { ...brushes };
  if (range === null) {
    delete next[axis];
  } else {
    if (range.min > range.max) {
      throw new Error(`brush on ${axis}: min ${range.min} > max ${range.max}`);
    }
    next[axis] = range;
  }
  return next;
}

export function clearBrushes(): BrushState {
  return {};
}
