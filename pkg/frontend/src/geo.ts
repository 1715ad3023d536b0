/** Geographic helpers mirroring the server's region semantics, plus the
 * client-side projection subset. */

export type Box = [number, number, number, number]; // latMin, latMax, lonMin, lonMax

/** Map a longitude to [-180, 180), identically to the server. */
export function normalizeLon(lon: number): number {
  return ((((lon + 180) % 360) + 360) % 360) - 180;
}

/** Inclusive lat/lon box membership, identical to the server box mask:
 * bounds inclusive on both ends, a >= 360-degree span covers all longitudes,
 * and boxes crossing the dateline wrap. */
export function boxContains(lat: number, lon: number, box: Box): boolean {
  const [latMin, latMax, lonMin, lonMax] = box;
  if (lat < latMin || lat > latMax) return false;
  if (lonMax - lonMin >= 360 || (lonMin === -180 && lonMax === 180)) return true;
  const lo = normalizeLon(lonMin);
  const hi = normalizeLon(lonMax);
  const ln = normalizeLon(lon);
  if (lo <= hi) return ln >= lo && ln <= hi;
  return ln >= lo || ln <= hi; // wraps the dateline
}

export interface ProjectionEntry {
  name: string;
  implemented: boolean;
}

export type ProjectFn = (lat: number, lon: number) => [number, number] | null;

const DEG = Math.PI / 180;

function equirectangular(lat: number, lon: number): [number, number] {
  return [lon / 180, lat / 90];
}

function orthographic(lat: number, lon: number): [number, number] | null {
  // front hemisphere centered on (0, 0)
  const phi = lat * DEG;
  const lam = lon * DEG;
  const cosc = Math.cos(phi) * Math.cos(lam);
  if (cosc < 0) return null;
  return [Math.cos(phi) * Math.sin(lam), Math.sin(phi)];
}

function mollweide(lat: number, lon: number): [number, number] {
  const phi = lat * DEG;
  let theta = phi;
  for (let i = 0; i < 25; i++) {
    const f = 2 * theta + Math.sin(2 * theta) - Math.PI * Math.sin(phi);
    const fp = 2 + 2 * Math.cos(2 * theta);
    if (Math.abs(fp) < 1e-12) break;
    const next = theta - f / fp;
    if (Math.abs(next - theta) < 1e-12) {
      theta = next;
      break;
    }
    theta = next;
  }
  return [
    ((2 * Math.SQRT2) / Math.PI) * (lon * DEG) * Math.cos(theta) / Math.PI,
    (Math.SQRT2 * Math.sin(theta)) / Math.PI * 2,
  ];
}

// Robinson interpolation table (latitude every 5 degrees).
const ROBINSON_X = [
  1.0, 0.9986, 0.9954, 0.99, 0.9822, 0.973, 0.96, 0.9427, 0.9216, 0.8962,
  0.8679, 0.835, 0.7986, 0.7597, 0.7186, 0.6732, 0.6213, 0.5722, 0.5322,
];
const ROBINSON_Y = [
  0.0, 0.062, 0.124, 0.186, 0.248, 0.31, 0.372, 0.434, 0.4958, 0.5571,
  0.6176, 0.6769, 0.7346, 0.7903, 0.8435, 0.8936, 0.9394, 0.9761, 1.0,
];

function robinsonLookup(absLat: number): [number, number] {
  const idx = Math.min(absLat / 5, 17.999);
  const i = Math.floor(idx);
  const t = idx - i;
  return [
    ROBINSON_X[i] + t * (ROBINSON_X[i + 1] - ROBINSON_X[i]),
    ROBINSON_Y[i] + t * (ROBINSON_Y[i + 1] - ROBINSON_Y[i]),
  ];
}

function robinson(lat: number, lon: number): [number, number] {
  const [bx, by] = robinsonLookup(Math.abs(lat));
  return [(bx * lon) / 180, Math.sign(lat) * by * 0.5072];
}

function naturalEarth(lat: number, lon: number): [number, number] {
  const phi = lat * DEG;
  const p2 = phi * phi;
  const p4 = p2 * p2;
  const l =
    0.870700 - 0.131979 * p2 - 0.013791 * p4 +
    p4 * p4 * (0.003971 * p2 - 0.001529 * p4);
  const d =
    1.007226 + p2 * (0.015085 + p4 * (-0.044475 + 0.028874 * p2 - 0.005916 * p4));
  return [(lon * DEG * l) / Math.PI, (phi * d) / Math.PI];
}

export const PROJECTIONS: Record<string, ProjectFn> = {
  equirectangular,
  orthographic,
  mollweide,
  robinson,
  natural_earth: naturalEarth,
};

/** Merge the server-declared projection names with client availability. */
export function projectionMenu(serverNames: string[]): ProjectionEntry[] {
  return serverNames.map((name) => ({
    name,
    implemented: name in PROJECTIONS,
  }));
}
