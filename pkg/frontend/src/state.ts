/** Workbench UI state and the panel-gating state machine.
 *
 * The UI computes no science: this module only tracks selections, validates
 * scenario invariants before a run is allowed, and gates the stage-dependent
 * panels on run completion (mirroring the server's 409 behavior).
 */

import type { Perturbation, RegionSpec, RunResponse, Scenario, Stage } from "./types.js";
import type { BrushState } from "./pcp.js";

export type RunPhase = "no-run" | "running" | "run-complete";

export type ViewStage = "current" | "before" | "after" | "diff";

export interface SliderBounds {
  min: number;
  max: number;
}

export interface UiState {
  // C1: global view controls
  time: number;
  projection: string;
  level: number;
  colormaps: { sequential: string; diverging: string };
  // C2: model selection
  selectedLags: number[] | null; // null = auto from duration
  // C3: intervention controls
  durationYears: number;
  zone: RegionSpec | null;
  perturbations: Record<string, Perturbation>;
  sliderBounds: Record<string, SliderBounds>;
  aggregation: "sum" | "mean";
  // V1 lasso / V2 stage
  lassoPolygon: [number, number][];
  viewStage: ViewStage;
  brushes: BrushState;
  // run lifecycle
  phase: RunPhase;
  lastRun: RunResponse | null;
  notes: string;
}

export function initialState(): UiState {
  return {
    time: 0,
    projection: "equirectangular",
    level: 2,
    colormaps: { sequential: "viridis", diverging: "RdBu" },
    selectedLags: null,
    durationYears: 1,
    zone: null,
    perturbations: {},
    sliderBounds: {},
    aggregation: "sum",
    lassoPolygon: [],
    viewStage: "current",
    brushes: {},
    phase: "no-run",
    lastRun: null,
    notes: "",
  };
}

/** Stages that require a completed run before they can be requested. */
const RUN_GATED_STAGES: ReadonlySet<Stage> = new Set([
  "perturbed",
  "before",
  "after",
  "diff",
]);

export function stageEnabled(state: UiState, stage: Stage): boolean {
  if (!RUN_GATED_STAGES.has(stage)) return true;
  return state.phase === "run-complete";
}

export function viewStageEnabled(state: UiState, view: ViewStage): boolean {
  if (view === "current") return true;
  return state.phase === "run-complete";
}

/** Controls disabled while gated, with the reason for the tooltip. */
export function gatedControls(state: UiState): { id: string; reason: string }[] {
  if (state.phase === "run-complete") return [];
  const reason = "run an intervention first";
  return [
    { id: "view-before", reason },
    { id: "view-after", reason },
    { id: "view-diff", reason },
    { id: "perturbed-toggle", reason },
    { id: "save-record", reason },
  ];
}

export function setSlider(state: UiState, channel: string, value: number): UiState {
  const bounds = state.sliderBounds[channel];
  if (bounds && (value < bounds.min || value > bounds.max)) {
    throw new Error(
      `slider ${channel}: ${value} outside [${bounds.min}, ${bounds.max}]`,
    );
  }
  return {
    ...state,
    perturbations: {
      ...state.perturbations,
      [channel]: { mode: "add", value },
    },
  };
}

export function addLassoPoint(state: UiState, lat: number, lon: number): UiState {
  return { ...state, lassoPolygon: [...state.lassoPolygon, [lat, lon]] };
}

export function lassoToRegion(state: UiState): RegionSpec {
  if (state.lassoPolygon.length < 3) {
    throw new Error("freeform polygon needs at least 3 points");
  }
  return { kind: "polygon", polygon: state.lassoPolygon };
}

/** Validate C3 state and build the scenario; throws when invariants fail. */
export function buildScenario(state: UiState): Scenario {
  const region = state.zone ?? (state.lassoPolygon.length > 0 ? lassoToRegion(state) : null);
  if (region === null) throw new Error("select a zone or draw a polygon");
  if (region.kind === "polygon" && (region.polygon?.length ?? 0) < 3) {
    throw new Error("freeform polygon needs at least 3 points");
  }
  if (Object.keys(state.perturbations).length === 0) {
    throw new Error("perturb at least one channel");
  }
  if (state.durationYears < 1) throw new Error("duration must be at least 1 year");
  return {
    region,
    duration_years: state.durationYears,
    perturbations: state.perturbations,
    reference_time: state.time,
    lag_set: state.selectedLags,
    aggregation: state.aggregation,
    baseline_mode: "dataset",
    taper_width_km: 0,
  };
}

/** no-run/running/run-complete transitions; at most one in-flight run. */
export function startRun(state: UiState): UiState {
  if (state.phase === "running") {
    throw new Error("an intervention run is already in flight");
  }
  return { ...state, phase: "running" };
}

export function completeRun(state: UiState, run: RunResponse): UiState {
  return { ...state, phase: "run-complete", lastRun: run, viewStage: "diff" };
}

export function failRun(state: UiState): UiState {
  // a failed run restores the previous gating: stale panels stay gated
  return {
    ...state,
    phase: state.lastRun === null ? "no-run" : "run-complete",
  };
}
