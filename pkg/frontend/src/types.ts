/** Payload types for the workbench HTTP API. */

export type ChannelRole = "input" | "output";

export interface ChannelInfo {
  id: string;
  role: ChannelRole;
  units: string;
  long_name: string;
}

export interface TippingRuleInfo {
  variable: "psl" | "pr" | "tas";
  comparator: ">" | "<";
  threshold_percent: number;
}

export interface SiteInfo {
  id: string;
  display_name: string;
  center: [number, number];
  radius_km: number;
  rules: TippingRuleInfo[];
  combine: "any" | "all";
}

export interface Meta {
  channels: ChannelInfo[];
  grid_levels: number[];
  native_level: number;
  n_months: number;
  start: { year: number; month: number };
  lags: number[];
  sites: SiteInfo[];
  projections: string[];
  named_regions: Record<string, [number, number, number, number]>;
  ood_percentile: number | null;
}

export type Stage = "raw" | "anomaly" | "perturbed" | "before" | "after" | "diff";

export interface FieldResponse {
  channel: string;
  stage: Stage;
  level: number;
  values: number[];
  lat: number[];
  lon: number[];
}

export interface RegionSpec {
  kind: "named" | "latlon_box" | "polygon";
  name?: string;
  box?: [number, number, number, number];
  polygon?: [number, number][];
}

export interface Perturbation {
  mode: "add" | "scale";
  value: number;
}

export interface Scenario {
  region: RegionSpec;
  duration_years: number;
  perturbations: Record<string, Perturbation>;
  reference_time: number;
  lag_set: number[] | null;
  aggregation: "sum" | "mean";
  baseline_mode: "dataset" | "zero";
  taper_width_km: number;
}

export interface ShiftScorePayload {
  coords: number[];
  log_density: number;
  percentile: number;
  ood: boolean;
}

export interface SiteAssessmentPayload {
  site_id: string;
  percent_change: Record<string, number>;
  at_risk: boolean;
  triggered_rules: TippingRuleInfo[];
}

export interface RunResponse {
  run_id: string;
  summary: {
    lag_set: number[];
    diff_norm: Record<string, number>;
    diff_global_mean: Record<string, number>;
  };
  shift_scores: Record<string, ShiftScorePayload>;
  tipping: SiteAssessmentPayload[];
}

export interface DensityResponse {
  channel: string;
  axes: number[][];
  log_density: number[][];
  training_projections: number[][];
  explained_variance: number[];
}

export interface RecordPayload {
  record_id: number;
  created_at: string;
  scenario: Scenario;
  ood_flags: Record<string, boolean>;
  tipping_summary: [string, boolean][];
  notes: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field_path?: string;
}
