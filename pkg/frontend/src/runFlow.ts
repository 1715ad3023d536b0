/** Single-run workflow: gather the scenario, POST it, fan the response out
 * into the panel view-models. All displayed numbers come from the response. */

import { ApiClient, ApiError } from "./apiClient.js";
import { buildScenario, completeRun, failRun, startRun, type UiState } from "./state.js";
import type { RunResponse, SiteAssessmentPayload } from "./types.js";

export interface SiteViewModel {
  siteId: string;
  color: "green" | "red";
  percentChange: Record<string, number>;
  triggeredCount: number;
}

export interface ShiftViewModel {
  channel: string;
  coords: number[];
  percentile: number;
  /** OOD badge is shown iff the server flagged the channel. */
  oodBadge: boolean;
}

export interface RunPanels {
  sites: SiteViewModel[];
  shift: ShiftViewModel[];
  diffNorm: Record<string, number>;
  diffGlobalMean: Record<string, number>;
  lagSet: number[];
  saveEnabled: boolean;
}

export function siteViewModels(tipping: SiteAssessmentPayload[]): SiteViewModel[] {
  return tipping.map((a) => ({
    siteId: a.site_id,
    color: a.at_risk ? "red" : "green",
    percentChange: a.percent_change,
    triggeredCount: a.triggered_rules.length,
  }));
}

export function panelsFromRun(run: RunResponse): RunPanels {
  return {
    sites: siteViewModels(run.tipping),
    shift: Object.entries(run.shift_scores).map(([channel, s]) => ({
      channel,
      coords: s.coords,
      percentile: s.percentile,
      oodBadge: s.ood,
    })),
    diffNorm: run.summary.diff_norm,
    diffGlobalMean: run.summary.diff_global_mean,
    lagSet: run.summary.lag_set,
    saveEnabled: true,
  };
}

export interface RunOutcome {
  state: UiState;
  panels: RunPanels | null;
  /** server error surfaced verbatim (code, message, field path) */
  error: { code: string; message: string; fieldPath?: string } | null;
}

export async function runInterventionFlow(
  client: ApiClient,
  state: UiState,
): Promise<RunOutcome> {
  const scenario = buildScenario(state); // throws on invariant violations
  let next = startRun(state);
  try {
    const run = await client.runIntervention(scenario);
    next = completeRun(next, run);
    return { state: next, panels: panelsFromRun(run), error: null };
  } catch (e) {
    next = failRun(next);
    if (e instanceof ApiError) {
      return {
        state: next,
        panels: null,
        error: { code: e.code, message: e.message, fieldPath: e.fieldPath },
      };
    }
    throw e;
  }
}
