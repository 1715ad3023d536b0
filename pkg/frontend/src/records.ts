/** Record table backed entirely by the records endpoints. */

import { ApiClient } from "./apiClient.js";
import type { RecordPayload, RunResponse, Scenario } from "./types.js";

export interface RecordTableRow {
  recordId: number;
  createdAt: string;
  region: string;
  notes: string;
  oodAny: boolean;
  sitesAtRisk: string[];
}

export function regionLabel(scenario: Scenario): string {
  const r = scenario.region;
  if (r.kind === "named") return r.name ?? "?";
  if (r.kind === "latlon_box") return `box(${(r.box ?? []).join(",")})`;
  return `polygon(${r.polygon?.length ?? 0} pts)`;
}

export function toRow(rec: RecordPayload): RecordTableRow {
  return {
    recordId: rec.record_id,
    createdAt: rec.created_at,
    region: regionLabel(rec.scenario),
    notes: rec.notes,
    oodAny: Object.values(rec.ood_flags).some(Boolean),
    sitesAtRisk: rec.tipping_summary.filter(([, risk]) => risk).map(([id]) => id),
  };
}

/** Save the current run with its flags; returns the stored record. */
export async function saveRecord(
  client: ApiClient,
  scenario: Scenario,
  run: RunResponse,
  notes: string,
): Promise<RecordPayload> {
  return client.saveRecord({
    scenario,
    ood_flags: Object.fromEntries(
      Object.entries(run.shift_scores).map(([cid, s]) => [cid, s.ood]),
    ),
    tipping_summary: run.tipping.map((a) => [a.site_id, a.at_risk]),
    notes,
  });
}

/** Repopulate the table from the server (page reload path). */
export async function loadTable(client: ApiClient): Promise<RecordTableRow[]> {
  const records = await client.listRecords();
  return records.map(toRow);
}
