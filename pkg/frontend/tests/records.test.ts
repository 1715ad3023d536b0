import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/apiClient.js";
import { initialState, setSlider } from "../src/state.js";
import { runInterventionFlow } from "../src/runFlow.js";
import { loadTable, saveRecord, toRow } from "../src/records.js";
import { buildScenario } from "../src/state.js";
import { MockApi } from "./mockApi.js";

function readyState() {
  return setSlider(
    { ...initialState(), zone: { kind: "named", name: "SEP" } as const },
    "sw_cre_toa",
    -10,
  );
}

describe("record table", () => {
  it("save then reload repopulates the table from the API", async () => {
    const api = new MockApi({ oodChannels: ["sw_cre_toa"], siteIds: ["amazon"] });
    const client = new ApiClient("", api.fetch);
    const state = readyState();
    const { state: after } = await runInterventionFlow(client, state);
    const scenario = buildScenario(state);
    const saved = await saveRecord(client, scenario, after.lastRun!, "my note");
    expect(saved.record_id).toBe(1);

    // simulate a page reload: a fresh client against the same server
    const freshClient = new ApiClient("", api.fetch);
    const rows = await loadTable(freshClient);
    expect(rows).toHaveLength(1);
    expect(rows[0]).toEqual({
      recordId: 1,
      createdAt: saved.created_at,
      region: "SEP",
      notes: "my note",
      oodAny: true,
      sitesAtRisk: [],
    });
  });

  it("round-trips the scenario unchanged, including polygons", async () => {
    const api = new MockApi();
    const client = new ApiClient("", api.fetch);
    const scenario = {
      ...buildScenario(readyState()),
      region: {
        kind: "polygon" as const,
        polygon: [
          [0, 0],
          [0, 10],
          [10, 10],
        ] as [number, number][],
      },
    };
    await client.saveRecord({ scenario, notes: "poly" });
    const back = await client.listRecords();
    expect(back[0].scenario).toEqual(scenario);
    expect(toRow(back[0]).region).toBe("polygon(3 pts)");
  });

  it("delete removes the row; deleting again is a 404", async () => {
    const api = new MockApi();
    const client = new ApiClient("", api.fetch);
    await client.saveRecord({ scenario: buildScenario(readyState()) });
    await client.deleteRecord(1);
    expect(await loadTable(client)).toEqual([]);
    await expect(client.deleteRecord(1)).rejects.toMatchObject({
      status: 404,
      code: "not-found",
    });
  });
});
