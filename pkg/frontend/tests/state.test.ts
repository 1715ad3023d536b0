import { describe, expect, it } from "vitest";

import {
  addLassoPoint,
  buildScenario,
  completeRun,
  failRun,
  gatedControls,
  initialState,
  lassoToRegion,
  setSlider,
  stageEnabled,
  startRun,
  viewStageEnabled,
} from "../src/state.js";
import type { RunResponse } from "../src/types.js";

const fakeRun: RunResponse = {
  run_id: "r1",
  summary: {
    lag_set: [1],
    diff_norm: { psl: 0, pr: 0, tas: 0 },
    diff_global_mean: { psl: 0, pr: 0, tas: 0 },
  },
  shift_scores: {},
  tipping: [],
};

describe("panel gating state machine", () => {
  it("gates run-dependent stages before any run", () => {
    const s = initialState();
    expect(stageEnabled(s, "raw")).toBe(true);
    expect(stageEnabled(s, "anomaly")).toBe(true);
    for (const stage of ["perturbed", "before", "after", "diff"] as const) {
      expect(stageEnabled(s, stage)).toBe(false);
    }
    expect(viewStageEnabled(s, "current")).toBe(true);
    expect(viewStageEnabled(s, "diff")).toBe(false);
    const gated = gatedControls(s).map((c) => c.id);
    expect(gated).toContain("view-diff");
    expect(gated).toContain("save-record");
  });

  it("keeps stages gated while a run is in flight", () => {
    const s = startRun(initialState());
    expect(s.phase).toBe("running");
    expect(stageEnabled(s, "diff")).toBe(false);
  });

  it("rejects a second concurrent run", () => {
    const s = startRun(initialState());
    expect(() => startRun(s)).toThrow(/in flight/);
  });

  it("opens everything after completion", () => {
    const s = completeRun(startRun(initialState()), fakeRun);
    for (const stage of ["perturbed", "before", "after", "diff"] as const) {
      expect(stageEnabled(s, stage)).toBe(true);
    }
    expect(gatedControls(s)).toEqual([]);
    expect(s.viewStage).toBe("diff");
  });

  it("failed first run returns to no-run; failed later run keeps prior results", () => {
    const first = failRun(startRun(initialState()));
    expect(first.phase).toBe("no-run");
    const withRun = completeRun(startRun(initialState()), fakeRun);
    const after = failRun(startRun(withRun));
    expect(after.phase).toBe("run-complete");
    expect(stageEnabled(after, "diff")).toBe(true);
  });
});

describe("scenario invariants", () => {
  it("requires a zone and at least one perturbed channel", () => {
    expect(() => buildScenario(initialState())).toThrow(/zone|polygon/);
    const withZone = {
      ...initialState(),
      zone: { kind: "named", name: "SEP" } as const,
    };
    expect(() => buildScenario(withZone)).toThrow(/at least one channel/);
    const ready = setSlider(withZone, "sw_cre_toa", -10);
    const scenario = buildScenario(ready);
    expect(scenario.perturbations["sw_cre_toa"].value).toBe(-10);
    expect(scenario.region).toEqual({ kind: "named", name: "SEP" });
  });

  it("enforces slider bounds", () => {
    const s = {
      ...initialState(),
      sliderBounds: { sw_cre_toa: { min: -50, max: 50 } },
    };
    expect(() => setSlider(s, "sw_cre_toa", -60)).toThrow(/outside/);
    expect(setSlider(s, "sw_cre_toa", -50).perturbations["sw_cre_toa"].value).toBe(-50);
  });

  it("requires three lasso points before a polygon region", () => {
    let s = initialState();
    s = addLassoPoint(s, 0, 0);
    s = addLassoPoint(s, 0, 10);
    expect(() => lassoToRegion(s)).toThrow(/3 points/);
    s = addLassoPoint(s, 10, 10);
    expect(lassoToRegion(s)).toEqual({
      kind: "polygon",
      polygon: [
        [0, 0],
        [0, 10],
        [10, 10],
      ],
    });
  });
});
