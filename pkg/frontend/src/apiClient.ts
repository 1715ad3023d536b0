/** Thin typed wrapper over the workbench JSON endpoints. */

import type {
  ApiErrorBody,
  DensityResponse,
  FieldResponse,
  Meta,
  RecordPayload,
  RunResponse,
  Scenario,
  Stage,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly fieldPath?: string;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.fieldPath = body.field_path;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function parse<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let body: ApiErrorBody;
    try {
      body = (await resp.json()) as ApiErrorBody;
    } catch {
      body = { code: "unknown", message: `HTTP ${resp.status}` };
    }
    throw new ApiError(resp.status, body);
  }
  return (await resp.json()) as T;
}

export interface FieldQuery {
  channel: string;
  role?: "input" | "output";
  time?: number;
  level?: number;
  stage?: Stage;
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(base = "", fetchFn: FetchLike = (...a) => fetch(...a)) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  async meta(): Promise<Meta> {
    return parse(await this.fetchFn(`${this.base}/api/meta`));
  }

  async field(q: FieldQuery): Promise<FieldResponse> {
    const params = new URLSearchParams({ channel: q.channel });
    if (q.role !== undefined) params.set("role", q.role);
    if (q.time !== undefined) params.set("time", String(q.time));
    if (q.level !== undefined) params.set("level", String(q.level));
    if (q.stage !== undefined) params.set("stage", q.stage);
    return parse(await this.fetchFn(`${this.base}/api/field?${params}`));
  }

  async runIntervention(scenario: Scenario): Promise<RunResponse> {
    return parse(
      await this.fetchFn(`${this.base}/api/intervention/run`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(scenario),
      }),
    );
  }

  async shiftDensity(channel: string, cells = 40): Promise<DensityResponse> {
    const params = new URLSearchParams({ channel, cells: String(cells) });
    return parse(await this.fetchFn(`${this.base}/api/shift/density?${params}`));
  }

  async saveRecord(body: {
    scenario: Scenario;
    ood_flags?: Record<string, boolean>;
    tipping_summary?: [string, boolean][];
    notes?: string;
  }): Promise<RecordPayload> {
    return parse(
      await this.fetchFn(`${this.base}/api/records`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }

  async listRecords(): Promise<RecordPayload[]> {
    const doc = await parse<{ records: RecordPayload[] }>(
      await this.fetchFn(`${this.base}/api/records`),
    );
    return doc.records;
  }

  async deleteRecord(recordId: number): Promise<void> {
    await parse(
      await this.fetchFn(`${this.base}/api/records/${recordId}`, {
        method: "DELETE",
      }),
    );
  }

  exportCsvUrl(): string {
    return `${this.base}/api/records/export.csv`;
  }
}
