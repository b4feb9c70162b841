/** Append-only record of every successful exchange with the service.

    The UI's reproducibility promise is that anything on screen can be
    regenerated by replaying its logged request, so the log stores
    request and response verbatim and the replayer re-issues them and
    diffs the answers. */

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface LoggedRequest {
  seq: number;
  /** Date.now() at record time */
  at: number;
  method: string;
  path: string;
  /** null for GET */
  body: unknown;
  response: unknown;
}

export class RequestLog {
  private items: LoggedRequest[] = [];
  private seq = 0;

  record(entry: Omit<LoggedRequest, "seq" | "at">): LoggedRequest {
    const logged = { seq: this.seq++, at: Date.now(), ...entry };
    this.items.push(logged);
    return logged;
  }

  entries(): readonly LoggedRequest[] {
    return this.items;
  }

  get size(): number {
    return this.items.length;
  }

  clear(): void {
    this.items = [];
    this.seq = 0;
  }

  toJSON(): string {
    return JSON.stringify(this.items);
  }

  static parse(text: string): LoggedRequest[] {
    const parsed: unknown = JSON.parse(text);
    if (!Array.isArray(parsed)) throw new Error("request log must be a JSON array");
    return parsed as LoggedRequest[];
  }
}

/** JSON with object keys sorted, for order-insensitive comparison. */
export function stableStringify(value: unknown): string {
  if (Array.isArray(value)) {
    return "[" + value.map(stableStringify).join(",") + "]";
  }
  if (value !== null && typeof value === "object") {
    const record = value as Record<string, unknown>;
    const keys = Object.keys(record).sort();
    return (
      "{" +
      keys.map((k) => JSON.stringify(k) + ":" + stableStringify(record[k])).join(",") +
      "}"
    );
  }
  return JSON.stringify(value);
}

export interface ReplayMismatch {
  seq: number;
  path: string;
  logged: unknown;
  live: unknown;
}

export interface ReplayReport {
  replayed: number;
  mismatches: ReplayMismatch[];
}

/** Re-issue every logged request against a live service and diff the
    responses. A mismatch means a displayed result is no longer
    reproducible (different checkpoint, rebuilt index, ...). */
export async function replay(
  entries: readonly LoggedRequest[],
  baseUrl: string,
  fetchFn: FetchLike = (url, init) => fetch(url, init),
): Promise<ReplayReport> {
  const mismatches: ReplayMismatch[] = [];
  for (const entry of entries) {
    const init: RequestInit = { method: entry.method };
    if (entry.body !== null && entry.body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(entry.body);
    }
    const resp = await fetchFn(baseUrl + entry.path, init);
    const live: unknown = await resp.json().catch(() => ({ error: `status ${resp.status}` }));
    if (stableStringify(live) !== stableStringify(entry.response)) {
      mismatches.push({ seq: entry.seq, path: entry.path, logged: entry.response, live });
    }
  }
  return { replayed: entries.length, mismatches };
}
