import type { WireStrokes } from "./wire.js";
import type { FetchLike, RequestLog } from "./requestlog.js";

export interface HealthResponse {
  status: string;
  checkpoint_sha256: string | null;
}

export interface ConfigResponse {
  mode: string;
  scheme: string;
  d_model: number;
  n_layers: number;
  n_heads: number;
  d_ff: number;
  max_len: number;
  vocab_size: number;
  n_classes: number;
  class_names: string[];
  canvas: number[];
  rdp_epsilon: number;
  offset_scale: number;
  checkpoint_sha256: string | null;
  has_index: boolean;
  has_joint: boolean;
}

export interface ClassifyResponse {
  class: string;
  probabilities: number[];
}

export interface StrokesResponse {
  strokes: WireStrokes;
}

export interface InterpolateResponse {
  frames: WireStrokes[];
}

export interface RetrieveHit {
  id: string;
  score: number;
}

export interface RetrieveResponse {
  results: RetrieveHit[];
}

/** Non-2xx reply that still carried a JSON body. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly detail?: unknown,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

/** fetch itself failed: service down, wrong host, no route. */
export class ServiceUnreachable extends Error {
  constructor(cause: unknown) {
    super("service unreachable");
    this.name = "ServiceUnreachable";
    this.cause = cause;
  }
}

/** Typed wrapper over the JSON API. Successful exchanges are appended
    to the request log when one is attached; failures are not, so a
    replayed log reproduces exactly what the panels displayed. */
export class ServiceClient {
  private readonly fetchFn: FetchLike;
  readonly log?: RequestLog;

  constructor(
    readonly baseUrl: string,
    opts: { fetchFn?: FetchLike; log?: RequestLog } = {},
  ) {
    this.fetchFn = opts.fetchFn ?? ((url, init) => fetch(url, init));
    this.log = opts.log;
  }

  health(signal?: AbortSignal): Promise<HealthResponse> {
    return this.request("GET", "/api/health", undefined, signal);
  }

  config(signal?: AbortSignal): Promise<ConfigResponse> {
    return this.request("GET", "/api/config", undefined, signal);
  }

  classify(strokes: WireStrokes, signal?: AbortSignal): Promise<ClassifyResponse> {
    return this.request("POST", "/api/classify", { strokes }, signal);
  }

  reconstruct(strokes: WireStrokes, signal?: AbortSignal): Promise<StrokesResponse> {
    return this.request("POST", "/api/reconstruct", { strokes }, signal);
  }

  interpolate(
    a: WireStrokes,
    b: WireStrokes,
    steps: number,
    signal?: AbortSignal,
  ): Promise<InterpolateResponse> {
    return this.request("POST", "/api/interpolate", { a, b, steps }, signal);
  }

  perturb(
    strokes: WireStrokes,
    sigma: number,
    seed: number,
    signal?: AbortSignal,
  ): Promise<StrokesResponse> {
    return this.request("POST", "/api/perturb", { strokes, sigma, seed }, signal);
  }

  retrieve(strokes: WireStrokes, k: number, signal?: AbortSignal): Promise<RetrieveResponse> {
    return this.request("POST", "/api/retrieve", { strokes, k }, signal);
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    signal?: AbortSignal,
  ): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, {
        method,
        signal,
        ...(body === undefined
          ? {}
          : {
              headers: { "content-type": "application/json" },
              body: JSON.stringify(body),
            }),
      });
    } catch (err) {
      if ((err as Error)?.name === "AbortError") throw err;
      throw new ServiceUnreachable(err);
    }
    const payload = (await resp.json().catch(() => null)) as {
      error?: unknown;
      detail?: unknown;
    } | null;
    if (!resp.ok) {
      const message =
        typeof payload?.error === "string" ? payload.error : `status ${resp.status}`;
      throw new ServiceError(resp.status, message, payload?.detail);
    }
    this.log?.record({ method, path, body: body ?? null, response: payload });
    return payload as T;
  }
}
