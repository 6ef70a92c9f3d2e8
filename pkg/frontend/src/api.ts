import type {
  ArticleRecord,
  Conflict,
  DuplicatePair,
  JobStatus,
  QueueResponse,
  ReportRow,
  Stage,
  StageCloseResult,
  VenueEntry,
  VenueSuggestion,
  Verdict,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ClientOptions {
  /** Origin prefix; empty string means same origin. */
  base?: string;
  /** Bearer token, when the service was started with one. */
  token?: string;
  fetchImpl?: FetchLike;
  /** Observer for every parsed response body the client consumes. */
  onResponse?: (path: string, body: unknown) => void;
}

function query(params: Record<string, string | number | undefined>): string {
  const search = new URLSearchParams();
  for (const [key, value] of Object.entries(params)) {
    if (value !== undefined) search.set(key, String(value));
  }
  const encoded = search.toString();
  return encoded ? `?${encoded}` : "";
}

/** Typed client for the review service; all state lives server-side. */
export class ApiClient {
  private readonly base: string;
  private readonly token?: string;
  private readonly fetchImpl: FetchLike;
  private readonly onResponse?: (path: string, body: unknown) => void;

  constructor(options: ClientOptions = {}) {
    this.base = options.base ?? "";
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? ((input, init) => fetch(input, init));
    this.onResponse = options.onResponse;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["content-type"] = "application/json";
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    const response = await this.fetchImpl(this.base + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    let parsed: unknown = null;
    if (text) {
      try {
        parsed = JSON.parse(text);
      } catch {
        parsed = text;
      }
    }
    if (!response.ok) {
      const payload = (parsed ?? {}) as { code?: string; message?: string; detail?: unknown };
      const detail = typeof payload.detail === "string" ? payload.detail : undefined;
      throw new ApiError(
        response.status,
        payload.code ?? "http",
        payload.message ?? detail ?? `request failed with status ${response.status}`,
      );
    }
    this.onResponse?.(path, parsed);
    return parsed as T;
  }

  // --- reads ---------------------------------------------------------------

  articles(state?: string): Promise<{ articles: ArticleRecord[] }> {
    return this.request("GET", `/articles${query({ state })}`);
  }

  queue(rater: string, stage: Stage): Promise<QueueResponse> {
    return this.request("GET", `/queue${query({ rater, stage })}`);
  }

  conflicts(stage?: Stage): Promise<{ conflicts: Conflict[] }> {
    return this.request("GET", `/conflicts${query({ stage })}`);
  }

  venuesPending(): Promise<{ pending: string[] }> {
    return this.request("GET", "/venues/pending");
  }

  venuesSuggest(q: string, k?: number): Promise<{ suggestions: VenueSuggestion[] }> {
    return this.request("GET", `/venues/suggest${query({ q, k })}`);
  }

  duplicates(threshold?: number): Promise<{ pairs: DuplicatePair[] }> {
    return this.request("GET", `/duplicates${query({ threshold })}`);
  }

  report(): Promise<{ rows: ReportRow[] }> {
    return this.request("GET", "/report");
  }

  job(id: string): Promise<JobStatus> {
    return this.request("GET", `/jobs/${id}`);
  }

  // --- mutations -----------------------------------------------------------

  decide(rater: string, articleId: string, stage: Stage, verdict: Verdict): Promise<{ recorded: boolean }> {
    return this.request("POST", "/decisions", {
      rater,
      article_id: articleId,
      stage,
      verdict,
    });
  }

  closeStage(stage: Stage): Promise<StageCloseResult> {
    return this.request("POST", `/decisions/close${query({ stage })}`);
  }

  consensus(articleId: string, stage: Stage, verdict: Verdict, by: string): Promise<{ resolved: string }> {
    return this.request("POST", "/consensus", {
      article_id: articleId,
      stage,
      verdict,
      by,
    });
  }

  rankVenue(venue: string, rank: string, by: string, force = false): Promise<VenueEntry> {
    return this.request("POST", "/venues/rank", {
      venue,
      rank,
      source: "manual",
      by,
      force,
    });
  }

  resolveDuplicate(
    articleA: string,
    articleB: string,
    resolution: "same" | "different",
    by: string,
  ): Promise<{ resolution: string; demoted: string | null }> {
    return this.request("POST", "/duplicates/resolve", {
      article_a: articleA,
      article_b: articleB,
      resolution,
      by,
    });
  }

  startSnowball(direction?: string): Promise<JobStatus> {
    return this.request("POST", "/jobs/snowball", direction ? { direction } : {});
  }
}
