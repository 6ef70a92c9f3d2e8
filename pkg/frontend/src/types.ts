// Response shapes of the review service. Field names mirror the JSON
// payloads exactly so responses can be used without remapping.

export type Stage = "title" | "abstract" | "fulltext";
export type Verdict = "include" | "exclude";

export interface QueueItem {
  article_id: string;
  title: string;
  authors: string[];
  year: number | null;
  venue: string | null;
  url: string | null;
  doi: string | null;
  /** Present on abstract and fulltext queues only. */
  abstract?: string | null;
  /** Metadata gaps flagged by the automated filters, when configured. */
  missing_metadata?: string[];
}

export interface QueueResponse {
  queue: QueueItem[];
  total: number;
}

export interface ArticleRecord {
  id: string;
  title: string;
  normalized_title: string;
  authors: string[];
  year: number | null;
  venue: string | null;
  language: string | null;
  doi: string | null;
  url: string | null;
  abstract: string | null;
  source_ids: Record<string, string>;
  discovered_in_iteration: number;
  discovered_via: string[];
  state: string;
  state_reason: string | null;
  duplicate_of: string | null;
}

export interface Conflict {
  article_id: string;
  stage: string;
  verdicts: Record<string, string>;
}

export interface StageCloseResult {
  stage: string;
  advanced: string[];
  rejected: string[];
  conflicts: Conflict[];
}

export interface VenueEntry {
  venue_name: string;
  normalized_name: string;
  rank: string;
  source: string;
  decided_by: string;
  similarity_used: number | null;
}

export interface VenueSuggestion {
  entry: VenueEntry;
  score: number;
}

export interface DuplicatePair {
  article_a: string;
  article_b: string;
  similarity: number;
  title_a: string;
  title_b: string;
}

export interface ReportRow {
  iteration: string;
  retrieved: number;
  rejected_metadata: number;
  rejected_screening: number;
  approved: number;
  efficiency: string;
}

export interface JobStatus {
  id: string;
  kind: string;
  status: "running" | "done" | "failed";
  result: Record<string, unknown> | null;
  error: string | null;
  started: string;
  finished: string | null;
}
