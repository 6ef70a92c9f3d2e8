import type { ReportRow } from "./types.js";

export function authorLine(authors: string[], year: number | null): string {
  let names: string;
  if (authors.length === 0) {
    names = "unknown authors";
  } else if (authors.length <= 3) {
    names = authors.join(", ");
  } else {
    names = `${authors[0]} and ${authors.length - 1} others`;
  }
  return year === null ? names : `${names} (${year})`;
}

export function stageLabel(stage: string): string {
  return stage === "fulltext" ? "full text" : stage;
}

export function similarityLabel(similarity: number): string {
  return `${(similarity * 100).toFixed(1)}%`;
}

export function progressLabel(position: number, total: number): string {
  if (total === 0) return "queue is empty";
  return `${position} of ${total}`;
}

export function truncate(text: string, max = 280): string {
  if (text.length <= max) return text;
  return `${text.slice(0, max - 1).trimEnd()}…`;
}

/** Printable cells for one report row, in table column order. */
export function reportCells(row: ReportRow): string[] {
  return [
    row.iteration,
    String(row.retrieved),
    String(row.rejected_metadata),
    String(row.rejected_screening),
    String(row.approved),
    row.efficiency,
  ];
}
