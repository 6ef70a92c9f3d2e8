export type QueueAction =
  | "include"
  | "exclude"
  | "skip"
  | "open-link"
  | "close-stage"
  | "refresh";

const BINDINGS: Record<string, QueueAction> = {
  i: "include",
  "1": "include",
  x: "exclude",
  "2": "exclude",
  s: "skip",
  o: "open-link",
  c: "close-stage",
  r: "refresh",
};

/**
 * Map a key press to a queue action. Returns null for unbound keys and
 * whenever the press happened inside a form field, so typing a venue
 * name never records a verdict.
 */
export function actionFor(key: string, targetTag?: string): QueueAction | null {
  const tag = (targetTag ?? "").toUpperCase();
  if (tag === "INPUT" || tag === "TEXTAREA" || tag === "SELECT") return null;
  return BINDINGS[key.toLowerCase()] ?? null;
}
