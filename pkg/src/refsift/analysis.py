"""Full-text extraction, prompt-based topic modeling, per-article task
prompts, and the evaluation harness for both.

The topic pipeline follows the generate / refine / assign shape: gather
candidate topics document by document, merge near-duplicate labels, then
assign each document to topics from the final list. All model traffic
goes through a ModelSession so every response lands in an audit log with
full prompt provenance.

Prompt templates live in the prompts/ package directory as plain text
with str.format placeholders ({document}, {existing_topics}, {topics},
{mode_note}, {task}, {responses}, {label_a}...) and can be edited
without touching code.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import statistics
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import requests

from . import pdftext
from .errors import AnalysisError, ModelError
from .models import (
    RUBRIC_CRITERIA,
    DocumentText,
    RubricScore,
    State,
    Topic,
    TopicAssignment,
)
from .store import ReviewStore, utc_now
from .textnorm import normalize_text
from .venues import title_similarity

logger = logging.getLogger(__name__)

DEFAULT_TOKEN_BUDGET = 6000
CHUNK_OVERLAP = 0.1

_PROMPT_DIR = Path(__file__).with_name("prompts")


def load_prompt(name: str) -> str:
    return (_PROMPT_DIR / f"{name}.txt").read_text(encoding="utf-8")


def estimate_tokens(text: str) -> int:
    """Rough token count; four characters per token is close enough for
    budget decisions."""
    return max(1, math.ceil(len(text) / 4))


# -- extraction ------------------------------------------------------


def fetch_and_extract(
    store: ReviewStore, article_id: str, path: str, *, out_dir: str | None = None
) -> DocumentText:
    """Turn a downloaded article file into plain text for the pipeline.

    Sidecar .txt files pass through; .pdf goes through the built-in
    extractor. An empty result usually means a scanned PDF and is an
    error rather than a silent blank document.
    """
    article = store.get(article_id)
    if article.state != State.INCLUDED:
        raise AnalysisError(f"article {article_id} is {article.state}, not included")
    if not os.path.exists(path):
        raise AnalysisError(f"no such file: {path}")
    if path.lower().endswith(".pdf"):
        try:
            text = pdftext.extract_text(path)
        except ValueError as exc:
            raise AnalysisError(str(exc)) from exc
        source = "pdf-extractor"
    else:
        text = Path(path).read_text(encoding="utf-8", errors="replace")
        source = "sidecar-text"
    if not text.strip():
        raise AnalysisError(f"empty extraction from {path}")
    doc = DocumentText(
        article_id=article_id,
        text=text,
        token_estimate=estimate_tokens(text),
        extraction_source=source,
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        Path(out_dir, f"{article_id}.txt").write_text(text, encoding="utf-8")
    return doc


# -- models ----------------------------------------------------------


class ChatModel:
    name = "abstract"

    def invoke(
        self, prompt: str, *, system: str | None = None, temperature: float = 0.0, seed: int | None = None
    ) -> str:
        raise NotImplementedError


class MockChatModel(ChatModel):
    """Scripted model for tests and dry runs.

    Either a fixed response list consumed in call order, or a responder
    callable for order-independent behaviour.
    """

    name = "mock"

    def __init__(self, script: Sequence[str] | None = None, responder: Callable[[str], str] | None = None):
        if (script is None) == (responder is None):
            raise ValueError("pass exactly one of script or responder")
        self._script = list(script) if script is not None else None
        self._responder = responder
        self._lock = threading.Lock()
        self.calls: list[str] = []

    def invoke(self, prompt, *, system=None, temperature=0.0, seed=None):
        with self._lock:
            self.calls.append(prompt)
            if self._responder is not None:
                return self._responder(prompt)
            if not self._script:
                raise ModelError("mock script exhausted")
            return self._script.pop(0)


class HttpChatModel(ChatModel):
    """Chat-completions client for an OpenAI-style endpoint. Key comes
    from LLM_API_KEY unless passed explicitly."""

    def __init__(
        self,
        model: str,
        base_url: str,
        *,
        api_key: str | None = None,
        timeout: float = 120.0,
        attempts: int = 3,
        sleep=time.sleep,
    ):
        self.name = model
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY")
        self.timeout = timeout
        self.attempts = attempts
        self.sleep = sleep
        self.session = requests.Session()

    def invoke(self, prompt, *, system=None, temperature=0.0, seed=None):
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": prompt})
        payload = {"model": self.name, "messages": messages, "temperature": temperature}
        if seed is not None:
            payload["seed"] = seed
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last = None
        for attempt in range(self.attempts):
            if attempt:
                self.sleep(2**attempt)
            try:
                response = self.session.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last = ModelError(f"model request failed: {exc}")
                continue
            if response.status_code >= 500 or response.status_code == 429:
                last = ModelError(f"model endpoint returned {response.status_code}")
                continue
            if response.status_code != 200:
                raise ModelError(f"model endpoint returned {response.status_code}: {response.text[:200]}")
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError) as exc:
                raise ModelError(f"malformed model response: {exc}") from exc
        raise last


class ModelSession:
    """Wraps a ChatModel with fixed sampling settings and an append-only
    JSONL audit trail carrying full prompt provenance."""

    def __init__(
        self,
        model: ChatModel,
        *,
        audit_path: str | None = None,
        temperature: float = 0.0,
        seed: int | None = 0,
        clock=utc_now,
    ):
        self.model = model
        self.audit_path = audit_path
        self.temperature = temperature
        self.seed = seed
        self.clock = clock
        self.log: list[dict] = []
        self._lock = threading.Lock()

    def invoke(self, prompt: str, *, system: str | None = None, operation: str = "task") -> str:
        response = self.model.invoke(prompt, system=system, temperature=self.temperature, seed=self.seed)
        entry = {
            "timestamp": self.clock(),
            "model": self.model.name,
            "operation": operation,
            "prompt": prompt,
            "system": system,
            "temperature": self.temperature,
            "seed": self.seed,
            "response": response,
        }
        with self._lock:
            self.log.append(entry)
            if self.audit_path:
                with open(self.audit_path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")
        return response


# -- topic pipeline --------------------------------------------------


def topic_slug(label: str) -> str:
    slug = normalize_text(label).replace(" ", "-")
    return f"t-{slug}" if slug else "t-unnamed"


def _parse_topic_lines(text: str) -> list[tuple[str, str]]:
    """Lines of the form "Label: text", tolerating bullets and numbering."""
    pairs = []
    for raw in text.splitlines():
        line = raw.strip().lstrip("-*•").strip()
        while line[:1].isdigit():
            head, _, rest = line.partition(".")
            if head.isdigit() and rest:
                line = rest.strip()
            else:
                break
        if ":" not in line:
            continue
        label, _, description = line.partition(":")
        label = label.strip()
        if label:
            pairs.append((label, description.strip()))
    return pairs


def _topic_list_text(topics: Sequence[Topic]) -> str:
    if not topics:
        return "(none yet)"
    return "\n".join(f"- {t.label}: {t.description}" for t in topics)


def generate_topics(
    session: ModelSession,
    corpus: Sequence[DocumentText],
    *,
    sample_size: int | None = None,
    seed_topics: Sequence[Topic] | None = None,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> list[Topic]:
    """First pass: walk the corpus and collect labeled topics, skipping
    labels already seen (case and punctuation insensitive)."""
    if not corpus:
        raise AnalysisError("cannot generate topics from an empty corpus")
    docs = sorted(corpus, key=lambda d: d.article_id)
    if sample_size is not None:
        if sample_size < 1:
            raise AnalysisError(f"sample_size must be positive, got {sample_size}")
        docs = docs[:sample_size]
    template = load_prompt("topic_generate")
    topics: list[Topic] = list(seed_topics or [])
    seen = {normalize_text(t.label) for t in topics}
    for doc in docs:
        snippet = doc.text[: token_budget * 4]
        prompt = template.format(existing_topics=_topic_list_text(topics), document=snippet)
        response = session.invoke(prompt, operation="topic-generate")
        for label, description in _parse_topic_lines(response):
            key = normalize_text(label)
            if key in seen:
                continue
            seen.add(key)
            topics.append(Topic(topic_id=topic_slug(label), label=label, description=description))
    if not topics:
        raise AnalysisError("the model produced no topics for this corpus")
    return topics


def refine_topics(
    session: ModelSession, topics: Sequence[Topic], *, threshold: float = 0.7
) -> list[Topic]:
    """Merge near-duplicate topics. Label pairs whose similarity clears
    the threshold go to the model, which either merges them or keeps
    both; identical labels merge without a call."""
    survivors: list[Topic | None] = list(topics)
    if len(topics) < 2:
        return [t for t in survivors if t is not None]
    template = load_prompt("topic_merge")
    for i in range(len(survivors)):
        for j in range(i + 1, len(survivors)):
            a, b = survivors[i], survivors[j]
            if a is None or b is None:
                continue
            if normalize_text(a.label) == normalize_text(b.label):
                survivors[j] = None
                continue
            if title_similarity(a.label, b.label) < threshold:
                continue
            prompt = template.format(
                label_a=a.label,
                description_a=a.description,
                label_b=b.label,
                description_b=b.description,
            )
            response = session.invoke(prompt, operation="topic-merge")
            first = response.strip().splitlines()[0] if response.strip() else ""
            if not first.upper().startswith("MERGE"):
                continue
            _, _, rest = first.partition(":")
            label, _, description = rest.strip().partition(":")
            label = label.strip()
            if not label:
                logger.warning("merge response missing a label, keeping both topics")
                continue
            merged = Topic(
                topic_id=topic_slug(label),
                label=label,
                description=description.strip() or f"{a.description} {b.description}".strip(),
            )
            survivors[i] = merged
            survivors[j] = None
    return [t for t in survivors if t is not None]


def assign_topics(
    session: ModelSession,
    doc: DocumentText,
    topics: list[Topic],
    *,
    mode: str = "closed",
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> TopicAssignment:
    """Assign one document to topics.

    Closed mode only accepts labels from the list; open mode turns
    unknown labels into provisional topics, appended to the passed list
    so the caller sees them. A response naming no usable topic gets one
    repair prompt before the failure surfaces.
    """
    if mode not in ("closed", "open"):
        raise AnalysisError(f"mode must be closed or open, got {mode!r}")
    if mode == "closed" and not topics:
        raise AnalysisError("closed-mode assignment needs a non-empty topic list")
    by_norm = {normalize_text(t.label): t for t in topics}
    mode_note = (
        "Use only labels from the list above."
        if mode == "closed"
        else "Prefer labels from the list; add a new label only for an important missing topic."
    )
    template = load_prompt("topic_assign")
    prompt = template.format(
        topics=_topic_list_text(topics),
        mode_note=mode_note,
        document=doc.text[: token_budget * 4],
    )
    response = session.invoke(prompt, operation="topic-assign")

    def collect(text: str, allow_new: bool) -> tuple[set[str], dict[str, str]]:
        ids: set[str] = set()
        rationales: dict[str, str] = {}
        for label, rationale in _parse_topic_lines(text):
            known = by_norm.get(normalize_text(label))
            if known is not None:
                ids.add(known.topic_id)
                rationales.setdefault(known.topic_id, rationale)
            elif allow_new:
                fresh = Topic(
                    topic_id=topic_slug(label),
                    label=label,
                    description=rationale or "proposed during assignment",
                    provisional=True,
                )
                topics.append(fresh)
                by_norm[normalize_text(label)] = fresh
                ids.add(fresh.topic_id)
                rationales.setdefault(fresh.topic_id, rationale)
            else:
                logger.info("ignoring out-of-set label %r for %s", label, doc.article_id)
        return ids, rationales

    ids, rationales = collect(response, allow_new=(mode == "open"))
    if not ids:
        repair = load_prompt("topic_repair").format(topics=_topic_list_text(topics))
        response = session.invoke(repair, operation="topic-assign-repair")
        ids, rationales = collect(response, allow_new=False)
    if not ids:
        raise AnalysisError(f"model named no valid topic for {doc.article_id}")
    return TopicAssignment(article_id=doc.article_id, topic_ids=sorted(ids), rationales=rationales)


# -- per-article tasks -----------------------------------------------


def chunk_text(text: str, chunks: int, *, overlap: float = CHUNK_OVERLAP) -> list[str]:
    """Split into exactly `chunks` windows with backward overlap,
    snapping cut points to nearby paragraph breaks when possible."""
    if chunks < 1:
        raise ValueError(f"chunks must be positive, got {chunks}")
    if chunks == 1:
        return [text]
    bounds = [round(len(text) * i / chunks) for i in range(chunks + 1)]
    window = max(1, len(text) // chunks // 10)
    for i in range(1, chunks):
        cut = bounds[i]
        snapped = text.rfind("\n\n", cut - window, cut + window)
        if snapped > bounds[i - 1] and snapped + 2 < bounds[i + 1]:
            bounds[i] = snapped + 2
    pad = int(len(text) / chunks * overlap)
    return [text[max(0, bounds[i] - pad) : bounds[i + 1]] for i in range(chunks)]


def run_task(
    session: ModelSession,
    doc: DocumentText,
    task_prompt: str,
    *,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> str:
    """Run a free-form task prompt over one document, chunking and
    recombining when the document exceeds the context budget."""
    if not task_prompt.strip():
        raise AnalysisError("task prompt is empty")
    template = load_prompt("task_run")
    if doc.token_estimate <= token_budget:
        return session.invoke(template.format(task=task_prompt, document=doc.text), operation="task")
    chunks = chunk_text(doc.text, math.ceil(doc.token_estimate / token_budget))
    partials = [
        session.invoke(template.format(task=task_prompt, document=chunk), operation="task-chunk")
        for chunk in chunks
    ]
    joined = "\n\n".join(f"Part {i + 1}:\n{part}" for i, part in enumerate(partials))
    combine = load_prompt("task_combine").format(task=task_prompt, responses=joined)
    if estimate_tokens(combine) > token_budget:
        raise AnalysisError("combined chunk answers still exceed the context budget")
    return session.invoke(combine, operation="task-combine")


def run_task_over_corpus(
    session: ModelSession,
    docs: Sequence[DocumentText],
    task_prompt: str,
    *,
    task_name: str = "task",
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    workers: int = 1,
    out_path: str | None = None,
) -> list[dict]:
    """Apply one task prompt to every document; results are committed in
    article-id order no matter how the calls interleave."""
    ordered = sorted(docs, key=lambda d: d.article_id)
    responses: dict[str, str] = {}
    if workers <= 1:
        for doc in ordered:
            responses[doc.article_id] = run_task(session, doc, task_prompt, token_budget=token_budget)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                doc.article_id: pool.submit(run_task, session, doc, task_prompt, token_budget=token_budget)
                for doc in ordered
            }
            for article_id, future in futures.items():
                responses[article_id] = future.result()
    records = [
        {
            "article_id": doc.article_id,
            "task": task_name,
            "response": responses[doc.article_id],
            "model": session.model.name,
            "timestamp": session.clock(),
            "verified": False,
        }
        for doc in ordered
    ]
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as handle:
            for record in records:
                handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    return records


# -- evaluation ------------------------------------------------------


def evaluate_assignments(
    predicted: dict[str, set[str]],
    truth: dict[str, set[str]],
    *,
    average: str = "macro",
) -> dict[str, float]:
    """Precision and recall of predicted topic sets against ground truth.

    Macro averages per-article scores; an empty prediction against a
    non-empty truth scores precision 0, and empty-vs-empty counts as
    perfect. The micro option pools counts across articles instead.
    """
    if average not in ("macro", "micro"):
        raise AnalysisError(f"average must be macro or micro, got {average!r}")
    if set(predicted) != set(truth):
        diff = sorted(set(predicted) ^ set(truth))
        raise AnalysisError("prediction and truth cover different articles: " + ", ".join(diff))
    if not truth:
        raise AnalysisError("nothing to evaluate")
    if average == "micro":
        hit = sum(len(predicted[k] & truth[k]) for k in truth)
        total_p = sum(len(predicted[k]) for k in truth)
        total_t = sum(len(truth[k]) for k in truth)
        precision = hit / total_p if total_p else (1.0 if total_t == 0 else 0.0)
        recall = hit / total_t if total_t else 1.0
        return {"precision": precision, "recall": recall}
    precisions = []
    recalls = []
    for key in truth:
        p, t = predicted[key], truth[key]
        hit = len(p & t)
        if p:
            precisions.append(hit / len(p))
        else:
            precisions.append(1.0 if not t else 0.0)
        recalls.append(hit / len(t) if t else 1.0)
    return {"precision": statistics.fmean(precisions), "recall": statistics.fmean(recalls)}


# -- rubric ----------------------------------------------------------


@dataclass
class RubricBook:
    """Collected rubric scores, one row per (summary, rater)."""

    scores: list[RubricScore] = field(default_factory=list)

    def record(self, score: RubricScore) -> None:
        for existing in self.scores:
            if existing.summary_id == score.summary_id and existing.rater == score.rater:
                raise AnalysisError(
                    f"rater {score.rater} already scored summary {score.summary_id}"
                )
        self.scores.append(score)

    def aggregate(self) -> dict[str, dict[str, float]]:
        return aggregate_rubric(self.scores)


def load_rubric_csv(path: str) -> list[RubricScore]:
    expected = ["summary_id", "rater", *RUBRIC_CRITERIA]
    scores = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != expected:
            raise AnalysisError(f"rubric file needs columns {','.join(expected)}")
        for row in reader:
            scores.append(
                RubricScore(
                    summary_id=row["summary_id"],
                    rater=row["rater"],
                    **{c: int(row[c]) for c in RUBRIC_CRITERIA},
                )
            )
    return scores


def aggregate_rubric(scores: Iterable[RubricScore]) -> dict[str, dict[str, float]]:
    """Per-criterion mean and sample standard deviation.

    Raters scoring the same summary are averaged first, so each summary
    contributes one value regardless of how many people rated it.
    """
    by_summary: dict[str, list[RubricScore]] = {}
    for score in scores:
        by_summary.setdefault(score.summary_id, []).append(score)
    if not by_summary:
        raise AnalysisError("no rubric scores to aggregate")
    out = {}
    for criterion in RUBRIC_CRITERIA:
        values = [
            statistics.fmean(getattr(s, criterion) for s in group)
            for group in by_summary.values()
        ]
        out[criterion] = {
            "mean": statistics.fmean(values),
            "std": statistics.stdev(values) if len(values) > 1 else 0.0,
            "n": len(values),
        }
    return out
