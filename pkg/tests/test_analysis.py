"""Document analysis: chunking, scripted model pipelines, metrics, rubric."""

from __future__ import annotations

import json
import math

import pytest

from refsift.analysis import (
    DEFAULT_TOKEN_BUDGET,
    HttpChatModel,
    MockChatModel,
    ModelSession,
    RubricBook,
    aggregate_rubric,
    assign_topics,
    chunk_text,
    estimate_tokens,
    evaluate_assignments,
    fetch_and_extract,
    generate_topics,
    load_prompt,
    load_rubric_csv,
    refine_topics,
    run_task,
    run_task_over_corpus,
    topic_slug,
)
from refsift.errors import AnalysisError, ModelError
from refsift.models import DocumentText, RubricScore, State, Topic
from refsift.store import ReviewStore

from conftest import make_article


def _doc(article_id="a1", text="Some document text about testing.", token_estimate=None):
    return DocumentText(
        article_id=article_id,
        text=text,
        token_estimate=token_estimate or estimate_tokens(text),
        extraction_source="sidecar-text",
    )


def _session(script=None, responder=None, clock=None, **kw):
    model = MockChatModel(script=script, responder=responder)
    return ModelSession(model, clock=clock or (lambda: "2025-06-01T00:00:00+00:00"), **kw)


def _topic(label, description="about it"):
    return Topic(topic_id=topic_slug(label), label=label, description=description)


# ── tokens and chunking ──────────────────────────────────────────────────


def test_estimate_tokens_quarters_characters():
    assert estimate_tokens("") == 1
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2
    assert estimate_tokens("x" * 4000) == 1000


def test_chunk_count_is_exact():
    for size, chunks in [(10, 1), (1000, 3), (997, 4), (5000, 7)]:
        pieces = chunk_text("x" * size, chunks)
        assert len(pieces) == chunks


def test_chunks_partition_without_overlap():
    text = "x" * 1000
    pieces = chunk_text(text, 4, overlap=0.0)
    assert "".join(pieces) == text


def test_chunks_overlap_backward():
    text = "".join(chr(ord("a") + i % 26) for i in range(1000))
    pieces = chunk_text(text, 4, overlap=0.1)
    pad = int(1000 / 4 * 0.1)
    assert pieces[1][:pad] == pieces[0][-pad:]
    # the first chunk never reaches before the start
    assert pieces[0] == text[: len(pieces[0])]


def test_chunk_snaps_to_paragraph_breaks():
    text = "A" * 300 + "\n\n" + "B" * 300
    pieces = chunk_text(text, 2, overlap=0.0)
    assert pieces[0] == "A" * 300 + "\n\n"
    assert pieces[1] == "B" * 300


def test_chunk_validates_count():
    with pytest.raises(ValueError):
        chunk_text("abc", 0)
    assert chunk_text("abc", 1) == ["abc"]


# ── extraction ───────────────────────────────────────────────────────────


@pytest.fixture()
def included_store(clock):
    store = ReviewStore.create(None, clock=clock)
    art = make_article("Included Work")
    store.upsert_article(art)
    for state in (State.IN_TITLE_SCREEN, State.IN_FULL_SCREEN, State.INCLUDED):
        store.transition(art.id, state, "t")
    return store, art


def test_fetch_and_extract_sidecar(included_store, tmp_path):
    store, art = included_store
    path = tmp_path / "paper.txt"
    path.write_text("Plain text body of the paper.", encoding="utf-8")
    doc = fetch_and_extract(store, art.id, str(path))
    assert doc.text == "Plain text body of the paper."
    assert doc.extraction_source == "sidecar-text"
    assert doc.token_estimate == estimate_tokens(doc.text)


def test_fetch_and_extract_pdf(included_store, tmp_path):
    from reportlab.pdfgen import canvas

    store, art = included_store
    pdf = tmp_path / "paper.pdf"
    doc_canvas = canvas.Canvas(str(pdf))
    doc_canvas.drawString(72, 700, "Extracted sentence from the PDF body.")
    doc_canvas.save()
    doc = fetch_and_extract(store, art.id, str(pdf), out_dir=str(tmp_path / "texts"))
    assert "Extracted sentence from the PDF body." in doc.text
    assert doc.extraction_source == "pdf-extractor"
    cached = tmp_path / "texts" / f"{art.id}.txt"
    assert cached.read_text(encoding="utf-8") == doc.text


def test_fetch_and_extract_guards(included_store, tmp_path, clock):
    store, art = included_store
    with pytest.raises(AnalysisError):
        fetch_and_extract(store, art.id, str(tmp_path / "missing.txt"))
    empty = tmp_path / "empty.txt"
    empty.write_text("   \n", encoding="utf-8")
    with pytest.raises(AnalysisError):
        fetch_and_extract(store, art.id, str(empty))
    bogus = tmp_path / "fake.pdf"
    bogus.write_bytes(b"not a pdf at all")
    with pytest.raises(AnalysisError):
        fetch_and_extract(store, art.id, str(bogus))
    pending = make_article("Still Pending")
    store.upsert_article(pending)
    path = tmp_path / "fine.txt"
    path.write_text("words", encoding="utf-8")
    with pytest.raises(AnalysisError):
        fetch_and_extract(store, pending.id, str(path))


# ── models and the audited session ───────────────────────────────────────


def test_mock_model_script_and_exhaustion():
    model = MockChatModel(script=["one", "two"])
    assert model.invoke("p1") == "one"
    assert model.invoke("p2") == "two"
    with pytest.raises(ModelError):
        model.invoke("p3")
    assert model.calls == ["p1", "p2", "p3"]


def test_mock_model_requires_exactly_one_mode():
    with pytest.raises(ValueError):
        MockChatModel()
    with pytest.raises(ValueError):
        MockChatModel(script=["x"], responder=lambda p: p)
    model = MockChatModel(responder=lambda p: p.upper())
    assert model.invoke("echo") == "ECHO"


def test_session_audit_trail(tmp_path, clock):
    audit = tmp_path / "llm.jsonl"
    session = _session(script=["answer"], clock=clock, audit_path=str(audit),
                       temperature=0.3, seed=17)
    out = session.invoke("the prompt", system="the system", operation="topic-generate")
    assert out == "answer"
    assert len(session.log) == 1
    entry = session.log[0]
    assert entry["operation"] == "topic-generate"
    assert entry["prompt"] == "the prompt"
    assert entry["system"] == "the system"
    assert entry["temperature"] == 0.3
    assert entry["seed"] == 17
    assert entry["response"] == "answer"
    on_disk = [json.loads(line) for line in audit.read_text(encoding="utf-8").splitlines()]
    assert on_disk == [entry]


class _FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


class _FakeHttp:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def post(self, url, *, json, headers, timeout):
        self.requests.append({"url": url, "json": json, "headers": headers})
        return self.responses.pop(0)


def _ok_response(content="hello"):
    return _FakeResponse(200, {"choices": [{"message": {"content": content}}]})


def test_http_model_success_and_payload_shape():
    model = HttpChatModel("m-test", "https://llm.test/v1", api_key="sk-x", sleep=lambda _d: None)
    fake = _FakeHttp([_ok_response("out")])
    model.session = fake
    assert model.invoke("ask", system="sys", temperature=0.1, seed=3) == "out"
    req = fake.requests[0]
    assert req["url"] == "https://llm.test/v1/chat/completions"
    assert req["headers"]["Authorization"] == "Bearer sk-x"
    assert req["json"]["messages"][0] == {"role": "system", "content": "sys"}
    assert req["json"]["seed"] == 3


def test_http_model_retries_transient_failures():
    model = HttpChatModel("m", "https://llm.test/v1", api_key=None, sleep=lambda _d: None)
    model.session = _FakeHttp([_FakeResponse(503), _FakeResponse(429), _ok_response("ok")])
    assert model.invoke("ask") == "ok"


def test_http_model_gives_up_and_hard_fails():
    model = HttpChatModel("m", "https://llm.test/v1", attempts=2, sleep=lambda _d: None)
    model.session = _FakeHttp([_FakeResponse(500), _FakeResponse(500)])
    with pytest.raises(ModelError):
        model.invoke("ask")
    model.session = _FakeHttp([_FakeResponse(401, text="bad key")])
    with pytest.raises(ModelError):
        model.invoke("ask")
    model.session = _FakeHttp([_FakeResponse(200, {"unexpected": True})])
    with pytest.raises(ModelError):
        model.invoke("ask")


# ── prompts ──────────────────────────────────────────────────────────────


def test_prompt_templates_carry_their_placeholders():
    for name, needles in {
        "topic_generate": ("{existing_topics}", "{document}"),
        "topic_merge": ("{label_a}", "{description_b}"),
        "topic_assign": ("{topics}", "{mode_note}", "{document}"),
        "topic_repair": ("{topics}",),
        "task_run": ("{task}", "{document}"),
        "task_combine": ("{task}", "{responses}"),
    }.items():
        text = load_prompt(name)
        for needle in needles:
            assert needle in text, f"{name} lost {needle}"


def test_topic_slug():
    assert topic_slug("Retrieval-Augmented Generation") == "t-retrieval-augmented-generation"
    assert topic_slug("  ") == "t-unnamed"


# ── topic generation ─────────────────────────────────────────────────────


def test_generate_topics_collects_and_dedupes():
    session = _session(
        script=[
            "Agents: systems that act\nEvaluation: how quality is measured",
            "- agents: duplicate casing ignored\n- Benchmarks: standard test sets",
        ]
    )
    docs = [_doc("a2", "second doc"), _doc("a1", "first doc")]
    topics = generate_topics(session, docs)
    assert [t.label for t in topics] == ["Agents", "Evaluation", "Benchmarks"]
    assert topics[0].topic_id == "t-agents"
    # docs are visited in article-id order
    assert "first doc" in session.log[0]["prompt"]
    assert "Agents: systems that act" in session.log[1]["prompt"]


def test_generate_topics_respects_seeds_and_sample_size():
    session = _session(script=["Fresh Topic: new ground"])
    seed = _topic("Known Topic", "already here")
    topics = generate_topics(
        session, [_doc("a1"), _doc("a2")], sample_size=1, seed_topics=[seed]
    )
    assert len(session.log) == 1
    assert [t.label for t in topics] == ["Known Topic", "Fresh Topic"]


def test_generate_topics_numbering_tolerated():
    session = _session(script=["1. First Area: description one\n2. Second Area: two"])
    topics = generate_topics(session, [_doc()])
    assert [t.label for t in topics] == ["First Area", "Second Area"]


def test_generate_topics_failure_modes():
    with pytest.raises(AnalysisError):
        generate_topics(_session(script=[]), [])
    with pytest.raises(AnalysisError):
        generate_topics(_session(script=["no colon lines here"]), [_doc()])
    with pytest.raises(AnalysisError):
        generate_topics(_session(script=["x"]), [_doc()], sample_size=0)


# ── topic refinement ─────────────────────────────────────────────────────


def test_refine_merges_identical_labels_without_model_calls():
    session = _session(script=[])
    topics = [_topic("RAG Systems"), _topic("rag systems!")]
    out = refine_topics(session, topics)
    assert [t.label for t in out] == ["RAG Systems"]
    assert session.log == []


def test_refine_asks_model_for_similar_pairs():
    session = _session(script=["MERGE: Agent Evaluation: combined description"])
    topics = [
        _topic("Evaluation of Agents", "a"),
        _topic("Evaluation of LLM Agents", "b"),
        _topic("Completely Different", "c"),
    ]
    out = refine_topics(session, topics, threshold=0.7)
    assert [t.label for t in out] == ["Agent Evaluation", "Completely Different"]
    assert out[0].description == "combined description"
    assert len(session.log) == 1
    assert "Evaluation of Agents" in session.log[0]["prompt"]


def test_refine_keep_answer_leaves_both():
    session = _session(script=["KEEP"])
    topics = [_topic("Evaluation of Agents"), _topic("Evaluation of LLM Agents")]
    out = refine_topics(session, topics)
    assert len(out) == 2


def test_refine_malformed_merge_keeps_both():
    session = _session(script=["MERGE:"])
    topics = [_topic("Evaluation of Agents"), _topic("Evaluation of LLM Agents")]
    out = refine_topics(session, topics)
    assert len(out) == 2


def test_refine_merge_without_description_concatenates():
    session = _session(script=["MERGE: Agent Evaluation"])
    topics = [_topic("Evaluation of Agents", "left"), _topic("Evaluation of LLM Agents", "right")]
    out = refine_topics(session, topics)
    assert out[0].description == "left right"


def test_refine_short_lists_pass_through():
    session = _session(script=[])
    only = [_topic("Lonely")]
    assert refine_topics(session, only) == only


# ── topic assignment ─────────────────────────────────────────────────────


def test_assign_closed_mode_matches_known_labels():
    session = _session(script=["Agents: because it builds one\nUnlisted: ignored"])
    topics = [_topic("Agents"), _topic("Benchmarks")]
    assignment = assign_topics(session, _doc(), topics)
    assert assignment.topic_ids == ["t-agents"]
    assert assignment.rationales == {"t-agents": "because it builds one"}
    assert len(topics) == 2  # closed mode never grows the list


def test_assign_open_mode_adds_provisional_topics():
    session = _session(script=["Agents: known\nSafety Concerns: new angle"])
    topics = [_topic("Agents")]
    assignment = assign_topics(session, _doc(), topics, mode="open")
    assert assignment.topic_ids == ["t-agents", "t-safety-concerns"]
    added = [t for t in topics if t.label == "Safety Concerns"]
    assert len(added) == 1 and added[0].provisional


def test_assign_repair_prompt_rescues_one_bad_response():
    session = _session(script=["nothing usable", "Agents: on reflection"])
    topics = [_topic("Agents")]
    assignment = assign_topics(session, _doc(), topics)
    assert assignment.topic_ids == ["t-agents"]
    operations = [e["operation"] for e in session.log]
    assert operations == ["topic-assign", "topic-assign-repair"]


def test_assign_fails_after_repair():
    session = _session(script=["junk", "more junk"])
    with pytest.raises(AnalysisError):
        assign_topics(session, _doc(), [_topic("Agents")])


def test_assign_validates_inputs():
    session = _session(script=[])
    with pytest.raises(AnalysisError):
        assign_topics(session, _doc(), [], mode="closed")
    with pytest.raises(AnalysisError):
        assign_topics(session, _doc(), [_topic("X")], mode="fuzzy")


# ── free-form tasks ──────────────────────────────────────────────────────


def test_run_task_single_call_when_it_fits():
    session = _session(script=["the summary"])
    doc = _doc(text="short body")
    assert run_task(session, doc, "Summarize this") == "the summary"
    assert session.log[0]["operation"] == "task"
    assert "Summarize this" in session.log[0]["prompt"]
    assert "short body" in session.log[0]["prompt"]
    with pytest.raises(AnalysisError):
        run_task(session, doc, "   ")


def test_run_task_chunks_long_documents():
    session = _session(script=["part one", "part two", "part three", "combined"])
    doc = _doc(text="x" * 1000, token_estimate=250)
    out = run_task(session, doc, "Summarize", token_budget=100)
    assert out == "combined"
    operations = [e["operation"] for e in session.log]
    assert operations == ["task-chunk"] * 3 + ["task-combine"]
    combine_prompt = session.log[-1]["prompt"]
    assert "Part 1:" in combine_prompt and "part three" in combine_prompt


def test_run_task_combine_overflow_is_an_error():
    session = _session(script=["y" * 2000, "y" * 2000, "y" * 2000])
    doc = _doc(text="x" * 1000, token_estimate=250)
    with pytest.raises(AnalysisError):
        run_task(session, doc, "Summarize", token_budget=100)


def test_run_task_over_corpus_commits_in_article_order(tmp_path):
    session = _session(responder=lambda prompt: f"answer-{len(prompt)}")
    docs = [_doc("a9", "long text nine"), _doc("a1", "one"), _doc("a5", "five here")]
    out_path = tmp_path / "answers.jsonl"
    records = run_task_over_corpus(
        session, docs, "Summarize", task_name="summary", out_path=str(out_path)
    )
    assert [r["article_id"] for r in records] == ["a1", "a5", "a9"]
    assert all(r["task"] == "summary" and r["verified"] is False for r in records)
    on_disk = [json.loads(line) for line in out_path.read_text(encoding="utf-8").splitlines()]
    assert on_disk == records


def test_run_task_over_corpus_parallel_matches_serial():
    def build(workers):
        session = _session(responder=lambda prompt: prompt[-12:])
        docs = [_doc(f"a{i}", f"document body {i}") for i in range(6)]
        return [
            (r["article_id"], r["response"])
            for r in run_task_over_corpus(session, docs, "Do it", workers=workers)
        ]

    assert build(1) == build(4)


# ── assignment metrics ───────────────────────────────────────────────────


def test_evaluate_macro_hand_case():
    predicted = {"a": {"t1"}, "b": set()}
    truth = {"a": {"t1", "t2"}, "b": set()}
    out = evaluate_assignments(predicted, truth)
    assert out["precision"] == pytest.approx(1.0)
    assert out["recall"] == pytest.approx(0.75)


def test_evaluate_empty_prediction_conventions():
    out = evaluate_assignments({"a": set()}, {"a": {"t1"}})
    assert out == {"precision": 0.0, "recall": 0.0}
    out = evaluate_assignments({"a": {"t1"}}, {"a": set()})
    assert out["precision"] == 0.0
    assert out["recall"] == 1.0


def test_evaluate_micro_pools_counts():
    predicted = {"a": {"t1"}, "b": {"t9"}}
    truth = {"a": {"t1", "t2"}, "b": set()}
    out = evaluate_assignments(predicted, truth, average="micro")
    assert out["precision"] == pytest.approx(0.5)
    assert out["recall"] == pytest.approx(0.5)


def test_evaluate_validates_inputs():
    with pytest.raises(AnalysisError):
        evaluate_assignments({"a": set()}, {"b": set()})
    with pytest.raises(AnalysisError):
        evaluate_assignments({}, {})
    with pytest.raises(AnalysisError):
        evaluate_assignments({"a": set()}, {"a": set()}, average="weighted")


# ── rubric aggregation ───────────────────────────────────────────────────


def _score(summary_id, rater, value):
    return RubricScore(summary_id, rater, value, value, value, value)


def test_rubric_book_rejects_double_scoring():
    book = RubricBook()
    book.record(_score("s1", "r1", 4))
    book.record(_score("s1", "r2", 5))
    with pytest.raises(AnalysisError):
        book.record(_score("s1", "r1", 3))


def test_aggregate_two_summaries_known_std():
    # one summary scored 4, another 5: mean 4.5, sample std ~0.707
    out = aggregate_rubric([_score("s1", "r1", 4), _score("s2", "r1", 5)])
    faith = out["faithfulness"]
    assert faith["mean"] == pytest.approx(4.5)
    assert faith["std"] == pytest.approx(0.7071, abs=1e-4)
    assert faith["n"] == 2


def test_aggregate_averages_raters_per_summary_first():
    scores = [
        _score("s1", "r1", 4), _score("s1", "r2", 4),
        _score("s2", "r1", 4), _score("s2", "r2", 5),
        _score("s3", "r1", 5), _score("s3", "r2", 5),
    ]
    out = aggregate_rubric(scores)["salience"]
    # summary means 4.0, 4.5, 5.0
    assert out["mean"] == pytest.approx(4.5)
    assert out["std"] == pytest.approx(0.5)
    assert out["n"] == 3


def test_aggregate_single_summary_and_empty():
    out = aggregate_rubric([_score("s1", "r1", 3)])
    assert out["structure"] == {"mean": 3.0, "std": 0.0, "n": 1}
    with pytest.raises(AnalysisError):
        aggregate_rubric([])


def test_load_rubric_csv(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text(
        "summary_id,rater,faithfulness,salience,structure,conciseness\n"
        "s1,r1,5,4,3,2\n",
        encoding="utf-8",
    )
    scores = load_rubric_csv(str(path))
    assert len(scores) == 1
    assert scores[0].faithfulness == 5 and scores[0].conciseness == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("summary,rater,faithfulness\na,b,5\n", encoding="utf-8")
    with pytest.raises(AnalysisError):
        load_rubric_csv(str(bad))
