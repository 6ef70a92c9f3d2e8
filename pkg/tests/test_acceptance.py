"""End-to-end compliance suite.

Each test here is one release gate, run at full size: synthetic review
logs with known per-iteration counts, randomized citation graphs checked
against brute-force closures, exhaustive verdict grids, and frozen
oracle values computed independently of the implementation. Run with -v
to get one pass/fail line per gate.
"""

from __future__ import annotations

import itertools
import json
import math
import random
import time
from pathlib import Path

from refsift.analysis import (
    DocumentText,
    MockChatModel,
    ModelSession,
    aggregate_rubric,
    assign_topics,
    estimate_tokens,
    evaluate_assignments,
    generate_topics,
    load_rubric_csv,
    refine_topics,
)
from refsift.errors import RefsiftError
from refsift.models import (
    Article,
    ScreeningDecision,
    State,
    VenueRankingEntry,
)
from refsift.reporting import report_rows
from refsift.screening import ScreeningEngine, iteration_reports
from refsift.snowball import auto_screen_driver, run_until_converged
from refsift.sources.mock import MockSource
from refsift.store import ReviewStore, StoreSnapshot
from refsift.textnorm import normalize_text
from refsift.venues import DEFAULT_RANK_TIERS, cosine


def _memory_store(clock=None) -> ReviewStore:
    return ReviewStore.create(None, clock=clock)


def _ticking_clock():
    counter = itertools.count()
    return lambda: f"2025-06-01T00:00:00.{next(counter):06d}+00:00"


INCLUDE_PATH = (State.IN_TITLE_SCREEN, State.IN_FULL_SCREEN, State.INCLUDED)
REJECT_PATH = (State.IN_TITLE_SCREEN, State.TITLE_REJECTED)


# -- gate 1: per-iteration efficiency ---------------------------------

# Synthetic seven-iteration review with known retrieval and approval
# counts; the expected strings are frozen from hand division
# (approved/retrieved to two decimals, 110/1009 for the total).
RETRIEVED = (19, 100, 227, 111, 100, 433, 19)
APPROVED = (5, 30, 22, 18, 25, 10, 0)
EXPECTED_EFFICIENCY = ("0.26", "0.30", "0.10", "0.16", "0.25", "0.02", "0.00")
EXPECTED_TOTAL = "0.11"


def test_efficiency_report_on_synthetic_review_log():
    started = time.monotonic()
    store = _memory_store(clock=_ticking_clock())
    for iteration, (retrieved, approved) in enumerate(zip(RETRIEVED, APPROVED), start=1):
        for i in range(retrieved):
            article = Article.new(
                f"Synthetic record {iteration} {i}", discovered_in_iteration=iteration
            )
            store.upsert_article(article, actor="loadgen")
            path = INCLUDE_PATH if i < approved else REJECT_PATH
            for state in path:
                store.transition(article.id, state, "loadgen")
    rows = report_rows(iteration_reports(store))
    elapsed = time.monotonic() - started

    assert [row["retrieved"] for row in rows[:-1]] == list(RETRIEVED)
    assert [row["approved"] for row in rows[:-1]] == list(APPROVED)
    assert tuple(row["efficiency"] for row in rows[:-1]) == EXPECTED_EFFICIENCY
    assert rows[-1]["iteration"] == "total"
    assert rows[-1]["efficiency"] == EXPECTED_TOTAL
    assert elapsed < 1.0, f"report took {elapsed:.3f}s"


# -- gate 2: snowballing reaches the citation closure -----------------


def _closure(seeds, cites, cited_by, direction):
    frontier = list(seeds)
    seen = set(seeds)
    while frontier:
        node = frontier.pop()
        neighbours = []
        if direction in ("backward", "both"):
            neighbours.extend(cites.get(node, ()))
        if direction in ("forward", "both"):
            neighbours.extend(cited_by.get(node, ()))
        for other in neighbours:
            if other not in seen:
                seen.add(other)
                frontier.append(other)
    return seen


def test_snowballing_matches_brute_force_reachability():
    rng = random.Random(20250601)
    started = time.monotonic()
    for case in range(50):
        n = rng.randint(100, 200) if case % 10 == 0 else rng.randint(4, 40)
        probability = min(1.0, 2.5 / n)
        edges = []
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < probability:
                    edges.append((j, i))  # later work cites earlier work
        if not edges:
            edges.append((1, 0))
        nodes = sorted({node for edge in edges for node in edge})
        cites: dict[int, list[int]] = {}
        cited_by: dict[int, list[int]] = {}
        for citer, cited in edges:
            cites.setdefault(citer, []).append(cited)
            cited_by.setdefault(cited, []).append(citer)

        seeds = rng.sample(nodes, k=min(len(nodes), rng.randint(1, 3)))
        direction = rng.choice(("backward", "forward", "both"))
        expected = {f"Study {node}" for node in _closure(seeds, cites, cited_by, direction)}

        source = MockSource.from_graph([(str(a), str(b)) for a, b in edges])
        store = _memory_store(clock=_ticking_clock())
        store.init_seeds([f"Study {node}" for node in seeds])
        driver = auto_screen_driver(["r1", "r2"], "include")
        result = run_until_converged(
            store, [source], direction, driver, max_iterations=len(nodes) + 2
        )

        included = {a.title for a in store.query(states={State.INCLUDED})}
        assert result.converged, f"case {case} did not converge"
        assert included == expected, f"case {case}: {included ^ expected}"
    assert time.monotonic() - started < 30.0


# -- gate 3: no illegal transition ever commits -----------------------


def test_random_operation_sequences_keep_the_state_machine_safe():
    rng = random.Random(97)
    clock = _ticking_clock()
    for seq in range(10_000):
        store = _memory_store(clock=clock)
        states: dict[str, str] = {}
        ids: list[str] = []
        for op in range(rng.randint(3, 9)):
            if not ids or rng.random() < 0.35:
                article = Article.new(f"Record {seq} {op}")
                store.upsert_article(article, actor="fuzz")
                ids.append(article.id)
                states[article.id] = State.CANDIDATE
                continue
            article_id = rng.choice(ids)
            target = rng.choice(State.ALL)
            reason = "out of scope" if target == State.METADATA_REJECTED else None
            duplicate_of = None
            if target == State.DUPLICATE:
                duplicate_of = rng.choice(ids)  # may be the article itself
            audit_before = len(store.snapshot.audit)
            old_state = states[article_id]
            try:
                store.transition(
                    article_id, target, "fuzz", reason=reason, duplicate_of=duplicate_of
                )
            except RefsiftError:
                assert store.get(article_id).state == old_state
                assert len(store.snapshot.audit) == audit_before
            else:
                assert State.is_legal(old_state, target)
                states[article_id] = target

        live = {
            a.id: [a.state, a.state_reason, a.duplicate_of] for a in store.query()
        }
        replayed = {k: list(v) for k, v in store.replay_states().items()}
        live_bytes = json.dumps(live, sort_keys=True).encode()
        replay_bytes = json.dumps(replayed, sort_keys=True).encode()
        assert live_bytes == replay_bytes, f"sequence {seq} replay drifted"


# -- gate 4: cosine similarity properties -----------------------------


def _random_vector(rng, tokens=20, max_count=9):
    size = rng.randint(1, 6)
    return {f"tok{rng.randint(0, tokens)}": float(rng.randint(1, max_count)) for _ in range(size)}


def test_cosine_properties_and_hand_derived_value():
    rng = random.Random(4242)
    vectors = [_random_vector(rng) for _ in range(1000)]
    for vector in vectors:
        assert abs(cosine(vector, vector) - 1.0) < 1e-12
    for a, b in zip(vectors, vectors[1:]):
        ab = cosine(a, b)
        assert 0.0 <= ab <= 1.0
        assert ab == cosine(b, a)

    left = {"x": 1.0, "y": 1.0}
    right = {"x": 1.0, "y": 1.0, "z": 1.0}
    assert abs(cosine(left, right) - 2.0 / math.sqrt(6.0)) < 1e-9

    entries = [_random_vector(rng) for _ in range(20)]
    for _ in range(100):
        query = _random_vector(rng)
        for scale in (0.25, 3.0, 170.0):
            scaled = {token: count * scale for token, count in query.items()}
            plain_best = max(range(len(entries)), key=lambda i: cosine(query, entries[i]))
            scaled_best = max(range(len(entries)), key=lambda i: cosine(scaled, entries[i]))
            assert plain_best == scaled_best


# -- gate 5: stage closure partitions every verdict combination -------


def test_stage_close_partitions_all_verdict_combinations():
    for rater_count in (2, 3):
        raters = [f"r{i}" for i in range(1, rater_count + 1)]
        combos = list(itertools.product(("include", "exclude"), repeat=rater_count))
        store = _memory_store(clock=_ticking_clock())
        engine = ScreeningEngine(store, raters)
        combo_of = {}
        for i in range(100):
            article = Article.new(f"Synthetic screening case {rater_count} {i}")
            store.upsert_article(article, actor="loadgen")
            store.transition(article.id, State.IN_TITLE_SCREEN, "loadgen")
            combo = combos[i % len(combos)]
            combo_of[article.id] = combo
            for rater, verdict in zip(raters, combo):
                engine.decide(rater, article.id, "title", verdict)

        result = engine.close_stage("title")
        advanced = set(result.advanced)
        rejected = set(result.rejected)
        conflicted = {c.article_id for c in result.conflicts}

        for article_id, combo in combo_of.items():
            if all(v == "include" for v in combo):
                expected_bucket = advanced
                expected_state = State.IN_FULL_SCREEN
            elif all(v == "exclude" for v in combo):
                expected_bucket = rejected
                expected_state = State.TITLE_REJECTED
            else:
                expected_bucket = conflicted
                expected_state = State.IN_TITLE_SCREEN
            assert article_id in expected_bucket
            assert store.get(article_id).state == expected_state
        assert advanced | rejected | conflicted == set(combo_of)
        assert not (advanced & rejected or advanced & conflicted or rejected & conflicted)


# -- gate 6: duplicate endgame before the final export ----------------


def test_duplicate_resolution_trims_the_consolidated_export(tmp_path):
    store = _memory_store(clock=_ticking_clock())
    engine = ScreeningEngine(store, ["r1", "r2"])

    def include(title):
        article = Article.new(title)
        store.upsert_article(article, actor="loadgen")
        for state in INCLUDE_PATH:
            store.transition(article.id, state, "loadgen")
        return article.id

    for i in range(105):
        include(f"single{i}a single{i}b single{i}c")
    planted = []
    for pair in range(3):
        tokens = [f"p{pair}w{j}" for j in range(11)]
        variant = tokens[:5] + [f"p{pair}alt"] + tokens[6:]
        planted.append((include(" ".join(tokens)), include(" ".join(variant))))

    assert len(store.query(states={State.INCLUDED})) == 111
    pairs = engine.duplicate_scan(0.9)
    assert len(pairs) == 3
    assert all(pair.similarity >= 0.9 for pair in pairs)
    found = {tuple(sorted((p.article_a, p.article_b))) for p in pairs}
    assert found == {tuple(sorted(pair)) for pair in planted}

    for pair in pairs:
        engine.resolve_duplicate(pair.article_a, pair.article_b, "same", "r1")

    out = engine.consolidate_final(str(tmp_path / "final"))
    assert out["count"] == "108"
    with open(out["csv"], encoding="utf-8") as handle:
        assert sum(1 for _ in handle) == 109  # header plus 108 articles


# -- gate 7: metrics against an independent set-arithmetic oracle -----


def _oracle_macro(predicted, truth):
    precisions, recalls = [], []
    for key in truth:
        p, t = predicted[key], truth[key]
        overlap = len(p & t)
        precisions.append((overlap / len(p)) if p else (1.0 if not t else 0.0))
        recalls.append((overlap / len(t)) if t else 1.0)
    return math.fsum(precisions) / len(precisions), math.fsum(recalls) / len(recalls)


def _oracle_micro(predicted, truth):
    overlap = sum(len(predicted[k] & truth[k]) for k in truth)
    total_p = sum(len(predicted[k]) for k in truth)
    total_t = sum(len(truth[k]) for k in truth)
    precision = overlap / total_p if total_p else (1.0 if total_t == 0 else 0.0)
    recall = overlap / total_t if total_t else 1.0
    return precision, recall


def test_assignment_metrics_match_the_oracle_exactly():
    rng = random.Random(1312)
    topics = [f"t{i}" for i in range(8)]
    for _ in range(200):
        articles = [f"a{i}" for i in range(rng.randint(1, 10))]
        predicted = {a: set(rng.sample(topics, k=rng.randint(0, 4))) for a in articles}
        truth = {a: set(rng.sample(topics, k=rng.randint(0, 4))) for a in articles}

        macro = evaluate_assignments(predicted, truth, average="macro")
        expected_p, expected_r = _oracle_macro(predicted, truth)
        assert macro["precision"] == expected_p
        assert macro["recall"] == expected_r

        micro = evaluate_assignments(predicted, truth, average="micro")
        expected_p, expected_r = _oracle_micro(predicted, truth)
        assert micro["precision"] == expected_p
        assert micro["recall"] == expected_r


def test_rubric_aggregation_reproduces_frozen_statistics(tmp_path):
    # 27 summaries scored by two raters: one (4,4), three (4,5), the
    # remaining twenty-three (5,5). Averaging within each summary first
    # gives mean 4.907 and sample std 0.242, frozen by hand beforehand.
    pairs = [(4, 4)] + [(4, 5)] * 3 + [(5, 5)] * 23
    path = tmp_path / "scores.csv"
    lines = ["summary_id,rater,faithfulness,salience,structure,conciseness"]
    for i, (first, second) in enumerate(pairs, start=1):
        lines.append(f"s{i:02d},r1,{first},{first},{first},{first}")
        lines.append(f"s{i:02d},r2,{second},{second},{second},{second}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    aggregate = aggregate_rubric(load_rubric_csv(str(path)))
    stats = aggregate["faithfulness"]
    assert stats["n"] == 27
    assert f"{stats['mean']:.3f}" == "4.907"
    assert f"{stats['std']:.3f}" == "0.242"


# -- gate 8: scripted topic pipeline determinism ----------------------

TOPIC_LABELS = [f"Subject{i:02d}" for i in range(1, 18)]


def _pipeline_script():
    batches = [TOPIC_LABELS[0:4], TOPIC_LABELS[4:8], TOPIC_LABELS[8:12],
               TOPIC_LABELS[12:16], TOPIC_LABELS[16:]]
    generate = []
    for batch in batches:
        generate.append(
            "\n".join(f"{i}. {label}: about {label.lower()}" for i, label in enumerate(batch, 1))
        )
    # second response re-mentions an existing label; the pipeline must
    # keep the topic list at 17 and drop the unknown label in run 3
    generate[1] = generate[1] + "\n5. Subject01: seen before"
    assign = [
        "Subject01: fits",
        "Subject05: fits",
        "Subject09: fits\nOfflist: not a known topic",
        "Subject13: fits",
        "Subject17: fits",
    ]
    return generate + assign


def _run_pipeline(out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = [
        DocumentText(
            article_id=f"doc{i:02d}",
            text=f"body of document {i} " * 30,
            token_estimate=estimate_tokens(f"body of document {i} " * 30),
            extraction_source="sidecar-text",
        )
        for i in range(1, 6)
    ]
    session = ModelSession(
        MockChatModel(script=_pipeline_script()),
        audit_path=str(out_dir / "audit.jsonl"),
        temperature=0.0,
        seed=0,
        clock=_ticking_clock(),
    )
    topics = generate_topics(session, docs)
    assert len(topics) == 17
    refined = refine_topics(session, topics, threshold=0.7)
    assert len(refined) == 17
    topic_ids = {t.topic_id for t in refined}

    topics_path = out_dir / "topics.jsonl"
    with open(topics_path, "w", encoding="utf-8") as handle:
        for topic in refined:
            handle.write(json.dumps(topic.to_dict(), sort_keys=True) + "\n")
    assignments_path = out_dir / "assignments.jsonl"
    with open(assignments_path, "w", encoding="utf-8") as handle:
        for doc in docs:
            assignment = assign_topics(session, doc, refined, mode="closed")
            assert set(assignment.topic_ids) <= topic_ids
            assert assignment.topic_ids, f"nothing assigned for {doc.article_id}"
            handle.write(json.dumps(assignment.to_dict(), sort_keys=True) + "\n")
    return [topics_path, assignments_path, out_dir / "audit.jsonl"]


def test_scripted_topic_pipeline_is_byte_reproducible(tmp_path):
    first = _run_pipeline(tmp_path / "run1")
    second = _run_pipeline(tmp_path / "run2")
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes(), f"{a.name} differs between runs"


# -- gate 9: snapshot persistence -------------------------------------


def test_snapshot_serialization_round_trips_over_generated_stores():
    rng = random.Random(777)
    clock = _ticking_clock()
    stages = ("title", "abstract", "fulltext")
    for case in range(1000):
        store = _memory_store(clock=clock)
        ids = []
        voted = set()
        for op in range(rng.randint(2, 7)):
            roll = rng.random()
            if not ids or roll < 0.4:
                article = Article.new(
                    f"Snapshot case {case} record {op}",
                    year=rng.choice((None, rng.randint(1990, 2025))),
                    venue=rng.choice((None, f"Venue {rng.randint(0, 5)}")),
                    doi=rng.choice((None, f"10.{case}/{op}")),
                    authors=[f"Author {rng.randint(0, 9)}"] if rng.random() < 0.5 else [],
                    discovered_in_iteration=rng.randint(0, 4),
                )
                store.upsert_article(article, actor="fuzz")
                ids.append(article.id)
            elif roll < 0.6:
                article = store.get(rng.choice(ids))
                legal = [
                    s for s in State.EDGES[article.state] if s != State.DUPLICATE
                ] or None
                if legal:
                    reason = "why" if rng.random() < 0.3 else None
                    if State.METADATA_REJECTED not in legal:
                        reason = None
                    store.transition(article.id, rng.choice(legal), "fuzz", reason=reason)
            elif roll < 0.8:
                key = (rng.choice(ids), rng.choice(stages), f"r{rng.randint(1, 3)}")
                if key not in voted:
                    voted.add(key)
                    store.record_decision(
                        ScreeningDecision(
                            article_id=key[0],
                            stage=key[1],
                            rater=key[2],
                            verdict=rng.choice(("include", "exclude")),
                            timestamp=clock(),
                            is_consensus=False,
                        )
                    )
            else:
                name = f"Venue {case} {op}"
                store.add_venue_ranking(
                    VenueRankingEntry(
                        venue_name=name,
                        normalized_name=normalize_text(name),
                        rank=rng.choice(DEFAULT_RANK_TIERS),
                        source="manual",
                        decided_by="fuzz",
                        similarity_used=rng.choice((None, round(rng.random(), 3))),
                    )
                )

        first = store.snapshot.serialize()
        assert store.snapshot.serialize() == first
        reloaded = StoreSnapshot.deserialize(first)
        assert reloaded.serialize() == first, f"case {case} drifted through a reload"
