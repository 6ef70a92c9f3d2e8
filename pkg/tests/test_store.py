"""Store behavior: persistence, identity merging, transitions, audit replay."""

from __future__ import annotations

import json

import pytest

from refsift.errors import (
    IllegalTransitionError,
    StoreError,
    StoreLockedError,
    UnknownArticleError,
)
from refsift.models import (
    Article,
    DuplicateResolution,
    IterationRecord,
    ScreeningDecision,
    State,
    VenueRankingEntry,
)
from refsift.store import ReviewStore, StoreSnapshot, init_store

from conftest import make_article


@pytest.fixture()
def store(tmp_path, clock):
    s = ReviewStore.create(tmp_path / "review.jsonl", clock=clock)
    yield s
    s.close()


@pytest.fixture()
def mem_store(clock):
    return ReviewStore.create(None, clock=clock)


# ── file lifecycle ────────────────────────────────────────────────────────


def test_create_writes_header_line(tmp_path, clock):
    path = tmp_path / "r.jsonl"
    with ReviewStore.create(path, config={"raters": ["a", "b"]}, clock=clock):
        pass
    first = path.read_text(encoding="utf-8").splitlines()[0]
    header = json.loads(first)
    assert header["kind"] == "header"
    assert header["config"] == {"raters": ["a", "b"]}


def test_create_refuses_existing_without_force(tmp_path, clock):
    path = tmp_path / "r.jsonl"
    ReviewStore.create(path, clock=clock).close()
    with pytest.raises(StoreError):
        ReviewStore.create(path, clock=clock)
    ReviewStore.create(path, force=True, clock=clock).close()


def test_open_round_trips_articles(tmp_path, clock):
    path = tmp_path / "r.jsonl"
    with ReviewStore.create(path, clock=clock) as s:
        s.upsert_article(make_article("One", year=2021))
        s.upsert_article(make_article("Two", doi="10.2/two"))
        s.save()
    reopened = ReviewStore.open(path, writable=False, clock=clock)
    titles = sorted(a.title for a in reopened.snapshot.articles)
    assert titles == ["One", "Two"]


def test_lockfile_blocks_second_writer(tmp_path, clock):
    path = tmp_path / "r.jsonl"
    first = ReviewStore.create(path, clock=clock)
    with pytest.raises(StoreLockedError):
        ReviewStore.open(path, clock=clock)
    # read-only opens are fine while the writer holds the lock
    ReviewStore.open(path, writable=False, clock=clock)
    first.close()
    ReviewStore.open(path, clock=clock).close()


def test_close_releases_lock(tmp_path, clock):
    path = tmp_path / "r.jsonl"
    s = ReviewStore.create(path, clock=clock)
    lock = path.with_name("r.jsonl.lock")
    assert lock.exists()
    s.close()
    assert not lock.exists()


def test_deserialize_rejects_garbage():
    with pytest.raises(StoreError):
        StoreSnapshot.deserialize("")
    with pytest.raises(StoreError):
        StoreSnapshot.deserialize('{"kind": "article", "id": "a1"}\n')
    with pytest.raises(StoreError):
        StoreSnapshot.deserialize('{"kind": "header", "schema_version": 99}\n')


def test_serialize_is_deterministic():
    def build():
        import itertools

        counter = itertools.count(1)
        s = ReviewStore.create(
            None, clock=lambda: f"2025-06-01T00:00:00.{next(counter):06d}+00:00"
        )
        s.upsert_article(make_article("B title", source_ids={"dblp": "2"}))
        s.upsert_article(make_article("A title", doi="10.1/a"))
        s.transition(s.snapshot.articles[0].id, State.IN_TITLE_SCREEN, actor="t")
        return s.snapshot.serialize()

    assert build() == build()


def test_serialize_deserialize_round_trip(store):
    store.upsert_article(make_article("Paper", authors=["X. Y"], year=2020))
    store.append_audit("tester", "note", detail={"k": "v"})
    text = store.snapshot.serialize()
    again = StoreSnapshot.deserialize(text)
    assert again.serialize() == text


# ── seeds and identity merging ───────────────────────────────────────────


def test_init_seeds_dedupes_by_normalized_title(tmp_path, clock):
    s = init_store(
        tmp_path / "r.jsonl",
        ["Graph RAG: a survey", "  graph rag  A SURVEY!", "Other work"],
        clock=clock,
    )
    try:
        assert len(s.snapshot.articles) == 2
        for a in s.snapshot.articles:
            assert a.discovered_in_iteration == 0
            assert a.discovered_via == {"seed"}
            assert a.state == State.CANDIDATE
    finally:
        s.close()


def test_init_seeds_rejects_empty(tmp_path, clock):
    with pytest.raises(StoreError):
        init_store(tmp_path / "r.jsonl", ["  ", ""], clock=clock)


def test_upsert_new_article_is_audited(mem_store):
    art = make_article("Fresh", discovered_via={"forward"})
    article_id, was_new = mem_store.upsert_article(art, actor="snowball")
    assert was_new
    entry = mem_store.snapshot.audit[-1]
    assert entry.action == "created"
    assert entry.article_id == article_id
    assert entry.detail["via"] == ["forward"]


def test_upsert_merges_on_doi_despite_different_title(mem_store):
    first = make_article("Original Title", doi="10.9/match")
    mem_store.upsert_article(first)
    incoming = make_article("Retitled in another index", doi="10.9/MATCH", year=2019)
    merged_id, was_new = mem_store.upsert_article(incoming)
    assert not was_new
    assert merged_id == first.id
    merged = mem_store.get(merged_id)
    assert merged.title == "Original Title"  # existing wins
    assert merged.year == 2019  # gap filled


def test_upsert_merges_on_source_pair(mem_store):
    mem_store.upsert_article(make_article("Alpha", source_ids={"dblp": "conf/x/1"}))
    _, was_new = mem_store.upsert_article(
        make_article("Totally different words", source_ids={"dblp": "conf/x/1"})
    )
    assert not was_new


def test_upsert_merges_on_title_last(mem_store):
    mem_store.upsert_article(make_article("Same Words Here"))
    _, was_new = mem_store.upsert_article(make_article("same words  HERE", doi="10.1/x"))
    assert not was_new
    # and the merge filled the missing doi without rekeying the article
    merged = mem_store.snapshot.articles[0]
    assert merged.doi == "10.1/x"


def test_merge_never_overwrites_and_never_touches_state(mem_store):
    first = make_article("Kept", year=2001, authors=["A. One"])
    mem_store.upsert_article(first)
    mem_store.transition(first.id, State.IN_TITLE_SCREEN, actor="t")
    incoming = make_article("Kept", year=1999, authors=["B. Two"], venue="ICSE")
    incoming.discovered_in_iteration = 7
    mem_store.upsert_article(incoming)
    merged = mem_store.get(first.id)
    assert merged.year == 2001
    assert merged.authors == ["A. One"]
    assert merged.venue == "ICSE"
    assert merged.state == State.IN_TITLE_SCREEN
    assert merged.discovered_in_iteration == 0


def test_merge_unions_discovery_routes(mem_store):
    mem_store.upsert_article(make_article("Seen Twice", discovered_via={"forward"}))
    mem_store.upsert_article(make_article("Seen Twice", discovered_via={"backward"}))
    assert mem_store.snapshot.articles[0].discovered_via == {"forward", "backward"}


def test_query_filters_and_orders(mem_store):
    a = make_article("Zebra", discovered_via={"seed"})
    b = make_article("Apple", discovered_via={"seed"})
    c = make_article("Mango", discovered_in_iteration=1, discovered_via={"forward"})
    for art in (a, b, c):
        mem_store.upsert_article(art)
    all_rows = mem_store.query()
    assert [x.title for x in all_rows] == ["Apple", "Zebra", "Mango"]
    assert [x.title for x in mem_store.query(iteration=1)] == ["Mango"]
    assert [x.title for x in mem_store.query(discovered_via={"forward"})] == ["Mango"]
    assert mem_store.query(states={State.INCLUDED}) == []


def test_get_unknown_raises(mem_store):
    with pytest.raises(UnknownArticleError):
        mem_store.get("a0000000000000000")


# ── transitions ──────────────────────────────────────────────────────────


def test_legal_walk_to_included(mem_store):
    art = make_article("Walks")
    mem_store.upsert_article(art)
    mem_store.transition(art.id, State.IN_TITLE_SCREEN, actor="t")
    mem_store.transition(art.id, State.IN_FULL_SCREEN, actor="t")
    mem_store.transition(art.id, State.INCLUDED, actor="t")
    assert mem_store.get(art.id).state == State.INCLUDED


def test_illegal_transitions_raise(mem_store):
    art = make_article("Stuck")
    mem_store.upsert_article(art)
    with pytest.raises(IllegalTransitionError):
        mem_store.transition(art.id, State.INCLUDED, actor="t")
    mem_store.transition(art.id, State.METADATA_REJECTED, actor="t", reason="year")
    with pytest.raises(IllegalTransitionError):
        mem_store.transition(art.id, State.IN_TITLE_SCREEN, actor="t")


def test_unknown_state_name_raises(mem_store):
    art = make_article("Typo")
    mem_store.upsert_article(art)
    with pytest.raises(StoreError):
        mem_store.transition(art.id, "shredded", actor="t")


def test_metadata_reject_keeps_reason(mem_store):
    art = make_article("Old")
    mem_store.upsert_article(art)
    mem_store.transition(art.id, State.METADATA_REJECTED, actor="t", reason="year 1980 < 2010")
    assert mem_store.get(art.id).state_reason == "year 1980 < 2010"


def test_duplicate_requires_valid_canonical(mem_store):
    a = make_article("Canon")
    b = make_article("Copy")
    for art in (a, b):
        mem_store.upsert_article(art)
        mem_store.transition(art.id, State.IN_TITLE_SCREEN, actor="t")
        mem_store.transition(art.id, State.IN_FULL_SCREEN, actor="t")
        mem_store.transition(art.id, State.INCLUDED, actor="t")
    with pytest.raises(StoreError):
        mem_store.transition(b.id, State.DUPLICATE, actor="t")
    with pytest.raises(UnknownArticleError):
        mem_store.transition(b.id, State.DUPLICATE, actor="t", duplicate_of="a" + "0" * 15)
    with pytest.raises(StoreError):
        mem_store.transition(b.id, State.DUPLICATE, actor="t", duplicate_of=b.id)
    mem_store.transition(b.id, State.DUPLICATE, actor="t", duplicate_of=a.id)
    assert mem_store.get(b.id).duplicate_of == a.id


def test_audit_replay_matches_live_states(mem_store):
    ids = []
    for i, title in enumerate(["P1", "P2", "P3"]):
        art = make_article(title)
        mem_store.upsert_article(art)
        ids.append(art.id)
    mem_store.transition(ids[0], State.IN_TITLE_SCREEN, actor="t")
    mem_store.transition(ids[0], State.TITLE_REJECTED, actor="t")
    mem_store.transition(ids[1], State.METADATA_REJECTED, actor="t", reason="language de")
    replayed = mem_store.replay_states()
    for art in mem_store.snapshot.articles:
        state, reason, dup = replayed[art.id]
        assert state == art.state
        assert reason == art.state_reason
        assert dup == art.duplicate_of


# ── decisions ────────────────────────────────────────────────────────────


def _decision(article_id, rater="r1", stage="title", verdict="include", consensus=False):
    return ScreeningDecision(
        article_id=article_id,
        stage=stage,
        rater=rater,
        verdict=verdict,
        timestamp="2025-01-01T00:00:00+00:00",
        is_consensus=consensus,
    )


def test_double_vote_needs_amend(mem_store):
    art = make_article("Voted")
    mem_store.upsert_article(art)
    mem_store.record_decision(_decision(art.id))
    with pytest.raises(StoreError):
        mem_store.record_decision(_decision(art.id, verdict="exclude"))
    mem_store.record_decision(_decision(art.id, verdict="exclude"), amend=True)
    votes = mem_store.decisions_for(article_id=art.id, rater="r1")
    assert [v.verdict for v in votes] == ["exclude"]
    assert mem_store.snapshot.audit[-1].action == "decision-amended"


def test_amend_keeps_one_row_per_rater_stage(mem_store):
    art = make_article("Voted")
    mem_store.upsert_article(art)
    mem_store.record_decision(_decision(art.id, rater="r1"))
    mem_store.record_decision(_decision(art.id, rater="r2", verdict="exclude"))
    mem_store.record_decision(_decision(art.id, rater="r1", verdict="exclude"), amend=True)
    assert len(mem_store.decisions_for(article_id=art.id, stage="title")) == 2


def test_consensus_recorded_once(mem_store):
    art = make_article("Conflicted")
    mem_store.upsert_article(art)
    mem_store.record_decision(_decision(art.id, rater="lead", consensus=True))
    with pytest.raises(StoreError):
        mem_store.record_decision(_decision(art.id, rater="lead", consensus=True))
    assert mem_store.decisions_for(article_id=art.id, consensus=True)[0].rater == "lead"


def test_decisions_filterable_by_stage_and_rater(mem_store):
    art = make_article("Filters")
    mem_store.upsert_article(art)
    mem_store.record_decision(_decision(art.id, rater="r1", stage="title"))
    mem_store.record_decision(_decision(art.id, rater="r1", stage="fulltext"))
    mem_store.record_decision(_decision(art.id, rater="r2", stage="title", verdict="exclude"))
    assert len(mem_store.decisions_for(stage="title")) == 2
    assert len(mem_store.decisions_for(rater="r1")) == 2
    assert len(mem_store.decisions_for(stage="fulltext", rater="r2")) == 0


# ── venue rankings, iterations, duplicate resolutions ────────────────────


def _venue(name, rank="A", source="manual"):
    from refsift.textnorm import normalize_text

    return VenueRankingEntry(
        venue_name=name,
        normalized_name=normalize_text(name),
        rank=rank,
        source=source,
        decided_by="tester",
    )


def test_venue_ranking_matches_on_normalized_name(mem_store):
    mem_store.add_venue_ranking(_venue("Intl. Conf. on Software Engineering"))
    found = mem_store.find_venue_ranking("INTL  CONF on software-engineering")
    assert found is not None and found.rank == "A"
    assert mem_store.find_venue_ranking("Journal of Nothing") is None


def test_venue_ranking_overwrite_needs_force(mem_store):
    mem_store.add_venue_ranking(_venue("ICSE", rank="A*"))
    with pytest.raises(StoreError):
        mem_store.add_venue_ranking(_venue("ICSE", rank="B"))
    mem_store.add_venue_ranking(_venue("ICSE", rank="B"), force=True)
    assert mem_store.find_venue_ranking("ICSE").rank == "B"
    assert len(mem_store.snapshot.venue_rankings) == 1


def test_iteration_records_replace_by_number(mem_store):
    mem_store.put_iteration_record(IterationRecord(iteration_number=1, direction="both"))
    mem_store.put_iteration_record(
        IterationRecord(iteration_number=1, direction="both", expanded=True, new_candidates=4)
    )
    assert mem_store.iteration_record(1).new_candidates == 4
    assert mem_store.iteration_numbers() == [1]
    assert mem_store.iteration_record(2) is None


def test_duplicate_resolution_is_order_insensitive(mem_store):
    res = DuplicateResolution(
        article_a="aAAA",
        article_b="aBBB",
        resolution="different",
        resolved_by="lead",
        timestamp="2025-01-01T00:00:00+00:00",
    )
    mem_store.add_duplicate_resolution(res)
    assert mem_store.find_duplicate_resolution("aBBB", "aAAA") is res
    with pytest.raises(StoreError):
        mem_store.add_duplicate_resolution(res)


# ── exports ──────────────────────────────────────────────────────────────


def test_export_csv_columns_and_authors_join(tmp_path, mem_store):
    art = make_article("Exported", authors=["A. One", "B. Two"], year=2022, venue="TSE")
    mem_store.upsert_article(art)
    out = tmp_path / "final.csv"
    mem_store.export_csv(out, [art])
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "id,title,authors,year,venue,doi,url,state,iteration"
    assert "A. One; B. Two" in lines[1]


def test_export_bibtex_entry_kinds_and_key_collisions(tmp_path, mem_store):
    a = make_article("Shared words", authors=["Ada Smith"], year=2020, venue="TSE")
    b = make_article("Shared things", authors=["Bob Smith"], year=2020)
    for art in (a, b):
        mem_store.upsert_article(art)
    out = tmp_path / "final.bib"
    mem_store.export_bibtex(out, [a, b])
    text = out.read_text(encoding="utf-8")
    assert "@article{smith2020shared," in text
    assert "@misc{smith2020shareda," in text
    assert "journal = {TSE}" in text


def test_export_bibtex_escapes_braces(tmp_path, mem_store):
    art = make_article("Curly {Braces} & Friends", authors=["C. D"])
    mem_store.upsert_article(art)
    out = tmp_path / "esc.bib"
    mem_store.export_bibtex(out, [art])
    text = out.read_text(encoding="utf-8")
    assert r"\{Braces\}" in text and r"\&" in text
