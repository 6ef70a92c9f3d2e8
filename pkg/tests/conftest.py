from __future__ import annotations

import itertools

import pytest

from refsift.models import Article
from refsift.sources import reset_limiters


@pytest.fixture(autouse=True)
def _fresh_limiters():
    """Rate limiters are shared per source name; isolate tests."""
    reset_limiters()
    yield
    reset_limiters()


@pytest.fixture()
def clock():
    """Deterministic injectable clock: strictly increasing timestamps."""
    counter = itertools.count(1)
    return lambda: f"2025-06-01T00:00:00.{next(counter):06d}+00:00"


def make_article(title: str, **kw) -> Article:
    return Article.new(title, **kw)
