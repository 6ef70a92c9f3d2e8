"""Build the synthetic seven-iteration store used by the dashboard
parity test: known retrieval and approval counts per iteration, every
article walked through the normal screening states."""

import sys

from refsift.models import Article, State
from refsift.store import ReviewStore

RETRIEVED = (19, 100, 227, 111, 100, 433, 19)
APPROVED = (5, 30, 22, 18, 25, 10, 0)

INCLUDE_PATH = (State.IN_TITLE_SCREEN, State.IN_FULL_SCREEN, State.INCLUDED)
REJECT_PATH = (State.IN_TITLE_SCREEN, State.TITLE_REJECTED)


def main() -> None:
    store_path = sys.argv[1]
    store = ReviewStore.create(store_path)
    for iteration, (retrieved, approved) in enumerate(zip(RETRIEVED, APPROVED), start=1):
        for i in range(retrieved):
            article = Article.new(
                f"Synthetic record {iteration} {i}", discovered_in_iteration=iteration
            )
            store.upsert_article(article, actor="loadgen")
            path = INCLUDE_PATH if i < approved else REJECT_PATH
            for state in path:
                store.transition(article.id, state, "loadgen")
    store.save()
    store.close()
    print(f"wrote {store_path}")


if __name__ == "__main__":
    main()
