"""Shared text normalization for titles and venue names.

One normalizer is used everywhere an identity or similarity comparison
happens (seed dedup, article identity, venue matching, the final
similar-title scan) so those comparisons stay reproducible.
"""

import unicodedata

_WS = " \t\r\n"


def normalize_text(text: str) -> str:
    """Unicode-fold to lowercase, strip punctuation, collapse whitespace.

    Accented characters are folded to their base letter; every
    non-alphanumeric character becomes a space; runs of spaces collapse.
    """
    decomposed = unicodedata.normalize("NFKD", text)
    out = []
    for ch in decomposed:
        if unicodedata.combining(ch):
            continue
        if ch.isalnum():
            out.append(ch.casefold())
        else:
            out.append(" ")
    return " ".join("".join(out).split())


def tokenize(text: str) -> list[str]:
    """Normalized unigram tokens of `text` (empty list for empty input)."""
    norm = normalize_text(text)
    return norm.split() if norm else []
