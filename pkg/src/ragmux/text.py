"""Text normalization shared by the index, planner, judges, and mock gateway.

Tokenization rule: Unicode lowercase, strip punctuation except intra-word
hyphens, split on whitespace. Every component that compares terms must go
through these helpers so scores stay reproducible.
"""

from __future__ import annotations

import re
from collections import Counter

# Version 1 of the shipped stopword list: exactly 50 common English words.
# Coverage arithmetic and the lexical judge depend on this list; do not
# edit without bumping STOPWORDS_VERSION.
STOPWORDS_VERSION = 1
STOPWORDS = frozenset(
    {
        "a", "an", "the", "is", "are", "was", "were", "be", "been", "of",
        "in", "on", "at", "to", "for", "from", "by", "with", "about", "as",
        "into", "after", "before", "between", "and", "or", "but", "not",
        "no", "what", "which", "who", "whom", "how", "when", "where", "why",
        "this", "that", "these", "those", "it", "its", "their", "there",
        "has", "have", "had", "do", "does",
    }
)

# Word = runs of letters/digits, optionally joined by single hyphens.
# Underscore is excluded on purpose; leading/trailing hyphens are stripped.
_WORD_RE = re.compile(r"[^\W_]+(?:-[^\W_]+)*", re.UNICODE)

# Sentence boundary: terminal punctuation followed by whitespace. Newlines
# always split so table grid rows behave as separate sentences.
_SENT_BOUNDARY_RE = re.compile(r"(?<=[.!?])\s+|\n+")


def tokenize(text: str) -> list[str]:
    """Split text into normalized terms, keeping intra-word hyphens."""
    return _WORD_RE.findall(text.lower())


def content_terms(text: str) -> set[str]:
    """Distinct tokens minus the stopword list."""
    return {t for t in tokenize(text) if t not in STOPWORDS}


def expand_terms(terms) -> set[str]:
    """Add the hyphen-separated parts of compound tokens ("120-pound" -> 120, pound)."""
    out: set[str] = set()
    for term in terms:
        out.add(term)
        if "-" in term:
            out.update(term.split("-"))
    return out


def normalize_for_match(text: str) -> str:
    """Token-normalized form padded with spaces so substring checks align on tokens."""
    return " " + " ".join(tokenize(text)) + " "


def split_sentences(text: str) -> list[str]:
    """Split text into sentences, preserving every character.

    The concatenation of the returned pieces equals the input exactly;
    each piece carries its own trailing whitespace.
    """
    if not text:
        return []
    pieces: list[str] = []
    start = 0
    for m in _SENT_BOUNDARY_RE.finditer(text):
        pieces.append(text[start : m.end()])
        start = m.end()
    if start < len(text):
        pieces.append(text[start:])
    return pieces


def sentence_list(text: str) -> list[str]:
    """Sentences stripped of surrounding whitespace, empties dropped."""
    return [s.strip() for s in split_sentences(text) if s.strip()]


def token_f1(expected: str, predicted: str) -> float:
    """Token-level F1 between the content terms of two strings."""
    a = [t for t in tokenize(expected) if t not in STOPWORDS]
    b = [t for t in tokenize(predicted) if t not in STOPWORDS]
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    shared = sum((Counter(a) & Counter(b)).values())
    if shared == 0:
        return 0.0
    precision = shared / len(b)
    recall = shared / len(a)
    return 2 * precision * recall / (precision + recall)
