"""Deterministic text normalization, tokenization, and vocabulary building.

Tokenization is pure splitting on whitespace and punctuation (no stemming,
no subword units); a bundled English stopword list is applied by default.
The choices are deliberately simple and fully recorded in model metadata so
a trained model always knows how its input text was prepared.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .corpus import Corpus

# Maximal runs of word characters, underscore excluded. Unicode-aware.
_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Read a one-term-per-line stopword file (blank lines ignored)."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            term = line.strip()
            if term:
                words.add(term.lower())
    return frozenset(words)


def default_stopwords() -> frozenset[str]:
    """The bundled English stopword list."""
    text = resources.files("sdgdetect.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


@dataclass(frozen=True)
class PrepConfig:
    """Text preprocessing switches applied before any vectorizer or query."""

    lowercase: bool = True
    strip_punctuation: bool = True
    stopwords: frozenset[str] = field(default_factory=default_stopwords)
    min_token_len: int = 2

    def __post_init__(self) -> None:
        if self.min_token_len < 1:
            raise ValueError("min_token_len must be >= 1")
        if not isinstance(self.stopwords, frozenset):
            object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_punctuation": self.strip_punctuation,
            "min_token_len": self.min_token_len,
            "stopwords": sorted(self.stopwords),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PrepConfig":
        return cls(
            lowercase=bool(data["lowercase"]),
            strip_punctuation=bool(data["strip_punctuation"]),
            stopwords=frozenset(data["stopwords"]),
            min_token_len=int(data["min_token_len"]),
        )


def preprocess(text: str, config: PrepConfig | None = None) -> list[str]:
    """Tokenize a text: lowercase, split, drop stopwords and short tokens.

    Deterministic, and idempotent in the sense that re-preprocessing the
    joined output yields the same token sequence. Empty output is legal.
    """
    if config is None:
        config = PrepConfig()
    if config.lowercase:
        text = text.lower()
    if config.strip_punctuation:
        raw = _WORD_RE.findall(text)
    else:
        raw = text.split()
    return [
        tok
        for tok in raw
        if len(tok) >= config.min_token_len and tok.lower() not in config.stopwords
    ]


@dataclass
class Vocabulary:
    """Distinct corpus terms with contiguous indices and per-term statistics.

    ``df`` counts documents containing a term (not occurrences); ``counts``
    is the total occurrence count. Terms are indexed in sorted order, so a
    vocabulary is a pure function of the tokenized corpus.
    """

    terms: list[str]
    index: dict[str, int]
    df: np.ndarray
    counts: np.ndarray
    n_docs: int

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index

    def df_of(self, term: str) -> int:
        return int(self.df[self.index[term]])

    def count_of(self, term: str) -> int:
        return int(self.counts[self.index[term]])


def build_vocabulary(corpus: "Corpus", config: PrepConfig | None = None) -> Vocabulary:
    """Collect the vocabulary of a corpus under a preprocessing config."""
    if config is None:
        config = PrepConfig()
    if len(corpus.documents) == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    df: dict[str, int] = {}
    counts: dict[str, int] = {}
    any_tokens = False
    for doc in corpus.documents:
        tokens = preprocess(doc.text, config)
        if tokens:
            any_tokens = True
        for tok in set(tokens):
            df[tok] = df.get(tok, 0) + 1
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
    if not any_tokens:
        raise ValueError("all documents preprocess to empty token sequences")
    terms = sorted(df)
    index = {t: i for i, t in enumerate(terms)}
    return Vocabulary(
        terms=terms,
        index=index,
        df=np.array([df[t] for t in terms], dtype=np.int64),
        counts=np.array([counts[t] for t in terms], dtype=np.int64),
        n_docs=len(corpus.documents),
    )


def tokenize_corpus(corpus: "Corpus", config: PrepConfig | None = None) -> list[list[str]]:
    """Preprocess every document, preserving corpus order."""
    if config is None:
        config = PrepConfig()
    return [preprocess(doc.text, config) for doc in corpus.documents]
