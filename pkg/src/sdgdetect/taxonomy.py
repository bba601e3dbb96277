"""SDG terminology database, lexical term expansion, and boolean search.

Queries are disjunctions of conjunctions (OR of AND-groups). A multiword
term contributes every one of its tokens to its conjunction, so the clause
``["clean energy"]`` requires both tokens to co-occur in a document.
Search runs over an inverted index; results are exact token-presence
matches, independent of token order or frequency.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import SDG_MAX, SDG_MIN, Corpus
from .textprep import PrepConfig, preprocess
from .vectorize import EmbeddingTable


class TaxonomyError(Exception):
    """A taxonomy file or query definition is malformed."""


@dataclass
class TermEntry:
    """One terminology-database row: an SDG, a term, optional expansions.

    Expansions are (word, cosine similarity) pairs sorted by similarity
    descending; the term itself never appears among them.
    """

    sdg: int
    term: str
    expansions: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not SDG_MIN <= self.sdg <= SDG_MAX:
            raise ValueError(f"SDG out of range 1..17: {self.sdg}")
        if not self.term or not self.term.strip():
            raise ValueError("term must be nonempty")
        sims = [s for _, s in self.expansions]
        if any(s2 > s1 for s1, s2 in zip(sims, sims[1:])):
            raise ValueError("expansions must be sorted by similarity descending")
        if any(w == self.term for w, _ in self.expansions):
            raise ValueError("expansions must not contain the term itself")


@dataclass
class SdgQuery:
    """OR-of-AND query: a document matches if any clause is fully present."""

    sdg: int
    clauses: list[list[str]]

    def __post_init__(self) -> None:
        if not SDG_MIN <= self.sdg <= SDG_MAX:
            raise ValueError(f"SDG out of range 1..17: {self.sdg}")
        if not self.clauses:
            raise ValueError("query needs at least one clause")
        for clause in self.clauses:
            if not clause or any(not t.strip() for t in clause):
                raise ValueError("clauses must be nonempty lists of nonempty terms")


def load_taxonomy(path: str | Path) -> list[TermEntry]:
    """Read a CSV with columns sdg,term into terminology entries."""
    entries: list[TermEntry] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "sdg" not in reader.fieldnames or "term" not in reader.fieldnames:
            raise TaxonomyError(f"{path}: taxonomy CSV needs 'sdg' and 'term' columns")
        for lineno, row in enumerate(reader, start=2):
            try:
                entries.append(TermEntry(sdg=int(row["sdg"]), term=(row["term"] or "").strip()))
            except (TypeError, ValueError) as exc:
                raise TaxonomyError(f"{path}:{lineno}: {exc}") from exc
    return entries


def bundled_taxonomy() -> list[TermEntry]:
    """The illustrative seed terminology shipped with the package."""
    with resources.as_file(resources.files("sdgdetect.data").joinpath("sdg_terms.csv")) as p:
        return load_taxonomy(p)


def expand_terms(
    entry: TermEntry,
    embeddings: EmbeddingTable,
    k: int,
    min_sim: float = 0.0,
    prep: PrepConfig | None = None,
) -> TermEntry:
    """Attach up to k lexically similar vocabulary words to a term.

    Similarity is cosine over the embedding table; a multiword term uses the
    mean of its token vectors. Candidates below ``min_sim`` are dropped and
    ties are broken lexicographically, so the result is a pure function of
    (embeddings, k, min_sim). If any term token is missing from the
    embedding vocabulary the entry is returned unchanged with a warning.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    if prep is None:
        prep = PrepConfig()
    tokens = preprocess(entry.term, prep)
    if not tokens or any(t not in embeddings.index for t in tokens):
        warnings.warn(
            f"term {entry.term!r} has tokens outside the embedding vocabulary; not expanded",
            stacklevel=2,
        )
        return entry
    target = embeddings.vectors[[embeddings.index[t] for t in tokens]].mean(axis=0)
    t_norm = float(np.linalg.norm(target))
    if t_norm == 0.0:
        warnings.warn(f"term {entry.term!r} has a zero vector; not expanded", stacklevel=2)
        return entry
    norms = np.linalg.norm(embeddings.vectors, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = (embeddings.vectors @ target) / (norms * t_norm)
    sims = np.where(norms > 0, sims, 0.0)
    candidates = [
        (word, float(sims[i]))
        for i, word in enumerate(embeddings.terms)
        if word != entry.term and sims[i] >= min_sim
    ]
    candidates.sort(key=lambda pair: (-pair[1], pair[0]))
    return TermEntry(sdg=entry.sdg, term=entry.term, expansions=candidates[:k])


def compile_query(
    entries: list[TermEntry], sdg: int, include_expansions: bool = True
) -> SdgQuery:
    """Build the OR-of-ANDs query for one SDG from terminology entries."""
    clauses: list[list[str]] = []
    seen: set[str] = set()
    for entry in entries:
        if entry.sdg != sdg:
            continue
        for term in [entry.term] + ([w for w, _ in entry.expansions] if include_expansions else []):
            if term not in seen:
                seen.add(term)
                clauses.append([term])
    if not clauses:
        raise TaxonomyError(f"no terminology entries for SDG {sdg}")
    return SdgQuery(sdg=sdg, clauses=clauses)


def query_to_json(query: SdgQuery) -> str:
    return json.dumps({"sdg": query.sdg, "clauses": query.clauses}, ensure_ascii=False)


def query_from_json(text: str) -> SdgQuery:
    try:
        data = json.loads(text)
        return SdgQuery(sdg=int(data["sdg"]), clauses=[list(c) for c in data["clauses"]])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise TaxonomyError(f"bad query JSON: {exc}") from exc


@dataclass
class InvertedIndex:
    """term -> sorted, deduplicated posting list of document ids."""

    postings: dict[str, list[str]]
    doc_ids: list[str]

    def posting(self, term: str) -> list[str]:
        return self.postings.get(term, [])


def build_index(corpus: Corpus, config: PrepConfig | None = None) -> InvertedIndex:
    if config is None:
        config = PrepConfig()
    postings: dict[str, set[str]] = {}
    for doc in corpus.documents:
        for tok in set(preprocess(doc.text, config)):
            postings.setdefault(tok, set()).add(doc.id)
    return InvertedIndex(
        postings={t: sorted(ids) for t, ids in postings.items()},
        doc_ids=corpus.ids(),
    )


def _clause_tokens(clause: list[str], config: PrepConfig) -> list[str]:
    tokens: list[str] = []
    for term in clause:
        tokens.extend(preprocess(term, config))
    if not tokens:
        raise TaxonomyError(f"clause {clause!r} preprocesses to no tokens")
    return tokens


def search_index(index: InvertedIndex, query: SdgQuery, config: PrepConfig | None = None) -> set[str]:
    """Posting-list evaluation: union over clauses of intersections over tokens."""
    if config is None:
        config = PrepConfig()
    matched: set[str] = set()
    for clause in query.clauses:
        tokens = _clause_tokens(clause, config)
        current: set[str] | None = None
        for tok in tokens:
            posting = set(index.posting(tok))
            current = posting if current is None else current & posting
            if not current:
                break
        if current:
            matched |= current
    return matched


def search(corpus: Corpus, query: SdgQuery, config: PrepConfig | None = None) -> set[str]:
    """Exact boolean match set of a query over a corpus."""
    return search_index(build_index(corpus, config), query, config)
