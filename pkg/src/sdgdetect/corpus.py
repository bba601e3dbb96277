"""Document collections: loading, validation, eligibility filtering, splitting.

The canonical on-disk form is JSONL, one document per line:

    {"id": "d1", "text": "...", "labels": [7, 9], "source": "prescribed"}

CSV import is supported for convenience (columns ``id,text,labels,source``
with labels as semicolon-joined integers). Saving always emits canonical
JSONL, so ``save(load(path))`` is byte-identical for canonical files.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

SDG_MIN = 1
SDG_MAX = 17

SOURCES = ("prescribed", "generated", "abstract", "other")


class CorpusFormatError(Exception):
    """A corpus file violates the documented schema."""


class SdgLabelSet(frozenset):
    """A set of SDG identifiers in 1..17. Empty means "no SDG"."""

    def __new__(cls, labels: Iterable[int] = ()) -> "SdgLabelSet":
        members = frozenset(int(x) for x in labels)
        for x in members:
            if not SDG_MIN <= x <= SDG_MAX:
                raise ValueError(f"SDG label out of range 1..17: {x}")
        return super().__new__(cls, members)

    @classmethod
    def from_semicolon(cls, text: str) -> "SdgLabelSet":
        """Parse a semicolon-joined label field such as ``"7;9"`` ("" = empty)."""
        text = text.strip()
        if not text:
            return cls()
        return cls(int(part) for part in text.split(";") if part.strip())

    def to_list(self) -> list[int]:
        return sorted(self)

    def to_semicolon(self) -> str:
        return ";".join(str(x) for x in sorted(self))

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"SdgLabelSet({sorted(self)})"


@dataclass(frozen=True)
class LabeledDocument:
    """One text unit (company description, abstract, ...) with optional labels."""

    id: str
    text: str
    labels: SdgLabelSet = field(default_factory=SdgLabelSet)
    source: str = "other"

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("document id must be nonempty")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}; expected one of {SOURCES}")
        if not isinstance(self.labels, SdgLabelSet):
            object.__setattr__(self, "labels", SdgLabelSet(self.labels))


@dataclass
class Corpus:
    """An ordered document collection with unique ids."""

    documents: list[LabeledDocument] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for doc in self.documents:
            if doc.id in seen:
                raise CorpusFormatError(f"duplicate document id: {doc.id!r}")
            seen.add(doc.id)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[LabeledDocument]:
        return iter(self.documents)

    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    def by_id(self, doc_id: str) -> LabeledDocument:
        for d in self.documents:
            if d.id == doc_id:
                return d
        raise KeyError(doc_id)


@dataclass(frozen=True)
class SplitSpec:
    """Parameters of the seeded train/test partition."""

    train_fraction: float = 0.70
    seed: int = 0
    stratified: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def _document_from_record(record: dict, where: str) -> LabeledDocument:
    if "id" not in record or "text" not in record:
        raise CorpusFormatError(f"{where}: record must carry 'id' and 'text'")
    doc_id = record["id"]
    if not isinstance(doc_id, str) or not doc_id:
        raise CorpusFormatError(f"{where}: 'id' must be a nonempty string")
    text = record["text"]
    if not isinstance(text, str):
        raise CorpusFormatError(f"{where}: 'text' must be a string")
    try:
        labels = SdgLabelSet(record.get("labels") or ())
    except (TypeError, ValueError) as exc:
        raise CorpusFormatError(f"{where}: bad labels for id {doc_id!r}: {exc}") from exc
    source = record.get("source") or "other"
    try:
        return LabeledDocument(id=doc_id, text=text, labels=labels, source=source)
    except ValueError as exc:
        raise CorpusFormatError(f"{where}: {exc}") from exc


def load_corpus(path: str | Path, format: str = "jsonl") -> Corpus:
    """Load a corpus from JSONL or CSV, preserving input order.

    Raises :class:`CorpusFormatError` naming the offending line for malformed
    records, duplicate ids, and labels outside 1..17.
    """
    path = Path(path)
    if format == "jsonl":
        docs = list(_iter_jsonl(path))
    elif format == "csv":
        docs = list(_iter_csv(path))
    else:
        raise ValueError(f"unknown corpus format: {format!r}")
    return Corpus(documents=docs)


def _iter_jsonl(path: Path) -> Iterator[LabeledDocument]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise CorpusFormatError(f"{path}:{lineno}: record must be a JSON object")
            yield _document_from_record(record, f"{path}:{lineno}")


def _iter_csv(path: Path) -> Iterator[LabeledDocument]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "id" not in reader.fieldnames or "text" not in reader.fieldnames:
            raise CorpusFormatError(f"{path}: CSV must have 'id' and 'text' columns")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            try:
                labels = SdgLabelSet.from_semicolon(row.get("labels") or "")
            except ValueError as exc:
                raise CorpusFormatError(f"{where}: bad labels: {exc}") from exc
            record = {
                "id": row.get("id"),
                "text": row.get("text"),
                "labels": labels.to_list(),
                "source": row.get("source") or "other",
            }
            yield _document_from_record(record, where)


def document_to_json(doc: LabeledDocument) -> str:
    """Canonical one-line JSON form of a document."""
    return json.dumps(
        {
            "id": doc.id,
            "text": doc.text,
            "labels": doc.labels.to_list(),
            "source": doc.source,
        },
        ensure_ascii=False,
    )


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write canonical JSONL. Round-trips byte-identically with load_corpus."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(document_to_json(doc))
            fh.write("\n")


def eligibility_filter(
    corpus: Corpus,
    min_tokens: int = 10,
    prep: "PrepConfig | None" = None,
) -> tuple[Corpus, Corpus]:
    """Partition a corpus into (eligible, rejected) by post-preprocessing length.

    A document is eligible iff its token count after preprocessing is at
    least ``min_tokens`` (boundary inclusive). Minimum length is a
    pragmatic default for a text-segment eligibility rule, not a canonical
    one; tune ``min_tokens`` or the prep config to match whatever
    requirement a deployment imposes.
    """
    from .textprep import PrepConfig, preprocess

    if min_tokens < 1:
        raise ValueError("min_tokens must be >= 1")
    if prep is None:
        prep = PrepConfig()
    eligible: list[LabeledDocument] = []
    rejected: list[LabeledDocument] = []
    for doc in corpus.documents:
        if len(preprocess(doc.text, prep)) >= min_tokens:
            eligible.append(doc)
        else:
            rejected.append(doc)
    return Corpus(eligible, dict(corpus.metadata)), Corpus(rejected, dict(corpus.metadata))


def _round_half_up(value: float) -> int:
    return int(value + 0.5)


def split_train_test(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus]:
    """Seeded disjoint train/test partition, optionally stratified by label set.

    Stratified mode groups documents by their full label set and allocates
    train slots per stratum by largest remainder, so per-class counts stay
    within one document of the exact proportion. Deterministic for a fixed
    seed; both partitions preserve the input document order.
    """
    n = len(corpus.documents)
    if n == 0:
        raise ValueError("cannot split an empty corpus")
    target = _round_half_up(spec.train_fraction * n)
    rng = random.Random(spec.seed)

    if not spec.stratified:
        order = list(range(n))
        rng.shuffle(order)
        train_idx = set(order[:target])
    else:
        strata: dict[tuple[int, ...], list[int]] = {}
        for i, doc in enumerate(corpus.documents):
            strata.setdefault(tuple(sorted(doc.labels)), []).append(i)
        for key, members in sorted(strata.items()):
            if len(members) < 2:
                raise ValueError(
                    f"stratified split impossible: label class {list(key)} has a single member"
                )
        train_idx = set()
        base: dict[tuple[int, ...], int] = {}
        remainder: dict[tuple[int, ...], float] = {}
        for key in sorted(strata):
            exact = spec.train_fraction * len(strata[key])
            base[key] = int(exact)
            remainder[key] = exact - int(exact)
        leftover = target - sum(base.values())
        take = dict(base)
        cycle = sorted(strata, key=lambda k: (-remainder[k], k))
        pos = 0
        while leftover > 0:
            key = cycle[pos % len(cycle)]
            if take[key] < len(strata[key]):
                take[key] += 1
                leftover -= 1
            pos += 1
        for key in sorted(strata):
            members = list(strata[key])
            rng.shuffle(members)
            train_idx.update(members[: take[key]])

    train = [d for i, d in enumerate(corpus.documents) if i in train_idx]
    test = [d for i, d in enumerate(corpus.documents) if i not in train_idx]
    return Corpus(train, dict(corpus.metadata)), Corpus(test, dict(corpus.metadata))
