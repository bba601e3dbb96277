import random
from importlib import resources

import pytest
from hypothesis import HealthCheck, settings

from sdgdetect.corpus import Corpus, LabeledDocument, SdgLabelSet, load_corpus

settings.register_profile(
    "suite",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def toy_corpus() -> Corpus:
    path = resources.files("sdgdetect.data").joinpath("toy_corpus.jsonl")
    return load_corpus(path)


def make_docs(texts, labels=None, source="other"):
    labels = labels or [()] * len(texts)
    return Corpus(
        [
            LabeledDocument(id=f"d{i:03d}", text=t, labels=SdgLabelSet(l), source=source)
            for i, (t, l) in enumerate(zip(texts, labels))
        ]
    )


PLANT_KEYWORDS = {
    3: ["hospital", "vaccine", "clinic", "patients"],
    7: ["solar", "turbine", "renewables", "photovoltaic"],
    12: ["recycling", "compost", "reuse", "circularity"],
}


def make_planted_corpus(n=300, seed=0) -> Corpus:
    """Synthetic documents with class-exclusive planted keywords."""
    classes = sorted(PLANT_KEYWORDS)
    filler = [f"filler{i:02d}" for i in range(40)]
    rng = random.Random(seed)
    docs = []
    for i in range(n):
        label = classes[i % len(classes)]
        tokens = rng.choices(filler, k=10) + rng.choices(PLANT_KEYWORDS[label], k=4)
        rng.shuffle(tokens)
        docs.append(
            LabeledDocument(
                id=f"p{i:04d}",
                text=" ".join(tokens),
                labels=SdgLabelSet({label}),
                source="abstract",
            )
        )
    return Corpus(docs)


# Target cells of the few-shot identification table the fixture reproduces:
# label -> (N, total_identification, as_expected, correct). Labels 2 and 7
# are the allowed tags (as_expected == correct there); SDG17 has no items.
FEWSHOT_TARGET = {
    1: (12, 6, 4, 4),
    2: (15, 60, 15, 15),
    3: (11, 14, 6, 5),
    4: (16, 5, 11, 3),
    5: (11, 6, 6, 4),
    6: (15, 14, 3, 9),
    7: (10, 32, 10, 10),
    8: (12, 6, 3, 3),
    9: (9, 1, 5, 0),
    10: (18, 5, 12, 0),
    11: (7, 5, 0, 0),
    12: (9, 3, 1, 2),
    13: (13, 16, 2, 5),
    14: (14, 15, 2, 7),
    15: (16, 5, 5, 0),
    16: (12, 2, 5, 1),
}
FEWSHOT_TAGS = SdgLabelSet({2, 7})


def build_fewshot_fixture():
    """Deterministically construct 200 single-label items plus predictions
    that reproduce every cell of FEWSHOT_TARGET. Raises if the construction
    misses any target count, so the fixture is self-verifying."""
    items: list[tuple[str, int]] = []
    preds: dict[str, set[int]] = {}
    needs_extra: list[str] = []
    for y, (n, _total, as_exp, correct) in sorted(FEWSHOT_TARGET.items()):
        ids = [f"s{y:02d}_{i:02d}" for i in range(n)]
        items.extend((i, y) for i in ids)
        if y in FEWSHOT_TAGS:
            for i in ids:
                preds[i] = {y}
        else:
            for i in ids[:as_exp]:
                preds[i] = set()
            for i in ids[as_exp : as_exp + correct]:
                preds[i] = {y}
            for i in ids[as_exp + correct :]:
                preds[i] = set()
                needs_extra.append(i)

    label_of = dict(items)
    budget = {y: FEWSHOT_TARGET[y][1] - FEWSHOT_TARGET[y][3] for y in FEWSHOT_TARGET}

    # Phase 1: every item that must end up nonempty without containing its
    # own label receives one extra label, taken from the largest remaining
    # budget (ties to the smallest label).
    for item in needs_extra:
        own = label_of[item]
        y = max(
            (y for y in budget if y != own and budget[y] > 0),
            key=lambda y: (budget[y], -y),
        )
        preds[item].add(y)
        budget[y] -= 1

    # Phase 2: place the remaining identifications anywhere eligible.
    hosts = [i for i, _ in items if preds[i]]
    for y in sorted(budget):
        for host in hosts:
            if budget[y] == 0:
                break
            if label_of[host] != y and y not in preds[host]:
                preds[host].add(y)
                budget[y] -= 1
        if budget[y] != 0:
            raise AssertionError(f"could not place all identifications of label {y}")

    # Self-verification against every target cell.
    for y, (n, total, as_exp, correct) in FEWSHOT_TARGET.items():
        got_n = sum(1 for _, lab in items if lab == y)
        got_total = sum(1 for i, _ in items if y in preds[i])
        got_correct = sum(1 for i, lab in items if lab == y and y in preds[i])
        if y in FEWSHOT_TAGS:
            got_as_exp = got_correct
        else:
            got_as_exp = sum(1 for i, lab in items if lab == y and not preds[i])
        if (got_n, got_total, got_as_exp, got_correct) != (n, total, as_exp, correct):
            raise AssertionError(
                f"fixture mismatch for label {y}: "
                f"{(got_n, got_total, got_as_exp, got_correct)} != {(n, total, as_exp, correct)}"
            )

    truth = Corpus(
        [
            LabeledDocument(id=i, text=f"abstract {i}", labels=SdgLabelSet({lab}), source="abstract")
            for i, lab in items
        ]
    )
    predictions = {i: SdgLabelSet(p) for i, p in preds.items()}
    return truth, predictions
