#!/usr/bin/env python3
"""Offline model-vs-LLM comparison demo on synthetic company descriptions.

Spins up the local mock chat-completions server, runs the two-step
detection protocol over generated company descriptions, trains a
specialized classifier on keyword-planted data, predicts over the same
descriptions, and emits the overlap report, per-SDG detection rates, and
the grouped bar chart.

Usage: python scripts/run_llm_comparison.py --out-dir out/comparison
"""

import argparse
import random
from pathlib import Path

from sdgdetect.analyze import (
    detection_rates,
    make_records,
    overlap_report,
    write_detections,
)
from sdgdetect.classify import DecisionThresholds, fit_classifier, predict_labels
from sdgdetect.cli import emit_report
from sdgdetect.corpus import Corpus, LabeledDocument, SdgLabelSet, save_corpus
from sdgdetect.llm import ExchangeCache, HttpTransport, ProtocolSpec, run_protocol
from sdgdetect.mockllm import MockChatServer, make_echo_reply
from sdgdetect.textprep import PrepConfig
from sdgdetect.vectorize import fit_tfidf

THEMES = {
    3: ["clinic", "vaccine", "diagnostics", "patients"],
    7: ["solar", "turbine", "photovoltaic", "microgrid"],
    9: ["automation", "robotics", "manufacturing", "logistics"],
    12: ["recycling", "compost", "packaging", "reuse"],
}
NEUTRAL = ["software", "consulting", "analytics", "platform", "retail", "marketing"]


def synth_companies(n: int, seed: int) -> Corpus:
    rng = random.Random(seed)
    docs = []
    for i in range(n):
        style = i % 3
        words = rng.choices(NEUTRAL, k=10)
        labels: set[int] = set()
        if style == 0:
            sdg = rng.choice(sorted(THEMES))
            words += rng.choices(THEMES[sdg], k=3)
            labels = {sdg}
        elif style == 1:
            for sdg in rng.sample(sorted(THEMES), k=2):
                words += rng.choices(THEMES[sdg], k=2)
                labels.add(sdg)
        rng.shuffle(words)
        docs.append(
            LabeledDocument(
                id=f"co{i:04d}",
                text="We build " + " ".join(words),
                labels=SdgLabelSet(labels),
                source="prescribed",
            )
        )
    return Corpus(docs)


def training_corpus(seed: int) -> Corpus:
    rng = random.Random(seed + 1)
    docs = []
    i = 0
    for sdg, words in THEMES.items():
        for _ in range(40):
            tokens = rng.choices(NEUTRAL, k=8) + rng.choices(words, k=4)
            rng.shuffle(tokens)
            docs.append(
                LabeledDocument(
                    id=f"tr{i:04d}",
                    text=" ".join(tokens),
                    labels=SdgLabelSet({sdg}),
                    source="abstract",
                )
            )
            i += 1
    return Corpus(docs)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/comparison")
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--companies", type=int, default=120)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prep = PrepConfig()

    companies = synth_companies(args.companies, args.seed)
    save_corpus(companies, out / "companies.jsonl")

    # LLM side: the mock server detects theme keywords liberally and adds a
    # trailing negative clause, exercising the cleaning step for real.
    import os

    os.environ.setdefault("OPENAI_API_KEY", "mock-key")
    reply = make_echo_reply(
        keywords={sdg: words for sdg, words in THEMES.items()},
        however_note=True,
    )
    with MockChatServer(reply=reply) as server:
        result = run_protocol(
            ProtocolSpec.experiment1(),
            companies,
            HttpTransport(endpoint=server.endpoint),
            cache=ExchangeCache(out / "cache.jsonl"),
            parallelism=4,
        )
    llm_side = result.detections()
    write_detections(llm_side, out / "llm_detections.csv")
    print(
        f"LLM protocol: {len(result.records)} records, "
        f"{result.sent_requests} requests, {len(result.failures)} failures"
    )

    # Specialized side: classifier trained on keyword-planted abstracts.
    train = training_corpus(args.seed)
    model = fit_classifier(
        train, "logistic_regression", fit_tfidf(train, prep), seed=args.seed, prep=prep
    )
    thresholds = DecisionThresholds(default=0.6)
    spec_side = {
        doc.id: predict_labels(model, thresholds, doc.text) for doc in companies.documents
    }
    write_detections(spec_side, out / "specialized_detections.csv")

    records = make_records(llm_side, spec_side)
    report = overlap_report(records, label_a="LLM", label_b="Specialized")
    emit_report(report, "json", out / "overlap.json")
    emit_report(report, "csv", out / "overlap.csv")
    print("overlap report:")
    for name, value, pct in report.rows():
        print(f"  {name:64s} {value:>6s} {pct:>8s}")

    tables = [
        detection_rates(records, "a", label="LLM"),
        detection_rates(records, "b", label="Specialized"),
    ]
    for table in tables:
        emit_report(table, "csv", out / f"rates_{table.side}.csv")
        print(f"  top SDGs for {table.side}: {table.top(3)}")
    emit_report(tables, "json", out / "detection_rates.json")
    emit_report(tables, "svg_bars", out / "detection_rates.svg")
    print(f"outputs in {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
