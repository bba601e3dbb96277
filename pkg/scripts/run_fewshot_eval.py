#!/usr/bin/env python3
"""Few-shot tagging demo: example-guided prompts scored against truth labels.

Builds a 200-item single-label validation sample over all 17 SDG themes,
renders a few-shot prompt with 10 labeled examples (5 each of two allowed
tags) against the local mock server, and computes the identification
report: total identification, identification-as-expected, and correct
identification per true label.

Usage: python scripts/run_fewshot_eval.py --out-dir out/fewshot --tags 2,7
"""

import argparse
import os
import random
from pathlib import Path

from sdgdetect.analyze import fewshot_report, write_detections
from sdgdetect.cli import emit_report
from sdgdetect.corpus import Corpus, LabeledDocument, SdgLabelSet, save_corpus
from sdgdetect.llm import ExchangeCache, HttpTransport, ProtocolSpec, run_protocol
from sdgdetect.mockllm import MockChatServer, make_echo_reply

WORDS = {
    1: ["poverty", "income", "welfare"],
    2: ["hunger", "crops", "nutrition"],
    3: ["health", "clinic", "vaccine"],
    4: ["education", "schooling", "literacy"],
    5: ["gender", "equality", "women"],
    6: ["water", "sanitation", "wastewater"],
    7: ["solar", "renewable", "turbine"],
    8: ["employment", "wages", "labour"],
    9: ["industry", "innovation", "infrastructure"],
    10: ["inequality", "inclusion", "redistribution"],
    11: ["cities", "urban", "transit"],
    12: ["recycling", "consumption", "reuse"],
    13: ["climate", "carbon", "emissions"],
    14: ["ocean", "marine", "fisheries"],
    15: ["forest", "biodiversity", "soil"],
    16: ["justice", "institutions", "corruption"],
    17: ["partnership", "cooperation", "finance"],
}
FILLER = ["study", "method", "analysis", "results", "data", "approach", "paper"]


def make_abstract(rng: random.Random, sdg: int) -> str:
    tokens = rng.choices(FILLER, k=8) + rng.choices(WORDS[sdg], k=3)
    rng.shuffle(tokens)
    return " ".join(tokens)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/fewshot")
    parser.add_argument("--seed", type=int, default=23)
    parser.add_argument("--samples", type=int, default=200)
    parser.add_argument("--tags", default="2,7", help="allowed tags, e.g. 2,7")
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)
    tags = SdgLabelSet(int(x) for x in args.tags.split(",") if x.strip())

    sdgs = sorted(WORDS)
    truth = Corpus(
        [
            LabeledDocument(
                id=f"ab{i:04d}",
                text=make_abstract(rng, sdgs[i % len(sdgs)]),
                labels=SdgLabelSet({sdgs[i % len(sdgs)]}),
                source="abstract",
            )
            for i in range(args.samples)
        ]
    )
    save_corpus(truth, out / "truth.jsonl")

    examples = []
    for tag in sorted(tags):
        for _ in range(5):
            examples.append((make_abstract(rng, tag), SdgLabelSet({tag})))
    spec = ProtocolSpec.fewshot_tag(examples, tags=tags)

    # The mock tags by theme keywords for every SDG, mirroring the tendency
    # to ignore the allowed-tag restriction and tag unlisted SDGs anyway.
    os.environ.setdefault("OPENAI_API_KEY", "mock-key")
    reply = make_echo_reply(keywords={sdg: words for sdg, words in WORDS.items()})
    with MockChatServer(reply=reply) as server:
        result = run_protocol(
            spec,
            truth,
            HttpTransport(endpoint=server.endpoint),
            cache=ExchangeCache(out / "cache.jsonl"),
            parallelism=4,
        )
    predictions = result.detections()
    write_detections(predictions, out / "predictions.csv")
    print(f"protocol: {len(result.records)} records, {result.sent_requests} requests")

    report = fewshot_report(truth, predictions, tags)
    emit_report(report, "json", out / "fewshot.json")
    emit_report(report, "csv", out / "fewshot.csv")
    print("label  N    E(y)  total_id  %        as_expected  %        correct  %")
    for row in report.compact_rows():
        exp = row.expected if row.expected is not None else 0
        as_exp = f"[{row.as_expected}]" if row.as_expected_bracketed else str(row.as_expected)
        print(
            f"SDG{row.label:<4d} {row.n:<4d} {exp:<5d} {row.total_identification:<9d}"
            f"{row.total_identification_pct or 0:<9.2f}{as_exp:<13s}"
            f"{row.as_expected_pct or 0:<9.2f}{row.correct:<8d} {row.correct_pct or 0:.2f}"
        )
    print(
        f"totals: {report.total_identifications} identifications, "
        f"as expected {report.total_as_expected} ({report.total_as_expected_pct:.2f}%), "
        f"correct {report.total_correct} ({report.total_correct_pct:.2f}%), "
        f"avg per identified {report.avg_per_identified:.2f}, "
        f"items with any {report.pct_items_with_any:.2f}%"
    )
    print(f"outputs in {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
