"""Chat-completion client, prompt protocols, response parsing, and caching.

Three protocols are supported:

  - ``experiment1``: two steps per document. Step 1 asks whether the text
    directly contributes to any SDGs (with an NA exit); step 2 feeds the
    step-1 response back and asks for the SDGs mentioned before the word
    "however", which cleans out trailing negative mentions. A flag can
    replace the second call with the local :func:`strip_however` shortcut.
  - ``experiment2``: one step per company name, asking for a
    comma-delimited SDG list from the model's own knowledge.
  - ``fewshot_tag``: one step per text, with labeled example pairs and an
    allowed-tag list rendered into the prompt.

Every exchange is appended to an append-only JSONL cache; inputs already
cached are replayed without network traffic, byte-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

import requests

from .corpus import Corpus, SdgLabelSet

DEFAULT_MODEL = "gpt-3.5-turbo"
API_KEY_ENV = "OPENAI_API_KEY"

PROTOCOL_KINDS = ("experiment1", "experiment2", "fewshot_tag")

EXPERIMENT1_STEP1 = (
    "Does this text indicate direct contribution to any SDGs? "
    "If no SDG is directly relevant, just say NA.\n\n{text}"
)
EXPERIMENT1_STEP2 = "List the SDGs mentioned in this text before the word 'however'.\n\n{text}"
EXPERIMENT2_PROMPT = (
    "Give a comma-delimited list of any SDG(s) this company's work contributes to. "
    "If no SDG is relevant just say NA.\n\n{text}"
)


class LlmError(Exception):
    """Base class for client and protocol failures."""

    retryable = False


class AuthFailed(LlmError):
    pass


class RateLimited(LlmError):
    retryable = True


class TransportFailed(LlmError):
    retryable = True


class MalformedResponse(LlmError):
    pass


class ProtocolError(LlmError):
    pass


class TokenBudgetExceeded(ProtocolError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "user" and not self.content:
            raise ValueError("user message content must be nonempty")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


# ---------------------------------------------------------------------------
# Deterministic response parsing


_NON_ALPHA_RE = re.compile(r"[^a-z]+")
_MARKER_RE = re.compile(r"\b(?:sdgs?|goals?)[\s-]*(\d+(?:\s*(?:,|and|&)\s*\d+)*)", re.IGNORECASE)
_NUMBER_RE = re.compile(r"\d+")
_HOWEVER_RE = re.compile(r"\bhowever\b", re.IGNORECASE)


def is_na_response(text: str) -> bool:
    """True when the alphabetic content of the text is exactly NA (or N/A)."""
    return _NON_ALPHA_RE.sub("", text.lower()) == "na"


def parse_sdg_labels(text: str) -> SdgLabelSet:
    """Extract SDG numbers attached to the markers SDG/SDGs/Goal/Goals.

    List forms distribute the marker ("SDGs 3, 4 and 7" gives {3, 4, 7});
    an NA response gives the empty set; numbers outside 1..17 are ignored.
    Total: never raises, always returns a subset of 1..17.
    """
    if is_na_response(text):
        return SdgLabelSet()
    found: set[int] = set()
    for match in _MARKER_RE.finditer(text):
        for num in _NUMBER_RE.findall(match.group(1)):
            value = int(num)
            if 1 <= value <= 17:
                found.add(value)
    return SdgLabelSet(found)


def parse_with_warning(text: str) -> tuple[SdgLabelSet, bool]:
    """Parse, flagging responses that yielded nothing without being NA."""
    labels = parse_sdg_labels(text)
    warning = not labels and not is_na_response(text)
    return labels, warning


def strip_however(text: str) -> str:
    """The prefix before the first standalone "however" (whole text if absent)."""
    match = _HOWEVER_RE.search(text)
    return text if match is None else text[: match.start()]


def estimate_tokens(text: str) -> int:
    """Crude token estimate (about four characters per token)."""
    return math.ceil(len(text) / 4)


# ---------------------------------------------------------------------------
# Transports


class HttpTransport:
    """POSTs chat-completion payloads to an OpenAI-compatible endpoint.

    The API key is read from an environment variable at send time, never
    from flags or config files.
    """

    def __init__(
        self,
        endpoint: str = "https://api.openai.com/v1/chat/completions",
        api_key_env: str = API_KEY_ENV,
        timeout: float = 60.0,
    ) -> None:
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout

    def send(self, payload: dict) -> dict:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthFailed(f"no API key in environment variable {self.api_key_env}")
        try:
            resp = requests.post(
                self.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {key}"},
                timeout=self.timeout,
            )
        except requests.Timeout as exc:
            raise TransportFailed(f"request timed out after {self.timeout}s") from exc
        except requests.RequestException as exc:
            raise TransportFailed(str(exc)) from exc
        if resp.status_code == 401:
            raise AuthFailed("authentication rejected (HTTP 401)")
        if resp.status_code == 429:
            raise RateLimited("rate limited (HTTP 429)")
        if resp.status_code >= 500:
            raise TransportFailed(f"server error (HTTP {resp.status_code})")
        if resp.status_code != 200:
            raise TransportFailed(f"unexpected status {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponse("response body is not JSON") from exc


class MockTransport:
    """In-process transport for tests: scripted outcomes or a reply function.

    ``script`` entries are consumed first; each is either an exception to
    raise or a content string. After the script is exhausted, ``reply``
    maps the payload to a content string.
    """

    def __init__(
        self,
        reply: Callable[[dict], str] | None = None,
        script: Sequence[object] = (),
    ) -> None:
        self.reply = reply or (lambda payload: "NA")
        self.script = list(script)
        self.requests: list[dict] = []
        self._lock = threading.Lock()

    def send(self, payload: dict) -> dict:
        with self._lock:
            self.requests.append(payload)
            outcome = self.script.pop(0) if self.script else None
        if isinstance(outcome, Exception):
            raise outcome
        if isinstance(outcome, dict):
            return outcome
        content = outcome if isinstance(outcome, str) else self.reply(payload)
        return {"choices": [{"message": {"role": "assistant", "content": content}}]}

    @property
    def request_count(self) -> int:
        return len(self.requests)


def extract_content(response: dict) -> str:
    """Pull choices[0].message.content out of a wire response."""
    try:
        choices = response["choices"]
    except (TypeError, KeyError) as exc:
        raise MalformedResponse("response missing field 'choices'") from exc
    if not choices:
        raise MalformedResponse("response field 'choices' is empty")
    try:
        message = choices[0]["message"]
    except (TypeError, KeyError, IndexError) as exc:
        raise MalformedResponse("response missing field 'message'") from exc
    try:
        content = message["content"]
    except (TypeError, KeyError) as exc:
        raise MalformedResponse("response missing field 'content'") from exc
    if not isinstance(content, str):
        raise MalformedResponse("response field 'content' is not a string")
    return content


class TokenBucket:
    """Simple blocking token-bucket limiter (requests per second)."""

    def __init__(self, rate: float, capacity: int = 1) -> None:
        if rate <= 0 or capacity < 1:
            raise ValueError("rate must be positive and capacity at least 1")
        self.rate = rate
        self.capacity = capacity
        self._tokens = float(capacity)
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


def chat_complete(
    messages: Sequence[ChatMessage],
    transport,
    model_name: str = DEFAULT_MODEL,
    temperature: float = 0.0,
    max_tokens: int | None = None,
    retries: int = 5,
    backoff_base: float = 0.5,
    backoff_cap: float = 30.0,
    rate_limiter: TokenBucket | None = None,
    exchange_log: "ExchangeCache | None" = None,
) -> str:
    """Send one chat completion and return the assistant message content.

    Transient failures (rate limits, server errors, timeouts) are retried
    with exponential backoff up to ``retries`` attempts, then the last
    error propagates. Auth and malformed-response errors never retry.
    """
    content, _ = chat_complete_detailed(
        messages,
        transport,
        model_name=model_name,
        temperature=temperature,
        max_tokens=max_tokens,
        retries=retries,
        backoff_base=backoff_base,
        backoff_cap=backoff_cap,
        rate_limiter=rate_limiter,
        exchange_log=exchange_log,
    )
    return content


def chat_complete_detailed(
    messages: Sequence[ChatMessage],
    transport,
    model_name: str = DEFAULT_MODEL,
    temperature: float = 0.0,
    max_tokens: int | None = None,
    retries: int = 5,
    backoff_base: float = 0.5,
    backoff_cap: float = 30.0,
    rate_limiter: TokenBucket | None = None,
    exchange_log: "ExchangeCache | None" = None,
) -> tuple[str, int]:
    """Like :func:`chat_complete`, additionally returning the retry count."""
    payload: dict = {
        "model": model_name,
        "temperature": temperature,
        "messages": [m.to_dict() for m in messages],
    }
    if max_tokens is not None:
        payload["max_tokens"] = max_tokens
    attempt = 0
    while True:
        if rate_limiter is not None:
            rate_limiter.acquire()
        try:
            response = transport.send(payload)
            content = extract_content(response)
            if exchange_log is not None:
                exchange_log.append_exchange(payload, content)
            return content, attempt
        except LlmError as exc:
            if not exc.retryable or attempt >= retries:
                raise
            delay = min(backoff_cap, backoff_base * (2**attempt))
            attempt += 1
            if delay > 0:
                time.sleep(delay)


# ---------------------------------------------------------------------------
# Protocol specs


def _render(template: str, value: str) -> str:
    """Substitute the last {text} slot; inserted value is never rescanned."""
    idx = template.rindex("{text}")
    return template[:idx] + value + template[idx + len("{text}") :]


def format_tag(labels: SdgLabelSet | Iterable[int]) -> str:
    return ", ".join(f"SDG{c}" for c in sorted(labels))


@dataclass(frozen=True)
class ProtocolSpec:
    """A declarative prompt protocol.

    ``prompts`` are ordered templates, each with a ``{text}`` substitution
    slot. ``experiment1`` has exactly two steps, the other kinds one.
    """

    kind: str
    prompts: tuple[str, ...]
    temperature: float = 0.0
    max_tokens: int | None = None
    model_name: str = DEFAULT_MODEL
    examples: tuple[tuple[str, SdgLabelSet], ...] | None = None
    tags: SdgLabelSet | None = None
    local_cleanup: bool = False
    token_budget: int | None = 4096

    def __post_init__(self) -> None:
        if self.kind not in PROTOCOL_KINDS:
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        expected = 2 if self.kind == "experiment1" else 1
        if len(self.prompts) != expected:
            raise ValueError(f"{self.kind} requires exactly {expected} prompt step(s)")
        for template in self.prompts:
            if "{text}" not in template:
                raise ValueError("every prompt template needs a {text} slot")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.kind == "fewshot_tag" and (not self.examples or self.tags is None):
            raise ValueError("fewshot_tag needs examples and tags")

    @classmethod
    def experiment1(
        cls,
        model_name: str = DEFAULT_MODEL,
        local_cleanup: bool = False,
        token_budget: int | None = 4096,
    ) -> "ProtocolSpec":
        return cls(
            kind="experiment1",
            prompts=(EXPERIMENT1_STEP1, EXPERIMENT1_STEP2),
            model_name=model_name,
            local_cleanup=local_cleanup,
            token_budget=token_budget,
        )

    @classmethod
    def experiment2(
        cls, model_name: str = DEFAULT_MODEL, token_budget: int | None = 4096
    ) -> "ProtocolSpec":
        return cls(kind="experiment2", prompts=(EXPERIMENT2_PROMPT,), model_name=model_name,
                   token_budget=token_budget)

    @classmethod
    def fewshot_tag(
        cls,
        examples: Sequence[tuple[str, SdgLabelSet | Iterable[int]]],
        tags: SdgLabelSet | Iterable[int],
        model_name: str = DEFAULT_MODEL,
        token_budget: int | None = 4096,
    ) -> "ProtocolSpec":
        if not examples:
            raise ValueError("fewshot_tag needs at least one example")
        tag_set = SdgLabelSet(tags)
        example_pairs = tuple((text, SdgLabelSet(labels)) for text, labels in examples)
        blocks = "\n\n".join(
            f"Text: {text}\nLabels: {format_tag(labels) or 'NA'}" for text, labels in example_pairs
        )
        template = (
            "Tag the text with the appropriate SDG label(s), using only the listed tags. "
            "If none applies, say NA.\n\n"
            f"Tags: {format_tag(tag_set)}\n\n"
            f"{blocks}\n\n"
            "Text: {text}\nLabels:"
        )
        return cls(
            kind="fewshot_tag",
            prompts=(template,),
            model_name=model_name,
            examples=example_pairs,
            tags=tag_set,
            token_budget=token_budget,
        )

    def render_step(self, step: int, value: str) -> str:
        prompt = _render(self.prompts[step], value)
        if self.token_budget is not None and estimate_tokens(prompt) > self.token_budget:
            raise TokenBudgetExceeded(
                f"rendered prompt is about {estimate_tokens(prompt)} tokens, "
                f"over the budget of {self.token_budget}"
            )
        return prompt


# ---------------------------------------------------------------------------
# Records and the replay cache


@dataclass(frozen=True)
class StepExchange:
    prompt: str
    response: str
    retries: int = 0


@dataclass(frozen=True)
class LlmRecord:
    """One input's full protocol exchange plus the parsed label set."""

    doc_id: str
    kind: str
    model_name: str
    steps: tuple[StepExchange, ...]
    labels: SdgLabelSet
    parse_warning: bool
    cleanup: str  # "none" or "local"
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "kind": self.kind,
            "model": self.model_name,
            "steps": [
                {"prompt": s.prompt, "response": s.response, "retries": s.retries}
                for s in self.steps
            ],
            "labels": self.labels.to_list(),
            "parse_warning": self.parse_warning,
            "cleanup": self.cleanup,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LlmRecord":
        return cls(
            doc_id=data["doc_id"],
            kind=data["kind"],
            model_name=data["model"],
            steps=tuple(
                StepExchange(
                    prompt=s["prompt"], response=s["response"], retries=int(s.get("retries", 0))
                )
                for s in data["steps"]
            ),
            labels=SdgLabelSet(data["labels"]),
            parse_warning=bool(data["parse_warning"]),
            cleanup=data["cleanup"],
            timestamp=data["timestamp"],
        )


def recompute_labels(record: LlmRecord) -> tuple[SdgLabelSet, bool]:
    """Re-derive the label set from the stored raw responses."""
    text = record.steps[-1].response
    if record.cleanup == "local":
        text = strip_however(text)
    return parse_with_warning(text)


def cache_key(kind: str, model_name: str, first_prompt: str) -> str:
    digest = hashlib.sha256(first_prompt.encode("utf-8")).hexdigest()
    return f"{kind}:{model_name}:{digest}"


class ExchangeCache:
    """Append-only JSONL store of protocol records and raw exchanges.

    Records are keyed by (protocol kind, model name, hash of the first
    rendered prompt); a key already present is replayed, never re-sent.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._records: dict[str, LlmRecord] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        data = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise ValueError(f"{self.path}:{lineno}: bad cache line: {exc}") from exc
                    if data.get("type") == "record":
                        record = LlmRecord.from_dict(data["record"])
                        self._records[data["key"]] = record

    def __len__(self) -> int:
        return len(self._records)

    def lookup(self, key: str) -> LlmRecord | None:
        with self._lock:
            return self._records.get(key)

    def append_record(self, key: str, record: LlmRecord) -> None:
        line = json.dumps({"type": "record", "key": key, "record": record.to_dict()},
                          ensure_ascii=False)
        with self._lock:
            self._records[key] = record
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.write("\n")

    def append_exchange(self, payload: dict, content: str) -> None:
        line = json.dumps(
            {
                "type": "exchange",
                "request": payload,
                "response_content": content,
                "timestamp": _now_iso(),
            },
            ensure_ascii=False,
        )
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.write("\n")

    def records(self) -> list[LlmRecord]:
        with self._lock:
            return list(self._records.values())


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class BatchResult:
    """Outcome of one protocol run: per-input records plus failures."""

    records: list[LlmRecord]
    failures: list[tuple[str, str]]
    sent_requests: int = 0
    replayed: int = 0

    def detections(self) -> dict[str, SdgLabelSet]:
        return {r.doc_id: r.labels for r in self.records}


def _normalize_inputs(inputs) -> list[tuple[str, str]]:
    if isinstance(inputs, Corpus):
        return [(doc.id, doc.text) for doc in inputs.documents]
    pairs: list[tuple[str, str]] = []
    for item in inputs:
        if isinstance(item, str):
            pairs.append((item, item))
        else:
            doc_id, text = item
            pairs.append((str(doc_id), str(text)))
    ids = [p[0] for p in pairs]
    if len(set(ids)) != len(ids):
        raise ValueError("protocol inputs must have unique ids")
    return pairs


def run_protocol(
    spec: ProtocolSpec,
    inputs,
    transport,
    cache: ExchangeCache | None = None,
    parallelism: int = 4,
    retries: int = 5,
    backoff_base: float = 0.5,
    rate_limiter: TokenBucket | None = None,
    replay_only: bool = False,
) -> BatchResult:
    """Run a protocol over a corpus, (id, text) pairs, or a name list.

    Cached inputs are replayed without network traffic. Transport errors
    are recorded per input without aborting the batch. With
    ``replay_only`` every input must already be cached; nothing is sent.
    """
    pairs = _normalize_inputs(inputs)
    results: dict[str, LlmRecord] = {}
    failures: list[tuple[str, str]] = []
    to_run: list[tuple[str, str, str, str]] = []
    replayed = 0

    for doc_id, text in pairs:
        try:
            first_prompt = spec.render_step(0, text)
        except ProtocolError as exc:
            failures.append((doc_id, str(exc)))
            continue
        key = cache_key(spec.kind, spec.model_name, first_prompt)
        cached = cache.lookup(key) if cache is not None else None
        if cached is not None:
            results[doc_id] = cached
            replayed += 1
        elif replay_only:
            failures.append((doc_id, "not in cache (replay-only mode)"))
        else:
            to_run.append((doc_id, text, first_prompt, key))

    sent_counter = {"n": 0}
    counter_lock = threading.Lock()

    def execute(doc_id: str, text: str, first_prompt: str, key: str) -> LlmRecord:
        steps: list[StepExchange] = []

        def ask(prompt: str) -> str:
            content, attempts = chat_complete_detailed(
                [ChatMessage("user", prompt)],
                transport,
                model_name=spec.model_name,
                temperature=spec.temperature,
                max_tokens=spec.max_tokens,
                retries=retries,
                backoff_base=backoff_base,
                rate_limiter=rate_limiter,
                exchange_log=cache,
            )
            with counter_lock:
                sent_counter["n"] += 1
            steps.append(StepExchange(prompt=prompt, response=content, retries=attempts))
            return content

        first_response = ask(first_prompt)
        cleanup = "none"
        if spec.kind == "experiment1":
            if spec.local_cleanup:
                cleanup = "local"
                labels, warning = parse_with_warning(strip_however(first_response))
            else:
                second = ask(spec.render_step(1, first_response))
                labels, warning = parse_with_warning(second)
        else:
            labels, warning = parse_with_warning(first_response)
        record = LlmRecord(
            doc_id=doc_id,
            kind=spec.kind,
            model_name=spec.model_name,
            steps=tuple(steps),
            labels=labels,
            parse_warning=warning,
            cleanup=cleanup,
            timestamp=_now_iso(),
        )
        if cache is not None:
            cache.append_record(key, record)
        return record

    if to_run:
        workers = max(1, min(parallelism, len(to_run)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(execute, doc_id, text, prompt, key): doc_id
                for doc_id, text, prompt, key in to_run
            }
            for future, doc_id in futures.items():
                try:
                    results[doc_id] = future.result()
                except LlmError as exc:
                    failures.append((doc_id, f"{type(exc).__name__}: {exc}"))

    ordered = [results[doc_id] for doc_id, _ in pairs if doc_id in results]
    failure_order = {doc_id: i for i, (doc_id, _) in enumerate(pairs)}
    failures.sort(key=lambda item: failure_order.get(item[0], len(pairs)))
    return BatchResult(
        records=ordered,
        failures=failures,
        sent_requests=sent_counter["n"],
        replayed=replayed,
    )


def save_records(records: Iterable[LlmRecord], path: str | Path) -> None:
    """Write records as JSONL (one record object per line)."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False))
            fh.write("\n")


def load_records(path: str | Path) -> list[LlmRecord]:
    records: list[LlmRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(LlmRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record line: {exc}") from exc
    return records
