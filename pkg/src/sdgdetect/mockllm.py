"""A local mock chat-completions server for offline runs and tests.

Implements just enough of the wire protocol (POST, JSON body with model,
temperature, messages; response with choices[0].message.content) to stand
in for the real endpoint. Replies are deterministic functions of the last
user message, and a status script can inject 429/500 failures to exercise
retry handling.

Run standalone with ``python -m sdgdetect.mockllm --port 8109``.
"""

from __future__ import annotations

import argparse
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Sequence

from .llm import EXPERIMENT1_STEP2, parse_sdg_labels, strip_however

_STEP2_PREFIX = EXPERIMENT1_STEP2.split("{text}")[0]


def _last_user_content(payload: dict) -> str:
    for message in reversed(payload.get("messages", [])):
        if message.get("role") == "user":
            return message.get("content", "")
    return ""


def _relevant_segment(content: str) -> str:
    """The part of a prompt the mock 'reads': the last Text: block if any."""
    marker = "\nText: "
    if marker in content:
        tail = content.rsplit(marker, 1)[1]
        return tail.split("\nLabels:", 1)[0]
    return content


def make_echo_reply(
    keywords: dict[int, Sequence[str]] | None = None,
    however_note: bool = False,
) -> Callable[[dict], str]:
    """Build a deterministic reply function.

    Detection is by explicit SDG markers in the input, plus any configured
    per-SDG keywords (matched case-insensitively as substrings). The
    two-step cleaning prompt is recognized and answered by reading only the
    text before "however", mirroring what the cleaning step is for. With
    ``however_note`` the first-step answer appends a negative clause, so
    downstream cleaning actually has something to remove.
    """
    keyword_map = {k: [w.lower() for w in words] for k, words in (keywords or {}).items()}

    def reply(payload: dict) -> str:
        content = _last_user_content(payload)
        if content.startswith(_STEP2_PREFIX):
            value = content[len(_STEP2_PREFIX):]
            labels = parse_sdg_labels(strip_however(value))
            if not labels:
                return "NA"
            return ", ".join(f"SDG {c}" for c in sorted(labels))
        segment = _relevant_segment(content)
        lowered = segment.lower()
        found = set(parse_sdg_labels(segment))
        for sdg, words in keyword_map.items():
            if any(w in lowered for w in words):
                found.add(sdg)
        if not found:
            return "NA"
        listed = " and ".join(f"SDG {c}" for c in sorted(found))
        answer = f"This text indicates a direct contribution to {listed}."
        if however_note:
            missing = next(c for c in range(1, 18) if c not in found)
            answer += f" However, SDG {missing} is not addressed."
        return answer

    return reply


class MockChatServer:
    """Threaded HTTP server speaking the chat-completions wire protocol.

    ``script`` is a list of HTTP status codes consumed one per request
    before normal 200 handling resumes; use it to inject failures.
    """

    def __init__(
        self,
        reply: Callable[[dict], str] | None = None,
        script: Sequence[int] = (),
        host: str = "127.0.0.1",
        port: int = 0,
    ) -> None:
        self.reply = reply or make_echo_reply()
        self.script = list(script)
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # noqa: N802 - silence request logging
                pass

            def do_POST(self):  # noqa: N802
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    payload = json.loads(self.rfile.read(length).decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError):
                    self._respond(400, {"error": "bad json"})
                    return
                with outer._lock:
                    outer.requests.append(payload)
                    status = outer.script.pop(0) if outer.script else 200
                if status != 200:
                    self._respond(status, {"error": {"message": f"scripted {status}"}})
                    return
                content = outer.reply(payload)
                self._respond(
                    200,
                    {
                        "model": payload.get("model", ""),
                        "choices": [
                            {"message": {"role": "assistant", "content": content}}
                        ],
                    },
                )

            def _respond(self, status: int, body: dict) -> None:
                raw = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    @property
    def request_count(self) -> int:
        with self._lock:
            return len(self.requests)

    def start(self) -> "MockChatServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Run a mock chat-completions server.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8109)
    parser.add_argument(
        "--however",
        action="store_true",
        help="append a negative 'However, ...' clause to detections",
    )
    args = parser.parse_args(argv)
    server = MockChatServer(
        reply=make_echo_reply(however_note=args.however), host=args.host, port=args.port
    )
    server.start()
    print(f"mock chat-completions server listening on {server.endpoint}")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
