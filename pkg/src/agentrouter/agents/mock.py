"""Deterministic stand-in for a chat backend, in-process or over local HTTP.

The mock knows the right answer for each question it was given and
behaves like a compliant model for every role, with a few scripted
wrinkles that exercise the multi-call flows: the first self-consistency
sample is wrong, the first react draft is wrong until the reviewer asks
for a revision, and debaters never box their answers.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .prompts import role_of

_QUESTION = re.compile(r"^Question: (.*)$", re.M)
_REVISION = re.compile(r"^Revision:\n(\d+)$", re.M)
_ENTITY = re.compile(r"^(E\d+): (.+)$", re.M)
_AGENT = re.compile(r"^Agent: (\S+)$", re.M)

DRAFT = "unresolved draft"


class MockBackend:
    def __init__(self, truth: dict[str, str], empty_judge: bool = False):
        self.truth = dict(truth)
        self.empty_judge = empty_judge
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, messages, seed=None) -> str:
        with self._lock:
            self.calls += 1
        system, user = messages[0]["content"], messages[-1]["content"]
        role = role_of(system)
        m = _QUESTION.search(user)
        answer = self.truth.get(m.group(1), "") if m else ""
        if role == "entity_judge":
            return "" if self.empty_judge else self._judge(user)
        if role == "reflect":
            rev = _REVISION.search(user)
            if rev is None or int(rev.group(1)) == 0:
                return "Feedback: the draft does not match the context.\nStatus: revise"
            return "The answer is supported.\nStatus: final"
        if role == "react" and "\n\nFeedback:\n" not in user:
            return f"Plan: guess quickly.\n\\boxed{{{DRAFT}}}"
        if role == "cot" and seed == 0:
            return f"Too hasty.\n\\boxed{{{DRAFT}}}"
        if role == "debater_a":
            return f"Claim: {answer}. The context supports it directly."
        if role == "debater_b":
            return f"A holds up: {answer}. Checked the second hop as well."
        if role is None:
            return "I cannot tell what you are asking."
        return f"Reasoning over the context.\n\\boxed{{{answer}}}"

    @staticmethod
    def _judge(user: str) -> str:
        agent = _AGENT.search(user)
        agent_id = agent.group(1) if agent else ""
        scores = {}
        for label, surface in _ENTITY.findall(user):
            digest = hashlib.blake2b(f"{agent_id}|{surface}".encode(), digest_size=2).digest()
            scores[label] = round(int.from_bytes(digest, "big") / 65535, 4)
        return json.dumps(scores, sort_keys=True)


class MockServer:
    """Serve a :class:`MockBackend` as an OpenAI-style HTTP endpoint on localhost.

    ``rate_limit_first`` answers that many initial requests with HTTP 429.
    """

    def __init__(self, backend: MockBackend, rate_limit_first: int = 0):
        self.backend = backend
        self.rate_limit_first = rate_limit_first
        self.requests = 0
        self.throttled = 0
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def _handler(self):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status, body, headers=()):
                data = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                for k, v in headers:
                    self.send_header(k, v)
                self.end_headers()
                self.wfile.write(data)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                with outer._lock:
                    outer.requests += 1
                    throttle = outer.throttled < outer.rate_limit_first
                    if throttle:
                        outer.throttled += 1
                if throttle:
                    self._send(429, {"error": "rate limited"}, [("Retry-After", "0")])
                    return
                if not self.headers.get("Authorization", "").startswith("Bearer "):
                    self._send(401, {"error": "missing key"})
                    return
                text = outer.backend.complete(payload.get("messages", []), payload.get("seed"))
                self._send(200, {"choices": [{"message": {"role": "assistant", "content": text}}],
                                 "model": payload.get("model")})

        return Handler

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()
