"""Minimal HTTP server speaking the backend wire protocol over mock models.

Lets HTTP client code (retries, timeouts, protocol parsing) be exercised
against a real socket without any model weights. Fault modes make the
first N requests fail in controlled ways:

    "unavailable"  -> 503 with an error body
    "garbage"      -> 200 with a non-protocol body
    "refuse"       -> 400 with an error body (a well-formed refusal)
"""

from __future__ import annotations

import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .gateway import GenRequest, parse_json_body, scores_as_wire
from .mocks import KeywordNliBackend, PrimedEchoGenerator

__all__ = ["MockModelServer"]


class MockModelServer:
    """Threaded server bound to 127.0.0.1 on an ephemeral (or given) port."""

    def __init__(
        self,
        nli_backend=None,
        gen_backend=None,
        port: int = 0,
        fail_first: int = 0,
        fail_mode: str = "unavailable",
    ):
        self.nli_backend = nli_backend or KeywordNliBackend()
        self.gen_backend = gen_backend or PrimedEchoGenerator()
        self.fail_mode = fail_mode
        self._fails_left = fail_first
        self._lock = threading.Lock()
        self.request_count = 0

        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # silence per-request stderr noise
                pass

            def do_POST(self):
                server._handle(self)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockModelServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "MockModelServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- request handling ------------------------------------------------

    def _take_fault(self) -> str | None:
        with self._lock:
            self.request_count += 1
            if self._fails_left > 0:
                self._fails_left -= 1
                return self.fail_mode
        return None

    def _handle(self, handler: BaseHTTPRequestHandler) -> None:
        fault = self._take_fault()
        if fault == "unavailable":
            _send(handler, 503, {"error": "backend warming up"})
            return
        if fault == "garbage":
            _send_raw(handler, 200, b'{"unexpected": true}')
            return
        if fault == "refuse":
            _send(handler, 400, {"error": "refused by policy"})
            return

        length = int(handler.headers.get("Content-Length", 0))
        try:
            body = parse_json_body(handler.rfile.read(length))
        except ValueError as exc:
            _send(handler, 400, {"error": str(exc)})
            return

        if handler.path == "/v1/nli":
            self._serve_nli(handler, body)
        elif handler.path == "/v1/generate":
            self._serve_generate(handler, body)
        else:
            _send(handler, 404, {"error": f"no route {handler.path}"})

    def _serve_nli(self, handler, body: dict) -> None:
        premise = body.get("premise")
        hypotheses = body.get("hypotheses")
        if not isinstance(premise, str) or not isinstance(hypotheses, list) or not hypotheses:
            _send(handler, 400, {"error": "need 'premise' and non-empty 'hypotheses'"})
            return
        scores = self.nli_backend.score(premise, tuple(hypotheses))
        _send(handler, 200, {"scores": scores_as_wire(scores)})

    def _serve_generate(self, handler, body: dict) -> None:
        try:
            req = GenRequest(
                prompt=str(body["prompt"]),
                n=int(body.get("n", 1)),
                max_new_tokens=int(body.get("max_new_tokens", 16)),
                temperature=float(body.get("temperature", 0.0)),
                seed=body.get("seed"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            _send(handler, 400, {"error": f"bad generate request: {exc}"})
            return
        outputs = self.gen_backend.generate(req)
        _send(handler, 200, {"outputs": outputs[: req.n]})


def _send(handler: BaseHTTPRequestHandler, status: int, payload: dict) -> None:
    import json

    _send_raw(handler, status, json.dumps(payload).encode("utf-8"))


def _send_raw(handler: BaseHTTPRequestHandler, status: int, body: bytes) -> None:
    handler.send_response(status)
    handler.send_header("Content-Type", "application/json")
    handler.send_header("Content-Length", str(len(body)))
    handler.end_headers()
    handler.wfile.write(body)
