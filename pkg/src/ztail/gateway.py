"""Uniform access to NLI scoring and text generation backends.

Backends sit behind a small JSON-over-HTTP protocol so the orchestration
code never touches model internals:

    POST {endpoint}/v1/nli      {"premise": str, "hypotheses": [str, ...]}
        -> {"scores": [{"hypothesis": str, "entailment": float,
                        "neutral": float, "contradiction": float}, ...]}
    POST {endpoint}/v1/generate {"prompt": str, "n": int, "max_new_tokens": int,
                                 "temperature": float, "seed": int|null}
        -> {"outputs": [str, ...]}

Errors come back as non-200 with {"error": str}. Endpoints of the form
``mock:<name>`` resolve to registered in-process backends instead, which
keeps the whole pipeline runnable and deterministic with no server.

Retries use exponential backoff and fire only on transport faults
(connection errors, timeouts, 5xx), never on a well-formed refusal.
Each gateway bounds its in-flight requests with a semaphore sized
``max_concurrency``.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

import requests

__all__ = [
    "GatewayError",
    "BackendUnavailable",
    "BackendRefused",
    "ProtocolError",
    "Timeout",
    "EmptyGeneration",
    "NliRequest",
    "NliScore",
    "NliResult",
    "GenRequest",
    "BackendDescriptor",
    "NliBackend",
    "GenBackend",
    "register_mock",
    "get_mock",
    "ModelGateway",
    "open_gateway",
    "score_nli",
    "generate",
    "truncate_head",
    "apply_env_overrides",
]

PROB_SUM_TOLERANCE = 1e-6


class GatewayError(Exception):
    """Base class for backend access failures."""


class BackendUnavailable(GatewayError):
    """Transport kept failing after the configured retries."""


class BackendRefused(GatewayError):
    """The backend answered with a well-formed error; not retried."""


class ProtocolError(GatewayError):
    """The backend answered with something that is not the wire protocol."""


class Timeout(GatewayError):
    """The backend did not answer within timeout_ms, retries included."""


class EmptyGeneration(GatewayError):
    """The generation backend produced nothing but empty strings."""


def _normalize_for_identity(text: str) -> str:
    return " ".join(text.split()).casefold()


@dataclass(frozen=True)
class NliRequest:
    premise: str
    hypotheses: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.premise:
            raise ValueError("premise must be non-empty")
        if not self.hypotheses:
            raise ValueError("at least one hypothesis required")
        normalized = [_normalize_for_identity(h) for h in self.hypotheses]
        if len(set(normalized)) != len(normalized):
            raise ValueError("hypotheses must be distinct after normalization")


@dataclass(frozen=True)
class NliScore:
    hypothesis: str
    p_entail: float
    p_neutral: float
    p_contradict: float

    def __post_init__(self) -> None:
        for name, p in (
            ("entailment", self.p_entail),
            ("neutral", self.p_neutral),
            ("contradiction", self.p_contradict),
        ):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} probability {p} outside [0, 1]")
        total = self.p_entail + self.p_neutral + self.p_contradict
        if abs(total - 1.0) > PROB_SUM_TOLERANCE:
            raise ValueError(f"probabilities sum to {total}, not 1")


@dataclass(frozen=True)
class NliResult:
    """Scores in request order plus the premise actually dispatched."""

    scores: tuple[NliScore, ...]
    premise_used: str
    truncated: bool


@dataclass(frozen=True)
class GenRequest:
    prompt: str
    n: int = 1
    max_new_tokens: int = 16
    temperature: float = 0.0
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str  # "nli" | "generate"
    endpoint: str  # base URL, or "mock:<name>"
    max_premise_chars: int = 2000
    timeout_ms: int = 30_000
    max_retries: int = 3
    max_concurrency: int = 4

    def __post_init__(self) -> None:
        if self.kind not in ("nli", "generate"):
            raise ValueError(f"kind must be 'nli' or 'generate', got {self.kind!r}")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    @property
    def is_mock(self) -> bool:
        return self.endpoint.startswith("mock:")


class NliBackend(Protocol):
    def score(self, premise: str, hypotheses: tuple[str, ...]) -> list[NliScore]: ...


class GenBackend(Protocol):
    def generate(self, req: GenRequest) -> list[str]: ...


_MOCKS: dict[str, object] = {}
_MOCKS_LOCK = threading.Lock()


def register_mock(name: str, backend: object) -> None:
    """Make ``backend`` reachable as endpoint ``mock:<name>``."""
    with _MOCKS_LOCK:
        _MOCKS[name] = backend


def get_mock(name: str) -> object:
    from . import mocks  # noqa: F401  (registers the built-in mocks)

    with _MOCKS_LOCK:
        if name not in _MOCKS:
            raise ValueError(f"no mock backend registered under {name!r}")
        return _MOCKS[name]


def truncate_head(text: str, max_chars: int) -> tuple[str, bool]:
    """Keep the head of ``text`` up to ``max_chars``, cut on a whitespace boundary."""
    if len(text) <= max_chars:
        return text, False
    cut = text[:max_chars]
    head, _, _ = cut.rpartition(" ")
    return (head.rstrip() or cut), True


def apply_env_overrides(descriptor: BackendDescriptor, environ) -> BackendDescriptor:
    """NLI_ENDPOINT / GEN_ENDPOINT take precedence over configured endpoints."""
    var = "NLI_ENDPOINT" if descriptor.kind == "nli" else "GEN_ENDPOINT"
    override = environ.get(var)
    if override:
        from dataclasses import replace

        return replace(descriptor, endpoint=override)
    return descriptor


class ModelGateway:
    """One backend handle: validates, truncates, retries, bounds concurrency.

    Shareable across worker threads; the semaphore is the only mutable
    state. ``sleep`` is injectable so retry tests run instantly.
    """

    def __init__(
        self,
        descriptor: BackendDescriptor,
        retry_base_delay_s: float = 0.25,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.descriptor = descriptor
        self._retry_base_delay_s = retry_base_delay_s
        self._sleep = sleep
        self._semaphore = threading.Semaphore(descriptor.max_concurrency)
        self._mock: object | None = None
        self._session: requests.Session | None = None
        if descriptor.is_mock:
            self._mock = get_mock(descriptor.endpoint[len("mock:"):])
        else:
            self._session = requests.Session()

    def score_nli(self, req: NliRequest) -> NliResult:
        if self.descriptor.kind != "nli":
            raise ValueError(f"backend kind is {self.descriptor.kind!r}, expected 'nli'")
        premise_used, truncated = truncate_head(req.premise, self.descriptor.max_premise_chars)
        with self._semaphore:
            if self._mock is not None:
                scores = list(self._mock.score(premise_used, req.hypotheses))  # type: ignore[attr-defined]
            else:
                scores = self._with_retries(lambda: self._http_nli(premise_used, req.hypotheses))
        if len(scores) != len(req.hypotheses):
            raise ProtocolError(
                f"expected {len(req.hypotheses)} scores, got {len(scores)}"
            )
        scores = _align_to_request_order(scores, req.hypotheses)
        return NliResult(scores=tuple(scores), premise_used=premise_used, truncated=truncated)

    def generate(self, req: GenRequest) -> list[str]:
        if self.descriptor.kind != "generate":
            raise ValueError(f"backend kind is {self.descriptor.kind!r}, expected 'generate'")
        with self._semaphore:
            if self._mock is not None:
                outputs = list(self._mock.generate(req))  # type: ignore[attr-defined]
            else:
                outputs = self._with_retries(lambda: self._http_generate(req))
        deduped: list[str] = []
        for out in outputs:
            if out not in deduped:
                deduped.append(out)
        deduped = deduped[: req.n]
        if not any(deduped):
            raise EmptyGeneration("backend produced no non-empty generations")
        return deduped

    # -- HTTP plumbing -------------------------------------------------

    def _url(self, route: str) -> str:
        return self.descriptor.endpoint.rstrip("/") + route

    def _with_retries(self, call):
        attempts = self.descriptor.max_retries + 1
        last_exc: GatewayError | None = None
        for attempt in range(attempts):
            try:
                return call()
            except (Timeout, BackendUnavailable) as exc:
                last_exc = exc
                if attempt + 1 < attempts:
                    self._sleep(self._retry_base_delay_s * (2**attempt))
        assert last_exc is not None
        raise last_exc

    def _post(self, route: str, payload: dict) -> dict:
        assert self._session is not None
        try:
            resp = self._session.post(
                self._url(route),
                json=payload,
                timeout=self.descriptor.timeout_ms / 1000.0,
            )
        except requests.exceptions.Timeout as exc:
            raise Timeout(f"no response from {self._url(route)}") from exc
        except requests.exceptions.RequestException as exc:
            raise BackendUnavailable(f"transport failure on {self._url(route)}: {exc}") from exc

        if resp.status_code >= 500:
            raise BackendUnavailable(f"server error {resp.status_code} from {self._url(route)}")
        if resp.status_code != 200:
            try:
                message = resp.json().get("error", resp.text)
            except (ValueError, AttributeError):
                message = resp.text
            raise BackendRefused(f"backend refused ({resp.status_code}): {message}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"non-JSON response from {self._url(route)}") from exc
        if not isinstance(data, dict):
            raise ProtocolError("response body must be a JSON object")
        return data

    def _http_nli(self, premise: str, hypotheses: tuple[str, ...]) -> list[NliScore]:
        data = self._post("/v1/nli", {"premise": premise, "hypotheses": list(hypotheses)})
        raw = data.get("scores")
        if not isinstance(raw, list):
            raise ProtocolError("response missing 'scores' array")
        scores = []
        for entry in raw:
            try:
                scores.append(
                    NliScore(
                        hypothesis=entry["hypothesis"],
                        p_entail=float(entry["entailment"]),
                        p_neutral=float(entry["neutral"]),
                        p_contradict=float(entry["contradiction"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"malformed score entry: {entry!r}") from exc
        return scores

    def _http_generate(self, req: GenRequest) -> list[str]:
        data = self._post(
            "/v1/generate",
            {
                "prompt": req.prompt,
                "n": req.n,
                "max_new_tokens": req.max_new_tokens,
                "temperature": req.temperature,
                "seed": req.seed,
            },
        )
        outputs = data.get("outputs")
        if not isinstance(outputs, list) or not all(isinstance(o, str) for o in outputs):
            raise ProtocolError("response missing 'outputs' array of strings")
        return outputs


def _align_to_request_order(
    scores: list[NliScore], hypotheses: tuple[str, ...]
) -> list[NliScore]:
    got = [s.hypothesis for s in scores]
    if got == list(hypotheses):
        return scores
    by_hypothesis: dict[str, NliScore] = {}
    for s in scores:
        if s.hypothesis in by_hypothesis:
            raise ProtocolError(f"duplicate hypothesis in response: {s.hypothesis!r}")
        by_hypothesis[s.hypothesis] = s
    try:
        return [by_hypothesis[h] for h in hypotheses]
    except KeyError as exc:
        raise ProtocolError(f"response missing hypothesis {exc.args[0]!r}") from exc


_GATEWAYS: dict[BackendDescriptor, ModelGateway] = {}
_GATEWAYS_LOCK = threading.Lock()


def open_gateway(descriptor: BackendDescriptor) -> ModelGateway:
    """Shared gateway per descriptor, so concurrency bounds apply process-wide."""
    with _GATEWAYS_LOCK:
        gateway = _GATEWAYS.get(descriptor)
        if gateway is None:
            gateway = ModelGateway(descriptor)
            _GATEWAYS[descriptor] = gateway
        return gateway


def score_nli(backend: BackendDescriptor, req: NliRequest) -> NliResult:
    return open_gateway(backend).score_nli(req)


def generate(backend: BackendDescriptor, req: GenRequest) -> list[str]:
    return open_gateway(backend).generate(req)


def scores_as_wire(scores: list[NliScore]) -> list[dict]:
    """Wire-shape dicts for one batch of scores (used by mock/real servers)."""
    return [
        {
            "hypothesis": s.hypothesis,
            "entailment": s.p_entail,
            "neutral": s.p_neutral,
            "contradiction": s.p_contradict,
        }
        for s in scores
    ]


def parse_json_body(raw: bytes) -> dict:
    """Shared helper for servers implementing the protocol."""
    try:
        data = json.loads(raw.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValueError(f"invalid JSON body: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError("body must be a JSON object")
    return data
