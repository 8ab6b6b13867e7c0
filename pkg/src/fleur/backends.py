"""Inference backends: an HTTP client for logprob-capable chat servers and a scripted mock.

Wire protocol (shared with any conforming server): HTTP POST of a JSON body

    {"model": ..., "messages": [{"role": ..., "content": [
        {"type": "image", "data": <base64>, "media_type": ...} |
        {"type": "text", "text": ...}]}],
     "temperature": ..., "top_p": ..., "max_tokens": ...,
     "logprobs": true, "top_logprobs": K, "seed": <optional int>}

to ``<endpoint>/v1/chat/completions``; the response carries
``choices[0].logprobs.content[]`` with per-position ``token``, ``logprob`` and
``top_logprobs`` entries.  Probabilities travel as natural-log values and are
only exponentiated downstream, when digit distributions are built.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

import httpx

from .errors import BackendConfigError, ScriptExhaustedError, TransportError

logger = logging.getLogger(__name__)

CHAT_COMPLETIONS_PATH = "/v1/chat/completions"

#: Floor on requested alternatives: the ten digit tokens plus headroom.
MIN_TOP_ALTERNATIVES = 20


class FinishReason(str, enum.Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class ImagePayload:
    """Raw image bytes plus their declared media type."""

    data: bytes
    media_type: str = "image/jpeg"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.data).hexdigest()


@dataclass(frozen=True)
class DecodeParams:
    """Decoding settings; temperature 0 means greedy (deterministic) decoding."""

    temperature: float = 0.0
    nucleus_mass: float = 1.0
    max_new_tokens: int = 32
    top_alternatives: int = MIN_TOP_ALTERNATIVES

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0.0 < self.nucleus_mass <= 1.0:
            raise ValueError("nucleus_mass must be in (0, 1]")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be positive")
        if self.top_alternatives < MIN_TOP_ALTERNATIVES:
            raise ValueError(f"top_alternatives must be >= {MIN_TOP_ALTERNATIVES}")

    @property
    def greedy(self) -> bool:
        return self.temperature == 0.0


@dataclass(frozen=True)
class TokenAlternative:
    token: str
    logprob: float


@dataclass(frozen=True)
class TokenLogprob:
    """One generated token with the backend's top-K next-token candidates."""

    token: str
    logprob: float
    alternatives: tuple[TokenAlternative, ...] = ()


@dataclass(frozen=True)
class GenerationRequest:
    """One (image, conversation) generation request against a named model."""

    image: ImagePayload
    turns: tuple[tuple[str, str], ...]
    decode: DecodeParams = field(default_factory=DecodeParams)
    model_id: str = "default"
    seed: int | None = None


@dataclass(frozen=True)
class GenerationResult:
    """Generated tokens with per-position alternative logprobs."""

    tokens: tuple[TokenLogprob, ...]
    finish_reason: FinishReason = FinishReason.STOP

    @property
    def text(self) -> str:
        return "".join(t.token for t in self.tokens)


class Backend(Protocol):
    """Anything that can serve GenerationRequests."""

    concurrency: int

    def generate(self, request: GenerationRequest) -> GenerationResult: ...


# --------------------------------------------------------------------------
# Wire codec


def request_to_wire(request: GenerationRequest) -> dict[str, Any]:
    """Serialize a request to the JSON wire body. Image rides on the first user turn."""
    messages = []
    image_attached = False
    for role, text in request.turns:
        content: list[dict[str, Any]] = []
        if role == "user" and not image_attached:
            content.append(
                {
                    "type": "image",
                    "data": base64.b64encode(request.image.data).decode("ascii"),
                    "media_type": request.image.media_type,
                }
            )
            image_attached = True
        content.append({"type": "text", "text": text})
        messages.append({"role": role, "content": content})
    body: dict[str, Any] = {
        "model": request.model_id,
        "messages": messages,
        "temperature": request.decode.temperature,
        "top_p": request.decode.nucleus_mass,
        "max_tokens": request.decode.max_new_tokens,
        "logprobs": True,
        "top_logprobs": request.decode.top_alternatives,
    }
    if request.seed is not None:
        body["seed"] = request.seed
    return body


def request_from_wire(body: dict[str, Any]) -> GenerationRequest:
    """Parse a JSON wire body back into a GenerationRequest (inverse of request_to_wire)."""
    image: ImagePayload | None = None
    turns: list[tuple[str, str]] = []
    for message in body["messages"]:
        texts = []
        for part in message["content"]:
            if part["type"] == "image":
                if image is not None:
                    raise BackendConfigError("request carries more than one image")
                image = ImagePayload(
                    data=base64.b64decode(part["data"]),
                    media_type=part.get("media_type", "image/jpeg"),
                )
            elif part["type"] == "text":
                texts.append(part["text"])
            else:
                raise BackendConfigError(f"unknown content part type {part['type']!r}")
        turns.append((message["role"], "".join(texts)))
    if image is None:
        raise BackendConfigError("request carries no image")
    if not body.get("logprobs"):
        raise BackendConfigError("request does not ask for logprobs")
    decode = DecodeParams(
        temperature=body.get("temperature", 0.0),
        nucleus_mass=body.get("top_p", 1.0),
        max_new_tokens=body["max_tokens"],
        top_alternatives=body["top_logprobs"],
    )
    return GenerationRequest(
        image=image,
        turns=tuple(turns),
        decode=decode,
        model_id=body["model"],
        seed=body.get("seed"),
    )


def result_to_dict(result: GenerationResult) -> dict[str, Any]:
    """JSON-safe encoding of a result; floats round-trip exactly via repr."""
    return {
        "finish_reason": result.finish_reason.value,
        "tokens": [
            {
                "token": t.token,
                "logprob": t.logprob,
                "top_logprobs": [{"token": a.token, "logprob": a.logprob} for a in t.alternatives],
            }
            for t in result.tokens
        ],
    }


def result_from_dict(data: dict[str, Any]) -> GenerationResult:
    tokens = tuple(
        TokenLogprob(
            token=t["token"],
            logprob=t["logprob"],
            alternatives=tuple(
                TokenAlternative(a["token"], a["logprob"]) for a in t.get("top_logprobs", ())
            ),
        )
        for t in data["tokens"]
    )
    return GenerationResult(tokens=tokens, finish_reason=FinishReason(data["finish_reason"]))


def result_to_wire(result: GenerationResult, model_id: str) -> dict[str, Any]:
    """Encode a result as a chat-completions response body."""
    encoded = result_to_dict(result)
    return {
        "model": model_id,
        "choices": [
            {
                "index": 0,
                "message": {"role": "assistant", "content": result.text},
                "finish_reason": encoded["finish_reason"],
                "logprobs": {"content": encoded["tokens"]},
            }
        ],
    }


def result_from_wire(body: dict[str, Any], greedy: bool = False) -> GenerationResult:
    """Parse a chat-completions response body.

    Raises BackendConfigError when the response carries no logprobs.  Ordering
    and argmax violations from real backends are audited and logged, not fatal.
    """
    try:
        choice = body["choices"][0]
    except (KeyError, IndexError) as exc:
        raise BackendConfigError(f"malformed completion response: {exc}") from exc
    logprobs = choice.get("logprobs")
    if not logprobs or logprobs.get("content") is None:
        raise BackendConfigError("backend response carries no logprobs; enable logprobs support")
    try:
        result = result_from_dict(
            {"finish_reason": choice.get("finish_reason", "stop"), "tokens": logprobs["content"]}
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BackendConfigError(f"malformed completion response: {exc}") from exc
    _audit_result(result, greedy)
    return result


def _audit_result(result: GenerationResult, greedy: bool) -> None:
    for pos, tok in enumerate(result.tokens):
        lps = [a.logprob for a in tok.alternatives]
        if any(a < b for a, b in zip(lps, lps[1:])):
            logger.warning("alternatives not sorted by logprob at position %d", pos)
        if greedy and tok.alternatives:
            if tok.logprob < max(lps):
                logger.warning(
                    "greedy choice %r (logprob %g) below best alternative at position %d",
                    tok.token,
                    tok.logprob,
                    pos,
                )
            if all(a.token != tok.token for a in tok.alternatives):
                logger.warning("greedy choice %r missing from alternatives at position %d", tok.token, pos)


# --------------------------------------------------------------------------
# HTTP backend


class HttpBackend:
    """Client for a conforming inference server.

    Transient transport failures are retried with exponential backoff up to a
    configured budget; a generation is never silently resampled beyond that
    (greedy requests are deterministic server-side, so a retry cannot change
    the result).  In-flight concurrency is capped at ``concurrency`` requests.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        concurrency: int = 4,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.max_retries = max_retries
        self.backoff = backoff
        self.concurrency = concurrency
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.Semaphore(concurrency)

    def generate(self, request: GenerationRequest) -> GenerationResult:
        body = request_to_wire(request)
        url = self.endpoint + CHAT_COMPLETIONS_PATH
        last_error: Exception | None = None
        with self._slots:
            for attempt in range(self.max_retries + 1):
                if attempt:
                    delay = self.backoff * 2 ** (attempt - 1)
                    logger.info("retrying %s in %.1fs (attempt %d)", url, delay, attempt + 1)
                    time.sleep(delay)
                try:
                    response = self._client.post(url, json=body)
                except httpx.HTTPError as exc:
                    last_error = exc
                    continue
                if response.status_code >= 500:
                    last_error = TransportError(f"server error {response.status_code}: {response.text[:200]}")
                    continue
                if response.status_code >= 400:
                    raise BackendConfigError(
                        f"backend rejected request ({response.status_code}): {response.text[:500]}"
                    )
                return result_from_wire(response.json(), greedy=request.decode.greedy)
        raise TransportError(f"backend unreachable after {self.max_retries + 1} attempts: {last_error}")

    def close(self) -> None:
        self._client.close()


# --------------------------------------------------------------------------
# Scripted mock backend


@dataclass(frozen=True)
class ScriptedGeneration:
    """One scripted backend answer; ``variants`` are the stochastic alternatives."""

    result: GenerationResult
    variants: tuple[GenerationResult, ...] = ()


class MockBackend:
    """Deterministic in-memory backend serving a fixed script.

    Every call consumes the next script entry, in order.  Greedy requests get
    the entry's result verbatim; stochastic requests (temperature > 0) pick
    among the entry's variants using the RNG seeded at construction, so a
    fixed seed yields a reproducible variant sequence.  Sequential by
    construction, hence ``concurrency`` 1.
    """

    concurrency = 1

    def __init__(self, script: list[ScriptedGeneration] | tuple[ScriptedGeneration, ...], seed: int = 0):
        if not script:
            raise ValueError("mock script must be non-empty")
        for index, entry in enumerate(script):
            self._check_greedy_invariant(entry.result, index)
        self._script = tuple(script)
        self._rng = random.Random(seed)
        self._pos = 0
        self._lock = threading.Lock()

    @staticmethod
    def _check_greedy_invariant(result: GenerationResult, index: int) -> None:
        # Greedy-served results must pick the argmax token at every position.
        for pos, tok in enumerate(result.tokens):
            if not tok.alternatives:
                continue
            if tok.logprob < max(a.logprob for a in tok.alternatives):
                raise ValueError(
                    f"script entry {index}, position {pos}: greedy token {tok.token!r} "
                    "is not the most probable alternative"
                )

    def generate(self, request: GenerationRequest) -> GenerationResult:
        with self._lock:
            if self._pos >= len(self._script):
                raise ScriptExhaustedError(
                    f"mock script exhausted after {len(self._script)} generations"
                )
            entry = self._script[self._pos]
            self._pos += 1
            if request.decode.greedy:
                return entry.result
            pool = entry.variants or (entry.result,)
            return self._rng.choice(pool)

    @property
    def served(self) -> int:
        with self._lock:
            return self._pos

    @classmethod
    def from_file(cls, path: str | Path, seed: int = 0) -> "MockBackend":
        """Load a script from a JSON file: {"entries": [{"result": ..., "variants": [...]}]}."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [
            ScriptedGeneration(
                result=result_from_dict(e["result"]),
                variants=tuple(result_from_dict(v) for v in e.get("variants", ())),
            )
            for e in data["entries"]
        ]
        return cls(entries, seed=seed)


def configure_mock(script, seed: int = 0) -> MockBackend:
    """Build a scripted mock backend (entries served in order; seeded variant picks)."""
    return MockBackend(script, seed=seed)


def script_to_dict(script) -> dict[str, Any]:
    """Encode a script for on-disk storage (inverse of MockBackend.from_file)."""
    return {
        "entries": [
            {
                "result": result_to_dict(e.result),
                "variants": [result_to_dict(v) for v in e.variants],
            }
            for e in script
        ]
    }
