"""Chat/generate backends: a JSON-over-HTTP client and a scripted mock."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
import warnings
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import requests

from .schema import ExtractionSchema

log = logging.getLogger(__name__)

BACKEND_URL_ENV = "GENIE_BACKEND_URL"
DEFAULT_URL = "http://localhost:11434"
WARM_UP_PROMPT = "Reply with OK."


class BackendUnreachable(ConnectionError):
    pass


class BackendError(RuntimeError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"backend returned HTTP {status}: {body[:200]}")


class ToolUnsupported(ValueError):
    pass


class NoToolCallReturned(RuntimeError):
    def __init__(self, text: str = ""):
        self.text = text
        super().__init__("model answered without a tool call")


class OutputTruncated(UserWarning):
    """Generation stopped at the output-token limit."""


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    seed: int = 42
    max_output_tokens: int = 2048
    context_window_tokens: int = 32768

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.context_window_tokens < self.max_output_tokens:
            raise ValueError("context window must hold max_output_tokens")

    def options(self) -> dict:
        return {
            "temperature": self.temperature,
            "seed": self.seed,
            "num_ctx": self.context_window_tokens,
            "num_predict": self.max_output_tokens,
        }


@dataclass(frozen=True)
class ModelRef:
    id: str
    family: str = ""
    parameter_count_b: float | None = None
    quantization: str = ""
    supports_tool_calls: bool = False

    def __post_init__(self):
        if not self.id:
            raise ValueError("model id must be non-empty")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelRef":
        return cls(
            id=str(d["id"]),
            family=d.get("family", "") or "",
            parameter_count_b=d.get("parameter_count_b"),
            quantization=d.get("quantization", "") or "",
            supports_tool_calls=bool(d.get("supports_tool_calls", False)),
        )


@dataclass(frozen=True)
class Completion:
    text: str
    elapsed_seconds: float
    token_counts: tuple[int, int] | None = None
    truncated: bool = False
    tool_arguments: Any = None


def _flag_truncation(model: ModelRef, truncated: bool) -> None:
    if truncated:
        warnings.warn(f"{model.id}: output hit the token limit", OutputTruncated, stacklevel=3)


class Backend:
    """Common surface shared by the HTTP client and the mock."""

    retries: int = 0

    def _complete(self, model: ModelRef, prompt: str, params: GenerationParams) -> Completion:
        raise NotImplementedError

    def _complete_tool(
        self, model: ModelRef, prompt: str, schema: ExtractionSchema, params: GenerationParams
    ) -> Completion:
        raise NotImplementedError

    def _with_retries(self, fn: Callable[[], Completion]) -> Completion:
        attempt = 0
        while True:
            try:
                return fn()
            except (BackendUnreachable, BackendError) as exc:
                if attempt >= self.retries:
                    raise
                attempt += 1
                log.warning("backend call failed (%s); retry attempt %d of %d", exc, attempt, self.retries)

    def generate(self, model: ModelRef, prompt: str, params: GenerationParams) -> Completion:
        if not prompt:
            raise ValueError("prompt is empty")
        out = self._with_retries(lambda: self._complete(model, prompt, params))
        _flag_truncation(model, out.truncated)
        return out

    def generate_with_tool(
        self, model: ModelRef, prompt: str, schema: ExtractionSchema, params: GenerationParams
    ) -> Completion:
        """Ask for the answer as a call to a tool whose signature is ``schema``.

        The decoded arguments are on ``Completion.tool_arguments``.
        """
        if not model.supports_tool_calls:
            raise ToolUnsupported(f"model {model.id!r} does not support tool calls")
        out = self._with_retries(lambda: self._complete_tool(model, prompt, schema, params))
        _flag_truncation(model, out.truncated)
        if out.tool_arguments is None:
            raise NoToolCallReturned(out.text)
        return out

    def warm_up(self, model: ModelRef, params: GenerationParams | None = None) -> float:
        """Run one throwaway generation and return its duration.

        Callers keep this duration apart from any per-article timing.
        """
        params = params or GenerationParams()
        t0 = time.perf_counter()
        self.generate(model, WARM_UP_PROMPT, params)
        return time.perf_counter() - t0

    def check_reachable(self) -> None:
        pass

    def clone(self) -> "Backend":
        """A handle safe to use from another worker thread."""
        return self


class HttpBackend(Backend):
    """Client for an Ollama-style server (``/api/generate`` and ``/api/chat``)."""

    def __init__(self, base_url: str | None = None, timeout_s: float = 300.0, retries: int = 0,
                 session: requests.Session | None = None):
        self.base_url = (base_url or os.environ.get(BACKEND_URL_ENV) or DEFAULT_URL).rstrip("/")
        self.timeout_s = timeout_s
        self.retries = retries
        self.session = session or requests.Session()

    def _post(self, path: str, payload: dict) -> tuple[dict, float]:
        url = f"{self.base_url}{path}"
        t0 = time.perf_counter()
        try:
            resp = self.session.post(url, json=payload, timeout=self.timeout_s)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise BackendUnreachable(f"cannot reach {url}: {exc}") from exc
        elapsed = time.perf_counter() - t0
        if resp.status_code != 200:
            raise BackendError(resp.status_code, resp.text)
        try:
            return resp.json(), elapsed
        except ValueError as exc:
            raise BackendError(resp.status_code, f"non-JSON body: {resp.text[:200]}") from exc

    @staticmethod
    def _truncated(body: dict, params: GenerationParams) -> bool:
        if body.get("done_reason") == "length":
            return True
        count = body.get("eval_count")
        return count is not None and count >= params.max_output_tokens

    @staticmethod
    def _tokens(body: dict):
        if "prompt_eval_count" in body or "eval_count" in body:
            return (int(body.get("prompt_eval_count", 0)), int(body.get("eval_count", 0)))
        return None

    def _complete(self, model, prompt, params):
        body, elapsed = self._post(
            "/api/generate",
            {"model": model.id, "prompt": prompt, "stream": False, "options": params.options()},
        )
        return Completion(
            text=body.get("response", ""),
            elapsed_seconds=elapsed,
            token_counts=self._tokens(body),
            truncated=self._truncated(body, params),
        )

    def _complete_tool(self, model, prompt, schema, params):
        tool = {
            "type": "function",
            "function": {
                "name": schema.name,
                "description": f"Record the extracted {schema.name} fields.",
                "parameters": schema.to_json_schema(),
            },
        }
        body, elapsed = self._post(
            "/api/chat",
            {
                "model": model.id,
                "messages": [{"role": "user", "content": prompt}],
                "tools": [tool],
                "stream": False,
                "options": params.options(),
            },
        )
        message = body.get("message") or {}
        args = None
        for call in message.get("tool_calls") or []:
            fn = call.get("function") or {}
            args = fn.get("arguments")
            if isinstance(args, str):
                try:
                    args = json.loads(args)
                except ValueError:
                    pass
            break
        text = message.get("content", "") or ""
        if args is not None:
            text = json.dumps(args, ensure_ascii=False)
        return Completion(
            text=text,
            elapsed_seconds=elapsed,
            token_counts=self._tokens(body),
            truncated=self._truncated(body, params),
            tool_arguments=args,
        )

    def clone(self) -> "HttpBackend":
        return HttpBackend(self.base_url, self.timeout_s, self.retries)

    def check_reachable(self) -> None:
        try:
            self.session.get(f"{self.base_url}/api/tags", timeout=min(self.timeout_s, 10))
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise BackendUnreachable(f"cannot reach {self.base_url}: {exc}") from exc


Responder = Callable[[ModelRef, str], str]


class MockBackend(Backend):
    """Deterministic backend driven by a script and/or a responder function.

    ``script`` maps exact prompts to replies. A reply is a string or a mapping
    with ``"text"`` (free-text answer) and/or ``"tool_call"`` (decoded tool
    arguments) entries. Unscripted prompts go to
    ``responder``. Reported latency is simulated from character counts so
    timings are reproducible too.
    """

    def __init__(self, script: Mapping[str, Any] | None = None, responder: Responder | None = None,
                 latency_base_s: float = 0.0, latency_per_char_s: float = 0.0,
                 reachable: bool = True, fail_prompts: Mapping[str, int] | None = None,
                 speed: Mapping[str, float] | None = None):
        self.speed = dict(speed or {})
        self.script = dict(script or {})
        self.responder = responder
        self.latency_base_s = latency_base_s
        self.latency_per_char_s = latency_per_char_s
        self.reachable = reachable
        self.fail_prompts = dict(fail_prompts or {})
        self.calls: list[tuple[str, str]] = []

    def _reply(self, model: ModelRef, prompt: str) -> Any:
        if not self.reachable:
            raise BackendUnreachable("mock backend configured as unreachable")
        status = self.fail_prompts.get(prompt)
        if status:
            raise BackendError(status, "scripted failure")
        self.calls.append((model.id, prompt))
        if prompt in self.script:
            return self.script[prompt]
        if self.responder is not None:
            return self.responder(model, prompt)
        raise BackendError(404, f"no scripted reply for prompt {prompt[:60]!r}")

    def _cut(self, text: str, params: GenerationParams) -> tuple[str, int, bool]:
        tokens = text.split()
        if len(tokens) >= params.max_output_tokens:
            return " ".join(tokens[: params.max_output_tokens]), params.max_output_tokens, True
        return text, len(tokens), False

    def _latency(self, prompt: str, text: str, model: ModelRef | None = None) -> float:
        scale = self.speed.get(model.id, 1.0) if model is not None else 1.0
        return scale * (self.latency_base_s + self.latency_per_char_s * (len(prompt) + len(text)))

    def _complete(self, model, prompt, params):
        reply = self._reply(model, prompt)
        if isinstance(reply, Mapping) and "text" in reply:
            reply = reply["text"]
        if not isinstance(reply, str):
            reply = json.dumps(reply.get("tool_call", reply), ensure_ascii=False)
        text, n_out, truncated = self._cut(reply, params)
        return Completion(text, self._latency(prompt, text, model), (len(prompt.split()), n_out), truncated)

    def _complete_tool(self, model, prompt, schema, params):
        reply = self._reply(model, prompt)
        if isinstance(reply, Mapping) and "tool_call" in reply:
            args = reply["tool_call"]
            text = json.dumps(args, ensure_ascii=False)
            return Completion(text, self._latency(prompt, text, model), (len(prompt.split()), len(text.split())),
                              tool_arguments=args)
        if isinstance(reply, Mapping):
            reply = reply.get("text", json.dumps(reply, ensure_ascii=False))
        text, n_out, truncated = self._cut(str(reply), params)
        return Completion(text, self._latency(prompt, text, model), (len(prompt.split()), n_out), truncated)

    def check_reachable(self) -> None:
        if not self.reachable:
            raise BackendUnreachable("mock backend configured as unreachable")


def stable_fraction(*parts: str) -> float:
    """Deterministic value in [0, 1) derived from the given strings."""
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64
