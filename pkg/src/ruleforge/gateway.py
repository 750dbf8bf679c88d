"""Chat-completion gateway: a live HTTP backend and a scripted mock.

The mock replays canned responses from a JSON file, keyed by agent role
and call order, and fails loudly on underrun or leftovers; it is what
makes training runs bit-reproducible in tests.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

from .errors import GatewayError, MockScriptError

BACKEND_HTTP = "http"
BACKEND_MOCK = "mock"

ROLE_DETECTION = "detection"
ROLE_REPAIR = "repair"
ROLE_REVIEW = "review"
AGENT_ROLES = (ROLE_DETECTION, ROLE_REPAIR, ROLE_REVIEW)

# Proposal diversity wants heat; repair and review want stability.
DEFAULT_TEMPERATURES = {ROLE_DETECTION: 1.0, ROLE_REPAIR: 0.0, ROLE_REVIEW: 0.0}
DEFAULT_MAX_TOKENS = 4096

_RETRY_ATTEMPTS = 5
_BACKOFF_BASE = 0.5


def approx_token_count(text: str) -> int:
    """Whitespace-token approximation, used when the backend reports no usage."""
    return len(text.split())


@dataclass(frozen=True)
class CompletionRequest:
    role: str
    system_prompt: str
    user_prompt: str
    temperature: float
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.role not in AGENT_ROLES:
            raise ValueError(f"unknown agent role {self.role!r}")

    @classmethod
    def for_role(
        cls, role: str, system_prompt: str, user_prompt: str, **overrides
    ) -> "CompletionRequest":
        temperature = overrides.pop("temperature", DEFAULT_TEMPERATURES.get(role, 0.0))
        return cls(role, system_prompt, user_prompt, temperature, **overrides)


@dataclass(frozen=True)
class ChatExchange:
    system_prompt: str
    user_prompt: str
    response: str
    backend: str
    temperature: float
    max_tokens: int
    input_tokens: int
    output_tokens: int

    def __post_init__(self) -> None:
        if self.backend not in (BACKEND_HTTP, BACKEND_MOCK):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def as_dict(self) -> dict:
        return {
            "system_prompt": self.system_prompt,
            "user_prompt": self.user_prompt,
            "response": self.response,
            "backend": self.backend,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChatExchange":
        return cls(**data)


class MockScript:
    """Ordered canned responses per agent role, consumed strictly in order."""

    def __init__(self, responses: dict[str, list[str]]):
        for role in responses:
            if role not in AGENT_ROLES:
                raise MockScriptError(f"mock script has unknown role {role!r}")
        self._responses = {role: list(items) for role, items in responses.items()}
        self._cursor = {role: 0 for role in self._responses}

    @classmethod
    def load(cls, path: Path) -> "MockScript":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise MockScriptError(f"cannot load mock script {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise MockScriptError(f"{path}: top level must be an object of role -> responses")
        for role, items in data.items():
            if not isinstance(items, list) or not all(isinstance(x, str) for x in items):
                raise MockScriptError(f"{path}: role {role!r} must map to a list of strings")
        return cls(data)

    def next_response(self, role: str) -> str:
        queue = self._responses.get(role, [])
        index = self._cursor.get(role, 0)
        if index >= len(queue):
            raise MockScriptError(
                f"mock script exhausted: role {role!r} call #{index + 1} has no scripted response"
            )
        self._cursor[role] = index + 1
        return queue[index]

    def calls_made(self, role: str) -> int:
        return self._cursor.get(role, 0)

    def assert_exhausted(self) -> None:
        leftover = {
            role: len(items) - self._cursor[role]
            for role, items in self._responses.items()
            if self._cursor[role] < len(items)
        }
        if leftover:
            raise MockScriptError(f"mock script has unconsumed responses: {leftover}")


class MockGateway:
    backend = BACKEND_MOCK

    def __init__(self, script: MockScript):
        self.script = script

    def complete(self, request: CompletionRequest) -> ChatExchange:
        response = self.script.next_response(request.role)
        return ChatExchange(
            system_prompt=request.system_prompt,
            user_prompt=request.user_prompt,
            response=response,
            backend=BACKEND_MOCK,
            temperature=request.temperature,
            max_tokens=request.max_tokens,
            input_tokens=approx_token_count(request.system_prompt)
            + approx_token_count(request.user_prompt),
            output_tokens=approx_token_count(response),
        )


class HttpGateway:
    """OpenAI-style chat completions over HTTP with bounded retries.

    Transient failures (connection errors, 429, 5xx) are retried with
    exponential backoff, at most 5 attempts total.  The credential is
    read from the named environment variable at request time; config
    files hold only the variable name.
    """

    backend = BACKEND_HTTP

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential: str | None = None,
        request_timeout: float = 120.0,
        post: Callable = requests.post,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not endpoint:
            raise GatewayError("http backend requires an endpoint URL")
        if not model:
            raise GatewayError("http backend requires a model name")
        self.endpoint = endpoint
        self.model = model
        self.credential = credential
        self.request_timeout = request_timeout
        self._post = post
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> ChatExchange:
        headers = {"Content-Type": "application/json"}
        if self.credential:
            headers["Authorization"] = f"Bearer {self.credential}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

        last_error = "no attempts made"
        for attempt in range(_RETRY_ATTEMPTS):
            if attempt:
                self._sleep(_BACKOFF_BASE * (2 ** (attempt - 1)))
            try:
                resp = self._post(
                    self.endpoint, headers=headers, json=body, timeout=self.request_timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise GatewayError(f"endpoint returned HTTP {resp.status_code}: {resp.text[:500]}")
            return self._parse(request, resp)
        raise GatewayError(f"gave up after {_RETRY_ATTEMPTS} attempts; last failure: {last_error}")

    def _parse(self, request: CompletionRequest, resp) -> ChatExchange:
        try:
            payload = resp.json()
            response_text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed endpoint response: {exc}") from exc
        usage = payload.get("usage") or {}
        input_tokens = usage.get("prompt_tokens")
        output_tokens = usage.get("completion_tokens")
        if not isinstance(input_tokens, int) or input_tokens < 0:
            input_tokens = approx_token_count(request.system_prompt) + approx_token_count(
                request.user_prompt
            )
        if not isinstance(output_tokens, int) or output_tokens < 0:
            output_tokens = approx_token_count(response_text)
        return ChatExchange(
            system_prompt=request.system_prompt,
            user_prompt=request.user_prompt,
            response=response_text,
            backend=BACKEND_HTTP,
            temperature=request.temperature,
            max_tokens=request.max_tokens,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
        )


class TranscriptLog:
    """Append-only JSON-lines log, one ChatExchange per line."""

    def __init__(self, path: Path | None):
        self.path = None if path is None else Path(path)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def record(self, exchange: ChatExchange) -> None:
        if self.path is None:
            return
        line = json.dumps(exchange.as_dict(), sort_keys=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    @staticmethod
    def read(path: Path) -> list[ChatExchange]:
        exchanges = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                exchanges.append(ChatExchange.from_dict(json.loads(line)))
        return exchanges
