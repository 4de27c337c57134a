"""Provider-agnostic chat-completion access.

One completion per decision: no streaming, no tool calls, no multi-turn
state. The gateway owns retries with exponential backoff and seeded
jitter, optional per-provider rate limiting, a usage ledger, and
append-only request/response logging. Deterministic providers (hash-mock
and transcript replay) make whole experiments reproducible offline.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import dataclass, field

import httpx


class ProviderError(Exception):
    """Transient provider failure; the gateway may retry."""


class FatalProviderError(Exception):
    """Non-retryable provider failure (bad request, unknown transcript id)."""


class GatewayError(Exception):
    """Retries exhausted; carries the request id for resume."""

    def __init__(self, message: str, request_id: str):
        super().__init__(message)
        self.request_id = request_id


@dataclass(frozen=True)
class CompletionRequest:
    system_text: str
    user_text: str
    temperature: float = 0.8
    max_tokens: int = 600
    provider_tag: str = "mock"
    request_id: str = ""


def make_request(
    system_text: str,
    user_text: str,
    *,
    generation: int,
    round: int,
    agent: str,
    provider_tag: str,
    temperature: float = 0.8,
    max_tokens: int = 600,
) -> CompletionRequest:
    """Build a request whose id is a stable hash of position (generation,
    round, agent) plus the full prompt text, so transcript lookups break
    loudly if a template drifts."""

    key = "\x1f".join([str(generation), str(round), agent, system_text, user_text])
    request_id = hashlib.sha256(key.encode("utf-8")).hexdigest()
    return CompletionRequest(
        system_text=system_text,
        user_text=user_text,
        temperature=temperature,
        max_tokens=max_tokens,
        provider_tag=provider_tag,
        request_id=request_id,
    )


@dataclass
class ProviderResponse:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0


def _estimate_tokens(text: str) -> int:
    return max(1, len(text.split()))


class MockProvider:
    """Deterministic offline provider. Each response is a pure function
    of (namespace seed, request id): strategy prompts get a one-sentence
    strategy, donation prompts a percentage answer, occasionally with a
    punishment spend when the prompt offers one."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _rng(self, request_id: str) -> random.Random:
        digest = hashlib.sha256(f"{self.seed}|{request_id}".encode()).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def complete(self, req: CompletionRequest) -> ProviderResponse:
        rng = self._rng(req.request_id)
        if "How many units do you give up?" in req.user_text:
            pct = rng.randrange(0, 101, 5)
            text = (
                "Thinking step by step: the recent record suggests this level of trust. "
                f"I will donate {pct}% of my resources."
            )
            if "punish the recipient" in req.user_text and rng.random() < 0.15:
                spend = rng.randrange(5, 21, 5)
                text += f" I will also punish them by spending {spend}% of my resources."
        else:
            pct = rng.randrange(10, 91, 5)
            text = (
                "Considering how chains of generosity build on themselves, I should signal trust early. "
                f"My strategy will be to donate {pct}% of my resources in every round."
            )
        return ProviderResponse(
            text=text,
            input_tokens=_estimate_tokens(req.system_text + " " + req.user_text),
            output_tokens=_estimate_tokens(text),
        )


class TableProvider:
    """Answers exactly from a request_id -> response table; unknown ids
    are an error so prompt drift cannot silently change a replay."""

    def __init__(self, table: dict):
        self.table = dict(table)

    def complete(self, req: CompletionRequest) -> ProviderResponse:
        if req.request_id not in self.table:
            raise FatalProviderError(f"no transcript entry for request {req.request_id}")
        text = self.table[req.request_id]
        return ProviderResponse(
            text=text,
            input_tokens=_estimate_tokens(req.system_text + " " + req.user_text),
            output_tokens=_estimate_tokens(text),
        )


def mock_from_transcript(path) -> TableProvider:
    """Provider replaying a recorded request log (JSONL of request_id /
    response pairs, as written by the gateway's log sink)."""

    table = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FatalProviderError(f"malformed transcript line {lineno}: {exc}") from exc
            if record.get("status") == "ok" and "request_id" in record:
                table[record["request_id"]] = record["response"]
    return TableProvider(table)


class HttpChatProvider:
    """OpenAI-compatible chat-completions endpoint over HTTP."""

    def __init__(self, endpoint: str, model: str, api_key: str, *, client: httpx.Client | None = None, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.client = client or httpx.Client(timeout=timeout)

    def complete(self, req: CompletionRequest) -> ProviderResponse:
        payload = {
            "model": self.model,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": req.user_text},
            ],
        }
        try:
            response = self.client.post(
                f"{self.endpoint}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {self.api_key}"},
            )
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport failure: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise ProviderError(f"provider returned {response.status_code}")
        if response.status_code >= 400:
            raise FatalProviderError(f"provider returned {response.status_code}: {response.text[:200]}")
        body = response.json()
        usage = body.get("usage", {})
        return ProviderResponse(
            text=body["choices"][0]["message"]["content"],
            input_tokens=usage.get("prompt_tokens", 0),
            output_tokens=usage.get("completion_tokens", 0),
        )


@dataclass
class ProviderUsage:
    requests: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    retries: int = 0
    cost: float = 0.0


@dataclass
class UsageLedger:
    providers: dict = field(default_factory=dict)

    def _for(self, tag: str) -> ProviderUsage:
        if tag not in self.providers:
            self.providers[tag] = ProviderUsage()
        return self.providers[tag]

    def snapshot(self) -> dict:
        return {
            tag: {
                "requests": u.requests,
                "input_tokens": u.input_tokens,
                "output_tokens": u.output_tokens,
                "retries": u.retries,
                "cost": u.cost,
            }
            for tag, u in sorted(self.providers.items())
        }

    @classmethod
    def from_snapshot(cls, data: dict) -> "UsageLedger":
        ledger = cls()
        for tag, fields in data.items():
            ledger.providers[tag] = ProviderUsage(**fields)
        return ledger


class Gateway:
    """Wraps a provider with retries, rate limiting, cost accounting and
    request/response logging. Shareable across concurrent decisions; here
    calls are issued sequentially so no locking is needed."""

    def __init__(
        self,
        provider,
        *,
        provider_tag: str,
        usage: UsageLedger | None = None,
        log_sink=None,
        retry_rng: random.Random | None = None,
        sleeper=time.sleep,
        clock=time.monotonic,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        backoff_factor: float = 2.0,
        input_price: float = 0.0,
        output_price: float = 0.0,
        requests_per_minute: float | None = None,
        temperature: float = 0.8,
        max_tokens: int = 600,
    ):
        self.provider = provider
        self.provider_tag = provider_tag
        self.usage = usage if usage is not None else UsageLedger()
        self.log_sink = log_sink
        self.retry_rng = retry_rng if retry_rng is not None else random.Random(0)
        self.sleeper = sleeper
        self.clock = clock
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self.input_price = input_price
        self.output_price = output_price
        self.min_interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self.temperature = temperature
        self.max_tokens = max_tokens
        self._last_issue = None

    def _log(self, record: dict) -> None:
        if self.log_sink is not None:
            self.log_sink(record)

    def _respect_rate_limit(self) -> None:
        if self.min_interval <= 0:
            return
        now = self.clock()
        if self._last_issue is not None:
            wait = self.min_interval - (now - self._last_issue)
            if wait > 0:
                self.sleeper(wait)
                now = self.clock()
        self._last_issue = now

    def complete(self, req: CompletionRequest) -> str:
        usage = self.usage._for(self.provider_tag)
        usage.requests += 1
        delay = self.backoff_base
        for attempt in range(1, self.max_attempts + 1):
            self._respect_rate_limit()
            try:
                response = self.provider.complete(req)
            except ProviderError as exc:
                self._log(
                    {
                        "type": "attempt",
                        "request_id": req.request_id,
                        "provider": self.provider_tag,
                        "attempt": attempt,
                        "status": "retry" if attempt < self.max_attempts else "failed",
                        "error": str(exc),
                    }
                )
                if attempt == self.max_attempts:
                    raise GatewayError(
                        f"provider {self.provider_tag} failed after {self.max_attempts} attempts: {exc}",
                        request_id=req.request_id,
                    ) from exc
                usage.retries += 1
                self.sleeper(delay * (1.0 + 0.25 * self.retry_rng.random()))
                delay *= self.backoff_factor
                continue
            usage.input_tokens += response.input_tokens
            usage.output_tokens += response.output_tokens
            usage.cost += (
                response.input_tokens * self.input_price
                + response.output_tokens * self.output_price
            )
            self._log(
                {
                    "type": "attempt",
                    "request_id": req.request_id,
                    "provider": self.provider_tag,
                    "attempt": attempt,
                    "status": "ok",
                    "system_text": req.system_text,
                    "user_text": req.user_text,
                    "response": response.text,
                    "input_tokens": response.input_tokens,
                    "output_tokens": response.output_tokens,
                }
            )
            return response.text
        raise AssertionError("unreachable")
