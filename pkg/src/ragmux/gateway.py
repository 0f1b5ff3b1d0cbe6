"""Provider-agnostic chat and embedding access, with deterministic mocks.

The remote client speaks one wire dialect (OpenAI-compatible JSON over
HTTP) so any conforming backend works behind the same config. The mock
implementations are pure functions of their inputs, which is what lets
every downstream stage run and be tested fully offline.

Prompt contract: synthesis prompts carry a "QUESTION:" block and a
"CONTEXT:" block. The extractive mock answers with the context sentence
sharing the most content terms with the question (ties: earliest), so
offline answers are reproducible end to end.
"""

from __future__ import annotations

import logging
import os
import random
import time
from dataclasses import dataclass
from typing import Callable

import httpx

from .spaces import Embedding, mock_embed
from .text import content_terms, sentence_list

logger = logging.getLogger(__name__)

QUESTION_MARKER = "QUESTION:"
CONTEXT_MARKER = "CONTEXT:"

EMBED_BATCH_LIMIT = 128
BACKOFF_BASE_SECONDS = 0.5

NO_ANSWER_TEXT = "No answer found in context."


class GatewayError(Exception):
    """Base class for chat/embedding failures."""


class GatewayTimeout(GatewayError):
    """Request timed out or the provider stayed unavailable across retries."""


class RateLimited(GatewayError):
    """HTTP 429 persisted past the retry budget."""


class ProviderRefusal(GatewayError):
    """The provider answered but declined to produce content."""


class MalformedResponse(GatewayError):
    """The provider answer could not be decoded."""


@dataclass
class ChatRequest:
    system_prompt: str
    user_prompt: str
    max_output_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass
class ChatResponse:
    text: str
    token_usage: tuple[int, int]  # (input, output)
    provider: str


@dataclass
class ProviderConfig:
    base_url: str
    api_key_env_var: str
    model_name: str
    timeout_ms: int = 30_000
    max_retries: int = 2
    embed_model_name: str | None = None

    def __post_init__(self) -> None:
        if self.timeout_ms < 1000:
            raise ValueError("timeout_ms must be >= 1000")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass
class MockPolicy:
    mode: str = "extractive_synthesis"  # or "echo" / "fixed"
    fixed_text: str = ""

    def __post_init__(self) -> None:
        if self.mode not in ("extractive_synthesis", "echo", "fixed"):
            raise ValueError(f"unknown mock mode {self.mode!r}")


def _split_blocks(user_prompt: str) -> tuple[str, str]:
    """Return (question, context) from the synthesis prompt layout."""
    question, context = user_prompt, ""
    if QUESTION_MARKER in user_prompt:
        after = user_prompt.split(QUESTION_MARKER, 1)[1]
        if CONTEXT_MARKER in after:
            question, context = after.split(CONTEXT_MARKER, 1)
        else:
            question = after
    elif CONTEXT_MARKER in user_prompt:
        question, context = user_prompt.split(CONTEXT_MARKER, 1)
    return question.strip(), context.strip()


def extract_best_sentence(question: str, context: str) -> str:
    """The context sentence sharing the most content terms with the question.

    Ties resolve to the earliest sentence; an empty context yields a fixed
    sentinel so callers can tell "no evidence" apart from a refusal.
    """
    sentences = sentence_list(context)
    if not sentences:
        return NO_ANSWER_TEXT
    question_terms = content_terms(question)
    best, best_overlap = sentences[0], -1
    for sentence in sentences:
        overlap = len(question_terms & content_terms(sentence))
        if overlap > best_overlap:
            best, best_overlap = sentence, overlap
    return best


def _usage_estimate(prompt: str, text: str) -> tuple[int, int]:
    return (max(1, len(prompt) // 4), max(1, len(text) // 4))


class MockGateway:
    """Fully deterministic stand-in for a chat + embedding provider."""

    def __init__(self, policy: MockPolicy | None = None, dim: int = 256):
        self.policy = policy or MockPolicy()
        self.dim = dim

    def chat(self, req: ChatRequest) -> ChatResponse:
        if self.policy.mode == "echo":
            text = req.user_prompt
        elif self.policy.mode == "fixed":
            text = self.policy.fixed_text
        else:
            question, context = _split_blocks(req.user_prompt)
            text = extract_best_sentence(question, context)
        return ChatResponse(
            text=text,
            token_usage=_usage_estimate(req.system_prompt + req.user_prompt, text),
            provider="mock",
        )

    def embed(self, texts: list[str]) -> list[Embedding]:
        if not texts:
            raise ValueError("texts must be non-empty")
        return [mock_embed(t, self.dim) for t in texts]


class RemoteGateway:
    """OpenAI-compatible HTTP client with bounded retry and backoff.

    Retries 429, 5xx and transport timeouts up to max_retries additional
    attempts with exponential backoff (base 500 ms plus jitter). The API
    key is read from the environment variable named in the config at call
    time and never stored or logged.
    """

    def __init__(
        self,
        config: ProviderConfig,
        transport: httpx.BaseTransport | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._sleep = sleeper
        self._client = httpx.Client(
            base_url=config.base_url,
            timeout=config.timeout_ms / 1000.0,
            transport=transport,
        )

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.config.api_key_env_var, "")
        return {"Authorization": f"Bearer {key}"} if key else {}

    def _post(self, path: str, payload: dict) -> dict:
        attempts = self.config.max_retries + 1
        last_error: GatewayError | None = None
        for attempt in range(attempts):
            try:
                response = self._client.post(path, json=payload, headers=self._headers())
            except httpx.TimeoutException as exc:
                last_error = GatewayTimeout(f"{path}: {exc}")
            except httpx.HTTPError as exc:
                last_error = GatewayTimeout(f"{path}: transport error: {exc}")
            else:
                if response.status_code == 429:
                    last_error = RateLimited(f"{path}: HTTP 429")
                elif response.status_code >= 500:
                    last_error = GatewayTimeout(f"{path}: HTTP {response.status_code}")
                elif response.status_code >= 400:
                    raise MalformedResponse(
                        f"{path}: HTTP {response.status_code}: {response.text[:200]}"
                    )
                else:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise MalformedResponse(f"{path}: invalid JSON: {exc}") from None
            if attempt < attempts - 1:
                delay = BACKOFF_BASE_SECONDS * (2**attempt) * (1.0 + random.random() * 0.5)
                logger.debug("retrying %s in %.2fs (%s)", path, delay, last_error)
                self._sleep(delay)
        raise last_error  # type: ignore[misc]

    def chat(self, req: ChatRequest) -> ChatResponse:
        logger.debug(
            "chat model=%s prompt=%.200s", self.config.model_name, req.user_prompt
        )
        data = self._post(
            "/chat/completions",
            {
                "model": self.config.model_name,
                "messages": [
                    {"role": "system", "content": req.system_prompt},
                    {"role": "user", "content": req.user_prompt},
                ],
                "temperature": req.temperature,
                "max_tokens": req.max_output_tokens,
            },
        )
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"]
            usage = data.get("usage", {})
            token_usage = (usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"chat response missing fields: {exc}") from None
        if text is None or (text == "" and choice.get("finish_reason") == "content_filter"):
            raise ProviderRefusal("provider returned no content")
        return ChatResponse(text=text, token_usage=token_usage, provider=self.config.model_name)

    def embed(self, texts: list[str]) -> list[Embedding]:
        if not texts:
            raise ValueError("texts must be non-empty")
        model = self.config.embed_model_name or self.config.model_name
        out: list[Embedding] = []
        for start in range(0, len(texts), EMBED_BATCH_LIMIT):
            batch = texts[start : start + EMBED_BATCH_LIMIT]
            data = self._post("/embeddings", {"model": model, "input": batch})
            try:
                rows = sorted(data["data"], key=lambda r: r["index"])
                vectors = [row["embedding"] for row in rows]
            except (KeyError, TypeError) as exc:
                raise MalformedResponse(f"embedding response missing fields: {exc}") from None
            if len(vectors) != len(batch):
                raise MalformedResponse(
                    f"embedding response has {len(vectors)} rows for {len(batch)} inputs"
                )
            out.extend(Embedding(values=v, dim=len(v)) for v in vectors)
        return out

    def close(self) -> None:
        self._client.close()
