"""Client for LLM-backed query generation and language-quality judging.

The prompt templates are fixed; the transport is an abstract request/response
interface so the curation pipeline stays hermetic under test (MockTransport)
and binds to a concrete HTTP endpoint only in production (HttpTransport,
configured through environment variables).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

from .corpus import Document

log = logging.getLogger(__name__)

ENV_ENDPOINT = "LATEFUSE_LLM_ENDPOINT"
ENV_API_KEY = "LATEFUSE_LLM_API_KEY"
ENV_MODEL = "LATEFUSE_LLM_MODEL"
ENV_TIMEOUT = "LATEFUSE_LLM_TIMEOUT"

QUERY_SYSTEM_PROMPT = "You are a helpful natural language processing expert."

QUERY_USER_TEMPLATE = (
    "You are tasked with generating a thought-provoking question "
    "based on the given image-text data from a document. "
    "The question should capture the overall theme or deeper "
    "meaning of the document, rather than specific visual details. "
    "It must be abstract, invite critical reflection, and avoid "
    "a direct answer from the context. "
    "Do not be overly generic—ensure the question aligns with "
    "the unique visual cues of the document. "
    "Begin your output with 'Q:' followed by the generated question. "
    "{doc_text}"
)

JUDGE_SYSTEM_PROMPT = (
    "You are a generous language quality classifier. "
    "Your task is to determine whether a given text segment, possibly "
    "extracted from an OCR-processed document, likely contains meaningful "
    "human-written content. You should accept text that is partially "
    "broken, informal, or noisy, as long as it seems intended to "
    "communicate something relevant. Accept marketing language, product "
    "descriptions, announcements, or technical explanations. Only reject "
    "text if it is purely noise, random symbols, or unreadable junk. "
    "/no_think"
)

JUDGE_USER_TEMPLATE = (
    "Below are some examples:\n\n"
    "Text: 'Figure 3: 0.233!!@@## 19982ab' → No\n"
    "Text: 'Explori enables survey management for licensed events.' → Yes\n"
    "Text: 'Chart axis: year, value, growth' → No\n"
    "Text: 'This document introduces a framework for multi-modal IR tasks "
    "in scientific domains.' → Yes\n"
    "Text: 'http://bit.ly/xyz download summary' → No\n"
    "Text: 'Project overview and next steps: iterate, test, deploy' → Yes\n"
    "---\n\n"
    "Now classify the following:\n\n"
    "Text: {doc_text}\n\n"
    "Is this meaningful human language? Respond with one word only: "
    "'Yes' or 'No'."
)


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user"
    content: str


@dataclass
class JudgeVerdict:
    answer: str  # "yes" | "no"
    raw_response: str
    parse_warning: bool = False


class AnnotateError(RuntimeError):
    pass


class TransportError(AnnotateError):
    pass


class LLMTransport(Protocol):
    def complete(self, messages: Sequence[Message]) -> str: ...


class MockTransport:
    """Canned responses (strings) or exceptions, consumed in order."""

    def __init__(self, responses: Sequence[str | Exception]):
        self._responses = list(responses)
        self.calls: list[list[Message]] = []

    def complete(self, messages: Sequence[Message]) -> str:
        self.calls.append(list(messages))
        if not self._responses:
            raise TransportError("mock transport exhausted")
        item = self._responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


class HttpTransport:
    """Chat-completions style HTTP binding; configuration from the environment."""

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 model: str | None = None, timeout: float | None = None):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT)
        self.api_key = api_key or os.environ.get(ENV_API_KEY)
        self.model = model or os.environ.get(ENV_MODEL)
        self.timeout = timeout if timeout is not None else float(
            os.environ.get(ENV_TIMEOUT, "30"))
        if not self.endpoint:
            raise AnnotateError(f"transport not configured: set {ENV_ENDPOINT}")

    def complete(self, messages: Sequence[Message]) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        }
        try:
            resp = requests.post(self.endpoint, json=payload, headers=headers,
                                 timeout=self.timeout)
            resp.raise_for_status()
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        except Exception as e:
            raise TransportError(str(e)) from e


def render_query_prompt(doc: Document) -> list[Message]:
    """Deterministic query-generation prompt embedding the document content."""
    if not doc.texts:
        raise ValueError(f"document {doc.id!r} has no text blocks")
    if not doc.images:
        raise ValueError(f"document {doc.id!r} has no images")
    doc_text = "\n".join(doc.texts)
    image_note = "".join(f"[image: {ref}]\n" for ref in doc.images)
    return [
        Message("system", QUERY_SYSTEM_PROMPT),
        Message("user", image_note + QUERY_USER_TEMPLATE.format(doc_text=doc_text)),
    ]


def render_judge_prompt(text: str) -> list[Message]:
    return [
        Message("system", JUDGE_SYSTEM_PROMPT),
        Message("user", JUDGE_USER_TEMPLATE.format(doc_text=text)),
    ]


def _call_with_retry(client: LLMTransport, messages: Sequence[Message],
                     attempts: int = 3, backoff: float = 1.0,
                     sleep: Callable[[float], None] = time.sleep) -> str:
    delay = backoff
    for attempt in range(attempts):
        try:
            return client.complete(messages)
        except TransportError:
            if attempt == attempts - 1:
                raise
            sleep(delay)
            delay *= 2
    raise AssertionError("unreachable")


def prompt_hash(messages: Sequence[Message]) -> str:
    h = hashlib.sha256()
    for m in messages:
        h.update(m.role.encode())
        h.update(b"\x00")
        h.update(m.content.encode())
        h.update(b"\x00")
    return h.hexdigest()


def generate_query(doc: Document, client: LLMTransport,
                   attempts: int = 3, backoff: float = 1.0,
                   sleep: Callable[[float], None] = time.sleep,
                   audit: "AuditLog | None" = None) -> str:
    """Generated query text, taken after the leading "Q:" marker."""
    messages = render_query_prompt(doc)
    raw = _call_with_retry(client, messages, attempts, backoff, sleep)
    stripped = raw.lstrip()
    if not stripped.startswith("Q:"):
        if audit:
            audit.record(doc.id, messages, raw, None)
        raise AnnotateError(f"missing Q: marker in response for doc {doc.id!r}")
    query = stripped[2:].strip()
    if audit:
        audit.record(doc.id, messages, raw, query)
    return query


def parse_verdict(raw: str) -> JudgeVerdict:
    """First case-insensitive yes/no token decides; anything else is a
    conservative "no" with a warning flag."""
    for token in raw.split():
        word = token.strip("'\".,;:!?()[]").lower()
        if word in ("yes", "no"):
            return JudgeVerdict(answer=word, raw_response=raw)
    log.warning("unparseable judge response %r; defaulting to 'no'", raw[:80])
    return JudgeVerdict(answer="no", raw_response=raw, parse_warning=True)


def judge_quality(text: str, client: LLMTransport,
                  attempts: int = 3, backoff: float = 1.0,
                  sleep: Callable[[float], None] = time.sleep,
                  audit: "AuditLog | None" = None,
                  doc_id: str = "") -> JudgeVerdict:
    messages = render_judge_prompt(text)
    raw = _call_with_retry(client, messages, attempts, backoff, sleep)
    verdict = parse_verdict(raw)
    if audit:
        audit.record(doc_id, messages, raw, verdict.answer)
    return verdict


class AuditLog:
    """JSONL audit trail of every transport exchange."""

    def __init__(self, path):
        self.path = path
        self._f = open(path, "a", encoding="utf-8")

    def record(self, doc_id: str, messages: Sequence[Message],
               raw_response: str, parsed) -> None:
        entry = {
            "doc_id": doc_id,
            "prompt_hash": prompt_hash(messages),
            "raw_response": raw_response,
            "parsed_result": parsed,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        self._f.write(json.dumps(entry, ensure_ascii=False) + "\n")
        self._f.flush()

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
