"""Likert-scale judgment of explanation aspects through an LLM backend.

Nine fixed evaluation statements are rendered into a fixed prompt, sent
to a pluggable completion backend (remote endpoint, or a deterministic
mock for hermetic runs), and the categorical answer is mapped onto the
zero-free numeric scale {-2, -1, 1, 2}. Responses are cached by
(record, item, backend), so reruns replay without any backend calls.
"""

from __future__ import annotations

import hashlib
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from explinfo.embeddings import BytesStore, ProviderResponseError, TransportError, make_key


@dataclass(frozen=True)
class EvaluationItem:
    category: str
    name: str
    statement: str


EVALUATION_ITEMS = (
    EvaluationItem(
        "reasoning",
        "informativeness",
        "The explanation provides sufficient information to support how the two sentences are associated to the label.",
    ),
    EvaluationItem(
        "reasoning",
        "causal_support",
        "The explanation explains why these two sentences are associated to the label.",
    ),
    EvaluationItem(
        "reasoning",
        "convincingness",
        "The explanation is persuasive and convinces me to believe that the question is associated to the label.",
    ),
    EvaluationItem(
        "reasoning",
        "coherence",
        "The explanation bridges the gap between the two sentences and the label in a coherent and unsurprising manner.",
    ),
    EvaluationItem("clarity", "clarity4student", "The explanation is easy to understand for a high school student."),
    EvaluationItem("clarity", "clarity4graduate", "The explanation is easy to understand for a university graduate."),
    EvaluationItem("relevance", "label_relevance", "Given the two sentences and the label, the explanation is relevant."),
    EvaluationItem("relevance", "input_relevance", "Given the two sentences, the explanation is relevant."),
    EvaluationItem(
        "relevance",
        "importance",
        # sic: "Ths" is kept as published
        "Ths explanation highlights the most important parts in the two sentences that associate to the label.",
    ),
)

ITEMS_BY_NAME = {item.name: item for item in EVALUATION_ITEMS}

PROMPT_TEMPLATE = (
    "Following are two sentences, a label and an explanation.\n"
    "The two sentences are: {s1} {s2}\n"
    "The label is: {label}\n"
    "The explanation is {explanan}\n"
    "Please use one of 'strongly disagree', 'somewhat disagree', 'somewhat agree' and\n"
    "'strongly agree' to describe your attitude towards the following statement: {statement}\n"
    "Do not add additional words."
)

LIKERT_SCALE = {
    "strongly disagree": -2,
    "somewhat disagree": -1,
    "somewhat agree": 1,
    "strongly agree": 2,
}


@dataclass(frozen=True)
class LikertResponse:
    raw: str
    parsed: str | None
    numeric: int | None

    @property
    def ok(self) -> bool:
        return self.numeric is not None


def build_gptscore_prompt(record, item: EvaluationItem) -> str:
    """Render the scoring prompt; two calls on equal inputs are equal."""
    return PROMPT_TEMPLATE.format(
        s1=record.premise,
        s2=record.hypothesis,
        label=record.label,
        explanan=record.explanan,
        statement=item.statement,
    )


_WRAPPERS = [('"', '"'), ("'", "'"), ("(", ")"), ("[", "]")]


def parse_likert(raw: str) -> LikertResponse:
    """Postprocess a completion into one of the four response phrases.

    Strips surrounding whitespace, quote/parenthesis pairs, and trailing
    periods, then casefolds and collapses internal whitespace. Anything
    that still fails to match is an explicit parse failure, never a drop.
    """
    text = raw
    while True:
        before = text
        text = text.strip()
        for left, right in _WRAPPERS:
            if len(text) >= 2 and text.startswith(left) and text.endswith(right):
                text = text[1:-1]
        text = text.rstrip(".")
        if text == before:
            break
    text = re.sub(r"\s+", " ", text.casefold())
    numeric = LIKERT_SCALE.get(text)
    return LikertResponse(raw=raw, parsed=text if numeric is not None else None, numeric=numeric)


class MockLikertBackend:
    """Deterministic offline stand-in: the answer is a seeded hash of the
    prompt, occasionally wrapped in parentheses or a trailing newline so
    the postprocessing path stays exercised."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.identifier = f"mock-s{seed}"
        self.call_count = 0

    def complete(self, prompt: str) -> str:
        self.call_count += 1
        digest = hashlib.sha256(f"{self.seed}\x00{prompt}".encode("utf-8")).digest()
        phrase = list(LIKERT_SCALE)[digest[0] % 4]
        dressing = digest[1] % 8
        if dressing == 0:
            return f"({phrase})"
        if dressing == 1:
            return phrase + "\n"
        return phrase


class RemoteCompletionBackend:
    """Adapter for an HTTPS completion endpoint: POST {model, prompt,
    temperature 0, single completion}, response {choices: [{text}]}.

    ``post`` is injectable for tests; transport failures are retried
    with exponential backoff before surfacing.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        max_tokens: int = 16,
        post=None,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.identifier = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_tokens = max_tokens
        self._post = post if post is not None else self._requests_post
        self._sleep = sleep
        self.call_count = 0

    def _requests_post(self, url, payload):
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code >= 500:
            raise TransportError(f"server error {response.status_code}")
        if response.status_code != 200:
            raise ProviderResponseError(f"status {response.status_code}: {response.text[:200]}")
        return response.json()

    def complete(self, prompt: str) -> str:
        self.call_count += 1
        url = f"{self.base_url}/completions"
        payload = {
            "model": self.model,
            "prompt": prompt,
            "temperature": 0,
            "n": 1,
            "max_tokens": self.max_tokens,
        }
        last_error = None
        for attempt in range(self.max_retries):
            try:
                body = self._post(url, payload)
                break
            except TransportError as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    self._sleep(self.backoff * 2**attempt)
        else:
            raise TransportError(f"giving up after {self.max_retries} attempts: {last_error}")
        try:
            return body["choices"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderResponseError(f"malformed response: {exc}") from exc


def _response_key(backend, record_id: str, item: EvaluationItem) -> bytes:
    return make_key("gpt", backend.identifier, record_id, item.name)


def score_records(records, items, backend, store: BytesStore, max_parallel: int = 1):
    """One numeric score per (record, item), cache-first.

    Returns (scores, failures): scores maps record id -> item name ->
    numeric, with None where the response did not parse; failures lists
    (record id, item name, reason). Transport failures (after the
    backend's own retries) are recorded, not raised. Rerunning with a
    warm cache makes zero backend calls and returns the same table.
    """
    records = list(records)
    items = list(items)
    pending = []
    raw_by_key: dict = {}
    for record in records:
        for item in items:
            key = _response_key(backend, record.id, item)
            payload = None
            try:
                payload = store.get(key)
            except Exception:
                payload = None
            if payload is None:
                pending.append((key, record, item))
            else:
                raw_by_key[key] = payload.decode("utf-8")

    def fetch(task):
        key, record, item = task
        try:
            return key, backend.complete(build_gptscore_prompt(record, item)), None
        except (TransportError, ProviderResponseError) as exc:
            return key, None, str(exc)

    if pending:
        if max_parallel > 1:
            with ThreadPoolExecutor(max_workers=max_parallel) as pool:
                fetched = list(pool.map(fetch, pending))
        else:
            fetched = [fetch(task) for task in pending]
        errors = {}
        for key, raw, error in fetched:
            if raw is None:
                errors[key] = error
            else:
                store.put(key, raw.encode("utf-8"))
                raw_by_key[key] = raw
    else:
        errors = {}

    scores: dict = {}
    failures: list = []
    for record in records:
        row = {}
        for item in items:
            key = _response_key(backend, record.id, item)
            if key in raw_by_key:
                response = parse_likert(raw_by_key[key])
                row[item.name] = response.numeric
                if not response.ok:
                    failures.append((record.id, item.name, f"unparseable response: {response.raw!r}"))
            else:
                row[item.name] = None
                failures.append((record.id, item.name, errors.get(key, "no response")))
        scores[record.id] = row
    return scores, failures
