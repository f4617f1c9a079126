"""Zero-shot compliance prompting against pluggable chat backends.

One prompt per table row, never the whole table: requests must not leak
report-level context.  The verdict is the first True/False token in the
response, since models tend to keep explaining after answering.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Callable, Optional, Sequence

import httpx

from . import compliance, units

if TYPE_CHECKING:
    from .extraction import Observation

log = logging.getLogger(__name__)

DEFAULT_TEMPLATE = (
    "Evaluate the following electrical measure observation statement. "
    'Answer with just one "True" or "False" statement at the beginning of the answer. '
    "Is {measured_value} {acceptance_limits} ?"
)

MEASURED_PLACEHOLDER = "{measured_value}"
LIMITS_PLACEHOLDER = "{acceptance_limits}"

_VERDICT_RE = re.compile(r"\b(true|false)\b", re.IGNORECASE)


class LLMError(Exception):
    """Base class for checker failures."""


class MissingPlaceholder(LLMError):
    """A custom template does not contain each placeholder exactly once."""


class BackendUnavailable(LLMError):
    """The backend could not produce a response (after retries, if any)."""


class RateLimited(LLMError):
    """The backend signalled a rate limit; the caller retries."""


class LLMVerdict(Enum):
    TRUE = "True"
    FALSE = "False"
    UNPARSEABLE = "Unparseable"


@dataclass(frozen=True)
class LLMJudgement:
    verdict: LLMVerdict
    raw_response: str
    latency: float
    backend_id: str


def build_prompt(measured_raw: str, limits_raw: str, template: str = DEFAULT_TEMPLATE) -> str:
    """Fill the compliance prompt with one row's raw strings.

    The raw strings go in unparsed: normalizing them first would remove the
    very heterogeneity the checker is supposed to handle.
    """
    if not measured_raw or not limits_raw:
        raise ValueError("measured and limits raw strings must be non-empty")
    for placeholder in (MEASURED_PLACEHOLDER, LIMITS_PLACEHOLDER):
        if template.count(placeholder) != 1:
            raise MissingPlaceholder(
                f"template must contain {placeholder} exactly once"
            )
    return template.replace(MEASURED_PLACEHOLDER, measured_raw).replace(
        LIMITS_PLACEHOLDER, limits_raw
    )


def parse_verdict(response: str) -> LLMVerdict:
    """Take the first "True"/"False" token (any case) as the answer."""
    m = _VERDICT_RE.search(response or "")
    if m is None:
        return LLMVerdict.UNPARSEABLE
    return LLMVerdict.TRUE if m.group(1).lower() == "true" else LLMVerdict.FALSE


def prompt_hash(prompt: str) -> str:
    """Stable content hash keying replay fixtures: SHA-256 of the UTF-8 prompt."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5
    sleeper: Callable[[float], None] = time.sleep

    def backoff(self, attempt: int) -> float:
        return self.backoff_base * (2**attempt)


class RateLimiter:
    """Sliding-window limiter: at most per_minute acquisitions per 60 s."""

    def __init__(
        self,
        per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        if per_minute <= 0:
            raise ValueError("per-minute cap must be positive")
        self.per_minute = per_minute
        self._clock = clock
        self._sleeper = sleeper
        self._stamps: "list[float]" = []
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._stamps = [s for s in self._stamps if now - s < 60.0]
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            self._sleeper(max(wait, 0.0))


@dataclass
class BackendConfig:
    """Connection settings for a checker backend."""

    kind: str = "mock"  # mock | replay | http
    endpoint: str = ""
    model: str = ""
    credential_env: str = "BOARDCHECK_API_KEY"
    max_in_flight: int = 1
    max_attempts: int = 3
    backoff_base: float = 0.5
    rate_per_minute: int = 60
    replay_fixture: str = ""
    mock_seed: int = 0
    mock_flip_in_range: float = 0.0
    mock_flip_out_of_range: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "replay", "http"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.max_in_flight <= 0 or self.max_attempts <= 0 or self.rate_per_minute <= 0:
            raise ValueError("backend caps must be positive")
        if self.kind == "http" and not (self.endpoint and self.model and self.credential_env):
            raise ValueError("http backend requires endpoint, model, and credential_env")


class HttpBackend:
    """Minimal JSON chat-completion client.

    Sends {model, messages:[{role:"user", content}]} with a bearer credential
    read from the named environment variable; accepts either an OpenAI-style
    choices list or a bare content field in the response.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential_env: str = "BOARDCHECK_API_KEY",
        timeout: float = 60.0,
        rate_limiter: Optional[RateLimiter] = None,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.credential_env = credential_env
        self.id = f"http:{model}"
        self._limiter = rate_limiter
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, prompt: str) -> str:
        credential = os.environ.get(self.credential_env)
        if not credential:
            raise BackendUnavailable(
                f"credential environment variable {self.credential_env} is not set"
            )
        if self._limiter is not None:
            self._limiter.acquire()
        body = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        try:
            response = self._client.post(
                self.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {credential}"},
            )
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"request failed: {exc}") from exc
        if response.status_code == 429:
            raise RateLimited("backend returned 429")
        if response.status_code >= 500:
            raise BackendUnavailable(f"backend returned {response.status_code}")
        if response.status_code >= 400:
            raise BackendUnavailable(
                f"backend rejected the request: {response.status_code} {response.text[:200]}"
            )
        return self._extract_text(response)

    @staticmethod
    def _extract_text(response: httpx.Response) -> str:
        try:
            payload = response.json()
        except json.JSONDecodeError as exc:
            raise BackendUnavailable(f"non-JSON response: {exc}") from exc
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            pass
        if isinstance(payload.get("content"), str):
            return payload["content"]
        raise BackendUnavailable("response JSON has no recognizable text field")


class ReplayBackend:
    """Serve recorded responses from a line-delimited JSON fixture.

    Each record is {"prompt_hash": <sha256 hex of the prompt>, "response_text": ...}.
    """

    def __init__(self, fixture_path):
        self.id = f"replay:{os.path.basename(str(fixture_path))}"
        self._responses: "dict[str, str]" = {}
        with open(fixture_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                try:
                    self._responses[record["prompt_hash"]] = record["response_text"]
                except KeyError as exc:
                    raise ValueError(f"fixture line {line_no} lacks {exc}") from None

    def __len__(self) -> int:
        return len(self._responses)

    def complete(self, prompt: str) -> str:
        key = prompt_hash(prompt)
        try:
            return self._responses[key]
        except KeyError:
            raise BackendUnavailable(f"no replay entry for prompt hash {key}") from None


def _uniform_from(seed: int, text: str) -> float:
    """Deterministic, order-independent uniform draw in [0, 1) for one prompt."""
    digest = hashlib.sha256(f"{seed}\x1f{text}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class MockBackend:
    """Oracle-backed stand-in with seeded, class-conditional error injection.

    Re-parses the raw strings out of the prompt, computes the deterministic
    verdict, and flips it with the per-class probability.  The flip decision
    for a row is a pure function of (seed, prompt), so runs are reproducible
    regardless of concurrency or row order.
    """

    def __init__(self, seed: int, flip_rate_in_range: float = 0.0, flip_rate_out_of_range: float = 0.0):
        for rate in (flip_rate_in_range, flip_rate_out_of_range):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"flip rate must be in [0, 1], got {rate}")
        self.seed = seed
        self.flip_rate_in_range = flip_rate_in_range
        self.flip_rate_out_of_range = flip_rate_out_of_range
        self.id = f"mock:{seed}"

    def complete(self, prompt: str) -> str:
        verdict = self.oracle_verdict(prompt)
        if verdict is None:
            return "I cannot evaluate this observation statement."
        rate = (
            self.flip_rate_in_range
            if verdict is compliance.Verdict.IN_RANGE
            else self.flip_rate_out_of_range
        )
        answer_in_range = verdict is compliance.Verdict.IN_RANGE
        if self.flips(prompt, rate):
            answer_in_range = not answer_in_range
        if answer_in_range:
            return "True. The measured value lies within the acceptance limits."
        return "False. The measured value violates the acceptance limits."

    def flips(self, prompt: str, rate: float) -> bool:
        return _uniform_from(self.seed, prompt) < rate

    def oracle_verdict(self, prompt: str) -> Optional[compliance.Verdict]:
        parsed = self._parse_prompt(prompt)
        if parsed is None:
            return None
        measured, limits = parsed
        verdict = compliance.oracle_check(measured, limits)
        if verdict is compliance.Verdict.UNKNOWN:
            return None
        return verdict

    @staticmethod
    def _parse_prompt(prompt: str) -> "Optional[tuple[units.Quantity, units.AcceptanceLimits]]":
        """Recover (measured, limits) from the question's payload.

        Scans whitespace split points; the first split where the left part
        parses as a quantity and the right as limits wins.
        """
        start = prompt.rfind("Is ")
        end = prompt.rfind("?")
        if start < 0 or end <= start:
            return None
        payload = prompt[start + 3 : end].strip()
        words = payload.split(" ")
        for cut in range(1, len(words)):
            left = " ".join(words[:cut]).strip()
            right = " ".join(words[cut:]).strip()
            if not left or not right:
                continue
            try:
                measured = units.parse_quantity(left)
                limits = units.parse_acceptance_limits(right)
            except units.UnitsError:
                continue
            return measured, limits
        return None


def mock_backend(
    seed: int, flip_rate_in_range: float = 0.0, flip_rate_out_of_range: float = 0.0
) -> MockBackend:
    return MockBackend(seed, flip_rate_in_range, flip_rate_out_of_range)


def make_backend(config: BackendConfig) -> object:
    """Instantiate the backend described by a BackendConfig."""
    if config.kind == "mock":
        return MockBackend(
            config.mock_seed, config.mock_flip_in_range, config.mock_flip_out_of_range
        )
    if config.kind == "replay":
        if not config.replay_fixture:
            raise ValueError("replay backend requires replay_fixture")
        return ReplayBackend(config.replay_fixture)
    return HttpBackend(
        endpoint=config.endpoint,
        model=config.model,
        credential_env=config.credential_env,
        rate_limiter=RateLimiter(config.rate_per_minute),
    )


def check_row(
    observation: "Observation",
    backend,
    template: str = DEFAULT_TEMPLATE,
    retry: RetryPolicy = RetryPolicy(),
) -> LLMJudgement:
    """Send exactly one prompt for one row and parse the judgement.

    The request carries only the template text and the row's two raw strings;
    rate-limit and transient failures are retried with exponential backoff.
    """
    prompt = build_prompt(observation.result_raw, observation.limits_raw, template)
    started = time.monotonic()
    last_error: Optional[Exception] = None
    for attempt in range(retry.max_attempts):
        try:
            response = backend.complete(prompt)
            latency = time.monotonic() - started
            return LLMJudgement(
                verdict=parse_verdict(response),
                raw_response=response,
                latency=latency,
                backend_id=getattr(backend, "id", backend.__class__.__name__),
            )
        except RateLimited as exc:
            log.warning("rate limited (attempt %d): %s", attempt + 1, exc)
            last_error = exc
        except BackendUnavailable as exc:
            log.warning("backend unavailable (attempt %d): %s", attempt + 1, exc)
            last_error = exc
        if attempt + 1 < retry.max_attempts:
            retry.sleeper(retry.backoff(attempt))
    raise BackendUnavailable(
        f"backend failed after {retry.max_attempts} attempts: {last_error}"
    )


def check_rows(
    observations: "Sequence[Observation]",
    backend,
    template: str = DEFAULT_TEMPLATE,
    retry: RetryPolicy = RetryPolicy(),
    max_in_flight: int = 1,
) -> "list[LLMJudgement]":
    """Check many rows with a bounded number of in-flight requests.

    Results are joined back deterministically: the returned list is aligned
    with the input order whatever the completion order was.
    """
    if max_in_flight <= 0:
        raise ValueError("max_in_flight must be positive")
    if not observations:
        return []
    if max_in_flight == 1:
        return [check_row(obs, backend, template, retry) for obs in observations]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = [pool.submit(check_row, obs, backend, template, retry) for obs in observations]
        return [f.result() for f in futures]
