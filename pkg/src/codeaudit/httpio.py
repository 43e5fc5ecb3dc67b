"""HTTP plumbing: retrying client with per-endpoint rate limiting.

All network access in the pipeline goes through :class:`HttpClient` so the
retry policy (bounded attempts, exponential backoff, Retry-After support)
and request-rate ceilings are enforced uniformly, and so tests can point
every endpoint at local stub servers.
"""

from __future__ import annotations

import logging
import threading
import time
from typing import Mapping, Optional

import requests

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0
DEFAULT_USER_AGENT = "codeaudit/0.1"

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class TransientHttpError(Exception):
    """Request failed after exhausting retries; safe to retry later."""


class HttpStatusError(Exception):
    """Terminal non-success HTTP status."""

    def __init__(self, url: str, status_code: int, body_preview: str = ""):
        super().__init__(f"HTTP {status_code} for {url}")
        self.url = url
        self.status_code = status_code
        self.body_preview = body_preview


class RateLimiter:
    """Thread-safe token bucket capping sustained request rate."""

    def __init__(self, requests_per_second: float, burst: float = 1.0):
        if requests_per_second <= 0:
            raise ValueError("rate must be positive")
        self.rate = requests_per_second
        self.capacity = max(burst, 1.0)
        self._tokens = self.capacity
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        """Block until a request token is available."""
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(
                    self.capacity, self._tokens + (now - self._last) * self.rate
                )
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


class HttpClient:
    """requests wrapper with bounded retries and named rate limiters.

    Sessions are per-thread (requests.Session is not thread-safe); the
    limiter registry is shared so concurrent workers respect one global
    ceiling per endpoint name.
    """

    def __init__(
        self,
        *,
        attempts: int = 3,
        backoff_base: float = 1.0,
        timeout: float = DEFAULT_TIMEOUT,
        user_agent: str = DEFAULT_USER_AGENT,
    ):
        self.attempts = attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.user_agent = user_agent
        self._limiters: dict[str, RateLimiter] = {}
        self._local = threading.local()
        self._lock = threading.Lock()

    def set_rate_limit(self, name: str, requests_per_second: float) -> None:
        with self._lock:
            self._limiters[name] = RateLimiter(requests_per_second)

    def _session(self) -> requests.Session:
        sess = getattr(self._local, "session", None)
        if sess is None:
            sess = requests.Session()
            sess.headers["User-Agent"] = self.user_agent
            self._local.session = sess
        return sess

    def get(
        self,
        url: str,
        *,
        limiter: Optional[str] = None,
        headers: Optional[Mapping[str, str]] = None,
        allow_redirects: bool = True,
        ok_statuses: tuple[int, ...] = (200,),
    ) -> requests.Response:
        """GET with retries on transient failures.

        Raises HttpStatusError for terminal statuses outside ok_statuses
        and TransientHttpError once retryable failures exhaust the budget.
        """
        rate = self._limiters.get(limiter) if limiter else None
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            if rate is not None:
                rate.acquire()
            try:
                resp = self._session().get(
                    url,
                    headers=dict(headers) if headers else None,
                    timeout=self.timeout,
                    allow_redirects=allow_redirects,
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("GET %s failed (%s), attempt %d", url, exc, attempt + 1)
                self._sleep(attempt)
                continue
            if resp.status_code in ok_statuses:
                return resp
            if not allow_redirects and 300 <= resp.status_code < 400:
                return resp
            if resp.status_code in RETRYABLE_STATUS:
                last_error = HttpStatusError(url, resp.status_code)
                retry_after = resp.headers.get("Retry-After")
                logger.warning(
                    "GET %s -> %d, attempt %d", url, resp.status_code, attempt + 1
                )
                self._sleep(attempt, retry_after)
                continue
            raise HttpStatusError(url, resp.status_code, resp.text[:200])
        raise TransientHttpError(f"GET {url} failed after {self.attempts} attempts") from last_error

    def _sleep(self, attempt: int, retry_after: str | None = None) -> None:
        delay = self.backoff_base * (2**attempt)
        if retry_after:
            try:
                delay = max(delay, float(retry_after))
            except ValueError:
                pass
        time.sleep(delay)
