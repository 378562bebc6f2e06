"""Small HTTP JSON helper shared by the remote embedding and LLM clients."""

from __future__ import annotations

import logging
import os
import time

import requests

from .errors import ConfigError, TransportError

log = logging.getLogger(__name__)


def bearer_headers(api_key_env: str | None) -> dict[str, str]:
    """Build auth headers from the environment variable named in config."""
    headers = {"Content-Type": "application/json"}
    if api_key_env:
        token = os.environ.get(api_key_env)
        if not token:
            raise ConfigError(f"credential environment variable {api_key_env!r} is not set")
        headers["Authorization"] = f"Bearer {token}"
    return headers


def post_json(url: str, payload: dict, headers: dict[str, str],
              timeout: float = 30.0, retries: int = 2, backoff: float = 0.5) -> dict:
    """POST JSON and return the decoded JSON body.

    Connection failures and 5xx responses are retried with exponential
    backoff; 4xx responses are fatal immediately.
    """
    last: Exception | None = None
    for attempt in range(retries + 1):
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except (requests.ConnectionError, requests.Timeout) as e:
            last = e
        else:
            if resp.status_code < 400:
                try:
                    return resp.json()
                except ValueError as e:
                    raise TransportError(f"{url}: response is not JSON: {e}") from e
            if resp.status_code < 500:
                raise TransportError(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
            last = TransportError(f"{url}: HTTP {resp.status_code}")
        if attempt < retries:
            delay = backoff * (2 ** attempt)
            log.warning("retrying %s after failure (%s), attempt %d", url, last, attempt + 2)
            if delay > 0:
                time.sleep(delay)
    raise TransportError(f"{url}: giving up after {retries + 1} attempts: {last}")
