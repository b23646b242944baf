# Copyright (c) 2024, the aspectprune authors
# All rights reserved.
#
# Redistribution and use in source and binary forms, with or without
# modification, are permitted provided that the following conditions are met:
#
# 1. Redistributions of source code must retain the above copyright notice,
#    this list of conditions and the following disclaimer.
#
# 2. Redistributions in binary form must reproduce the above copyright
#    notice, this list of conditions and the following disclaimer in the
#    documentation and/or other materials provided with the distribution.
#
# THIS SOFTWARE IS PROVIDED BY THE COPYRIGHT HOLDERS AND CONTRIBUTORS "AS IS"
# AND ANY EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE
# IMPLIED WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE
# ARE DISCLAIMED. IN NO EVENT SHALL THE COPYRIGHT HOLDER OR CONTRIBUTORS BE
# LIABLE FOR ANY DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR
# CONSEQUENTIAL DAMAGES (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF
# SUBSTITUTE GOODS OR SERVICES; LOSS OF USE, DATA, OR PROFITS; OR BUSINESS
# INTERRUPTION) HOWEVER CAUSED AND ON ANY THEORY OF LIABILITY, WHETHER IN
# CONTRACT, STRICT LIABILITY, OR TORT (INCLUDING NEGLIGENCE OR OTHERWISE)
# ARISING IN ANY WAY OUT OF THE USE OF THIS SOFTWARE, EVEN IF ADVISED OF THE
# POSSIBILITY OF SUCH DAMAGE.

r"""OpenAI-compatible HTTP plumbing.

Both the embeddings and the chat-completions endpoints are reached via
:func:`post_json`, which retries transient failures with exponential
backoff.
"""

import logging
import os
import time
from typing import Any
from typing import Callable
from typing import Mapping
from typing import Optional
from typing import Tuple

import httpx

from .base import BudgetExceededByServer
from .base import RemoteUnavailable

_log = logging.getLogger(__name__)

RETRY_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})
r"""HTTP status codes worth retrying."""

CONTEXT_OVERFLOW_MARKERS = (
    'context_length_exceeded',
    'maximum context length',
    'context length',
    'too many tokens',
)
r"""Lowercase snippets of server messages about context overflow."""


def bearer_headers(env_var: str) -> Mapping[str, str]:
    r"""Builds request headers, with the bearer token taken from `env_var`.

    Examples:
        >>> import os
        >>> os.environ.pop('NO_SUCH_KEY_VAR', None)
        >>> dict(bearer_headers('NO_SUCH_KEY_VAR'))
        {'Content-Type': 'application/json'}
    """
    headers = {'Content-Type': 'application/json'}
    token = os.environ.get(env_var, '').strip()
    if token:
        headers['Authorization'] = f'Bearer {token}'
    return headers


def make_client(
    base_url: str,
    timeout: float,
    transport: Optional[httpx.BaseTransport] = None,
) -> httpx.Client:
    r"""Creates a synchronous HTTP client for an endpoint base URL."""

    return httpx.Client(base_url=base_url, timeout=timeout, transport=transport)


def _is_context_overflow(response: httpx.Response) -> bool:

    if response.status_code not in (400, 413, 422):
        return False
    text = response.text.lower()
    return any(marker in text for marker in CONTEXT_OVERFLOW_MARKERS)


def _retry_delay(
    response: Optional[httpx.Response],
    attempt: int,
    backoff_base: float,
    backoff_max: float,
) -> float:

    if response is not None:
        retry_after = response.headers.get('Retry-After', '')
        try:
            return min(max(float(retry_after), 0.0), backoff_max)
        except ValueError:
            pass
    return min(backoff_base * (2 ** attempt), backoff_max)


def post_json(
    client: httpx.Client,
    path: str,
    payload: Mapping[str, Any],
    headers: Mapping[str, str],
    max_retries: int = 3,
    backoff_base: float = 1.0,
    backoff_max: float = 30.0,
    sleep: Callable[[float], None] = time.sleep,
) -> Tuple[Any, int]:
    r"""Posts a JSON payload, retrying transient failures.

    Transport errors and :data:`RETRY_STATUS` answers are retried up to
    `max_retries` times, waiting ``backoff_base * 2**attempt`` seconds (or
    the server ``Retry-After``) in between.
    Context overflow answers are never retried.

    Args:
        client (:class:`httpx.Client`):
            HTTP client, with base URL.

        path (str):
            Endpoint path, relative to the client base URL.

        payload (dict):
            JSON request body.

        headers (dict):
            Request headers.

        max_retries (int):
            Retries after the first attempt.

        backoff_base (float):
            Initial backoff delay, in seconds.

        backoff_max (float):
            Maximum backoff delay, in seconds.

        sleep (callable):
            Delay function.

    Returns:
        tuple: ``(json_body, attempts)``.

    Raises:
        :class:`RemoteUnavailable`: Retries exhausted, or non-retryable error.

        :class:`BudgetExceededByServer`: Server reported a context overflow.
    """
    attempts = 0
    last_error = 'no attempt'

    for attempt in range(max_retries + 1):
        attempts += 1
        response: Optional[httpx.Response] = None
        try:
            response = client.post(path, json=dict(payload), headers=dict(headers))
        except httpx.TransportError as exc:
            last_error = f'{type(exc).__name__}: {exc}'
        else:
            status = response.status_code
            if status < 300:
                try:
                    return response.json(), attempts
                except ValueError:
                    raise RemoteUnavailable('invalid JSON response', attempts) from None

            if _is_context_overflow(response):
                raise BudgetExceededByServer(f'context overflow (HTTP {status})', attempts)

            last_error = f'HTTP {status}'
            if status not in RETRY_STATUS:
                raise RemoteUnavailable(f'request rejected: {last_error}', attempts)

        if attempt < max_retries:
            delay = _retry_delay(response, attempt, backoff_base, backoff_max)
            _log.warning('%s%s failed (%s), attempt %d/%d, retrying in %.2f s',
                         client.base_url, path, last_error, attempts, max_retries + 1, delay)
            sleep(delay)

    raise RemoteUnavailable(f'retries exhausted: {last_error}', attempts)
