"""HTTP client for a remote embedding service.

Wire protocol: POST ``{endpoint}/embed`` with JSON body
``{"texts": [string, ...]}``; the service replies with
``{"dim": int, "vectors": [[number, ...], ...]}`` carrying exactly one
vector per input text, in input order. Any non-200 status is a
service-reported error. Connection-level failures are retried with
exponential backoff, up to three attempts per request.
"""

from __future__ import annotations

import os
import time

import requests

from .encoders import EncoderSpec
from .errors import MalformedResponseError, RemoteError, ServiceUnreachableError
from .vectors import EmbeddingVector, l2_normalize

ENDPOINT_ENV_VAR = "F4_ENCODER_ENDPOINT"
MAX_ATTEMPTS = 3
MAX_TEXT_BYTES = 8192


def default_endpoint() -> str:
    """Endpoint taken from the F4_ENCODER_ENDPOINT environment variable."""
    return os.environ.get(ENDPOINT_ENV_VAR, "")


def encode_remote(
    texts: list[str],
    spec: EncoderSpec,
    batch_size: int = 64,
    timeout: float = 10.0,
    retry_delay: float = 0.5,
    bearer_token: str | None = None,
    session: requests.Session | None = None,
) -> list[EmbeddingVector]:
    """Embed ``texts`` via the remote service named by ``spec``.

    Texts are sent in batches of at most ``batch_size``; batches are
    issued and appended strictly in input order, so outputs line up with
    inputs one-to-one. Each returned vector is normalized on receipt.
    """
    if spec.kind != "remote":
        raise ValueError("encode_remote needs a remote encoder spec")
    if not texts:
        raise ValueError("texts must be non-empty")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    for text in texts:
        if len(text.encode("utf-8")) > MAX_TEXT_BYTES:
            raise ValueError(f"text exceeds {MAX_TEXT_BYTES} bytes")

    url = spec.endpoint.rstrip("/") + "/embed"
    headers = {}
    if bearer_token:
        headers["Authorization"] = f"Bearer {bearer_token}"
    sess = session or requests.Session()

    vectors: list[EmbeddingVector] = []
    for start in range(0, len(texts), batch_size):
        batch = texts[start : start + batch_size]
        payload = _post_with_retry(sess, url, {"texts": batch}, timeout, retry_delay, headers)
        vectors.extend(_parse_batch(payload, len(batch), spec.dim))
    return vectors


def _post_with_retry(sess, url, body, timeout, retry_delay, headers):
    delay = retry_delay
    last_exc = None
    for attempt in range(MAX_ATTEMPTS):
        try:
            resp = sess.post(url, json=body, timeout=timeout, headers=headers)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_exc = exc
            if attempt < MAX_ATTEMPTS - 1:
                time.sleep(delay)
                delay *= 2
            continue
        if resp.status_code != 200:
            raise RemoteError(f"service returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponseError("response body is not valid JSON") from exc
    raise ServiceUnreachableError(
        f"{url} unreachable after {MAX_ATTEMPTS} attempts"
    ) from last_exc


def _parse_batch(payload, expected_count: int, expected_dim: int) -> list[EmbeddingVector]:
    if not isinstance(payload, dict) or "vectors" not in payload or "dim" not in payload:
        raise MalformedResponseError("response missing 'dim' or 'vectors'")
    if payload["dim"] != expected_dim:
        raise MalformedResponseError(
            f"service dim {payload['dim']} != expected {expected_dim}"
        )
    rows = payload["vectors"]
    if not isinstance(rows, list) or len(rows) != expected_count:
        raise MalformedResponseError(
            f"service returned {len(rows) if isinstance(rows, list) else '?'} vectors "
            f"for {expected_count} texts"
        )
    out = []
    for row in rows:
        if not isinstance(row, list) or len(row) != expected_dim:
            raise MalformedResponseError("vector length does not match dim")
        out.append(l2_normalize(EmbeddingVector(row)))
    return out
