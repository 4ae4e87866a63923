"""HTTP client for remote decision oracles speaking the /classify protocol.

Wire format: POST {base}/classify with JSON
    {"shape": [H, W, C], "pixels": [k floats, row-major]}
and a JSON response
    {"labels": [{"name": str, "rank": int}, ...]}.

Transport failures are retried with exponential backoff and never touch
the query ledger; only a parsed answer counts as a model evaluation.
Confidence scores or any extra response fields are ignored: the attack is
label-only by construction.
"""

from __future__ import annotations

import time

import httpx
import numpy as np

from .errors import ProtocolError, RemoteUnavailableError
from .oracles import MAX_WIRE_LABELS, LabelSet, RankedLabel
from .tensor_core import ImageShape

CLASSIFY_PATH = "/classify"


def parse_label_payload(payload) -> LabelSet:
    """Build a LabelSet from a decoded response body, dropping unknown keys."""
    if not isinstance(payload, dict) or "labels" not in payload:
        raise ProtocolError("response body must be an object with a 'labels' list")
    raw = payload["labels"]
    if not isinstance(raw, list) or not raw:
        raise ProtocolError("'labels' must be a non-empty list")
    if len(raw) > MAX_WIRE_LABELS:
        raise ProtocolError(f"too many labels: {len(raw)} > {MAX_WIRE_LABELS}")
    parsed = []
    for item in raw:
        if not isinstance(item, dict) or not isinstance(item.get("name"), str) \
                or not isinstance(item.get("rank"), int):
            raise ProtocolError(f"malformed label entry: {item!r}")
        parsed.append(RankedLabel(name=item["name"], rank=item["rank"]))
    try:
        return LabelSet(labels=tuple(parsed))
    except ValueError as exc:
        raise ProtocolError(str(exc)) from exc


class RemoteOracle:
    """Decision oracle backed by a /classify HTTP service.

    Requests are serialized per instance; give each concurrent attack run
    its own client.
    """

    concurrency_safe = False

    def __init__(self, endpoint_url: str, shape: ImageShape, timeout: float = 10.0,
                 max_retries: int = 3, backoff: float = 0.5):
        base = endpoint_url.rstrip("/")
        self.url = base if base.endswith(CLASSIFY_PATH) else base + CLASSIFY_PATH
        self.shape = shape
        self.max_retries = int(max_retries)
        self.backoff = float(backoff)
        self._client = httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def predict(self, x: np.ndarray) -> LabelSet:
        payload = {"shape": list(self.shape.dims), "pixels": x.ravel().tolist()}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt > 0:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                response = self._client.post(self.url, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                # Server-side fault: retryable, same as a transport failure.
                last_error = RemoteUnavailableError(f"server answered {response.status_code}")
                continue
            if response.status_code != 200:
                raise ProtocolError(f"unexpected status {response.status_code}: {response.text[:200]}")
            try:
                body = response.json()
            except ValueError as exc:
                raise ProtocolError(f"response is not valid JSON: {exc}") from exc
            return parse_label_payload(body)
        raise RemoteUnavailableError(
            f"no answer from {self.url} after {self.max_retries + 1} attempts: {last_error}"
        )
