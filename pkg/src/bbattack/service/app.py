"""FastAPI service exposing a decision oracle over HTTP.

One endpoint, POST /classify, speaks the wire format consumed by
RemoteOracle. The service wraps any in-process oracle (toy or fixed-label
stub), which makes it both the reference implementation for integration
tests and a standing target for remote attack runs.
"""

from __future__ import annotations

import threading
import time

import numpy as np
import uvicorn
from fastapi import FastAPI, HTTPException

from ..oracles import MAX_WIRE_LABELS
from .schemas import ClassifyRequest, ClassifyResponse, WireLabel

# Tolerance for float round-trips when validating the pixel domain.
PIXEL_DOMAIN_SLACK = 1e-9


def create_app(oracle) -> FastAPI:
    app = FastAPI(title="bbattack classify service", version="0.1.0")
    lock = threading.Lock()

    @app.post("/classify", response_model=ClassifyResponse)
    def classify(request: ClassifyRequest) -> ClassifyResponse:
        if list(request.shape) != list(oracle.shape.dims):
            raise HTTPException(status_code=422,
                                detail=f"shape {request.shape} != served shape {list(oracle.shape.dims)}")
        if len(request.pixels) != oracle.shape.k:
            raise HTTPException(status_code=422,
                                detail=f"expected {oracle.shape.k} pixels, got {len(request.pixels)}")
        x = np.asarray(request.pixels, dtype=np.float64).reshape(oracle.shape.dims)
        if x.min() < -PIXEL_DOMAIN_SLACK or x.max() > 1.0 + PIXEL_DOMAIN_SLACK:
            raise HTTPException(status_code=422, detail="pixels must lie in [0, 1]")
        with lock:
            labels = oracle.predict(x)
        wire = [WireLabel(name=lab.name, rank=lab.rank) for lab in labels.labels[:MAX_WIRE_LABELS]]
        return ClassifyResponse(labels=wire)

    return app


class StubServer:
    """uvicorn server on a background thread, for tests and local runs."""

    def __init__(self, oracle, host: str = "127.0.0.1", port: int = 0):
        self.app = create_app(oracle)
        config = uvicorn.Config(self.app, host=host, port=port, log_level="warning")
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self.host = host
        self.port = port

    def start(self, timeout: float = 10.0) -> "StubServer":
        self._thread.start()
        deadline = time.time() + timeout
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("stub server failed to start")
            time.sleep(0.01)
        sock = self._server.servers[0].sockets[0]
        self.port = sock.getsockname()[1]
        return self

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10.0)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(oracle, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the classify service in the foreground (blocks until stopped)."""
    uvicorn.run(create_app(oracle), host=host, port=port, log_level="info")
