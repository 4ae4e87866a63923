from .app import StubServer, create_app, serve
from .schemas import ClassifyRequest, ClassifyResponse, WireLabel

__all__ = ["StubServer", "create_app", "serve", "ClassifyRequest", "ClassifyResponse", "WireLabel"]
