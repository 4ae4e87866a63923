"""Request/response models for the classify wire format."""

from pydantic import BaseModel


class ClassifyRequest(BaseModel):
    shape: list[int]
    pixels: list[float]


class WireLabel(BaseModel):
    name: str
    rank: int


class ClassifyResponse(BaseModel):
    labels: list[WireLabel]
