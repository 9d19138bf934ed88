from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class Edge(BaseModel):
    src: int = Field(..., ge=0)
    dst: int = Field(..., ge=0)
    weight: float


class SessionCreate(BaseModel):
    n_nodes: int = Field(..., ge=1, description="size of the starting graph")
    edges: list[Edge] = Field(default_factory=list)
    signal: list[float]
    normalize: bool = Field(True, description="divide the adjacency by its spectral radius")
    eta: float = Field(..., ge=0)
    mu: float = Field(0.0, ge=0)
    K: int = Field(5, ge=1)
    projection_radius: Optional[float] = Field(None, gt=0)


class SessionInfo(BaseModel):
    session_id: str
    n_nodes: int
    n_edges: int
    step: int
    taps: list[float]
    scale: float
    mean_loss: Optional[float] = None
    pending: bool = False


class Attachment(BaseModel):
    indices: list[int] = Field(default_factory=list)
    weights: list[float] = Field(default_factory=list)


class Prediction(BaseModel):
    step: int
    prediction: float


class Reveal(BaseModel):
    x_true: float


class RevealResult(BaseModel):
    step: int
    loss: float
    taps: list[float]
    n_nodes: int


class FrequencyResponseOut(BaseModel):
    grid: list[float]
    values: list[float]


class RegretOut(BaseModel):
    T: int
    total_regret: float
    normalized_regret: float
    comparator: list[float]


class ExperimentRequest(BaseModel):
    config: dict[str, Any] = Field(default_factory=dict)
    check: bool = False


class CheckOut(BaseModel):
    name: str
    passed: bool
    detail: str


class ExperimentOut(BaseModel):
    result: dict[str, Any]
    checks: list[CheckOut] = Field(default_factory=list)
