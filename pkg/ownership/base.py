# ownership/base.py

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Optional


@dataclass(frozen=True)
class SpatialParams:
    """
    Spatial context extraction settings.

    - gamma: scaling of the vertical axis in the distance.
    - sigma: Gaussian range in meters.
    - weight_floor: candidates whose weight falls below this are dropped.
    - k_near: number of neighboring objects returned.
    """

    gamma: float = 1.0
    sigma: float = 0.5
    weight_floor: float = 1e-3
    k_near: int = 5

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise InputError(f"sigma must be > 0, got {self.sigma}")
        if self.k_near < 0:
            raise InputError(f"k_near must be >= 0, got {self.k_near}")
        if not 0 < self.weight_floor < 1:
            raise InputError(f"weight_floor must be in (0,1), got {self.weight_floor}")


@dataclass(frozen=True)
class SimilarityParams:
    k_sim: int = 5

    def __post_init__(self) -> None:
        if self.k_sim < 0:
            raise InputError(f"k_sim must be >= 0, got {self.k_sim}")


@dataclass(frozen=True)
class ShareParams:
    """Thresholds for shared-ownership detection on sorted scores."""

    eps_min: float = 0.80
    eps_in: float = 0.08
    eps_out: float = 0.20

    def __post_init__(self) -> None:
        for name in ("eps_min", "eps_in", "eps_out"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InputError(f"{name} must be in [0,1], got {value}")


@dataclass(frozen=True)
class HeuristicWeights:
    """
    Weights of the offline scorer terms: usage frequency, recency,
    role/class prior and known-facts context. tau is the recency decay in days.
    """

    freq: float = 0.4
    recency: float = 0.2
    prior: float = 0.2
    context: float = 0.2
    tau: float = 3.0

    def __post_init__(self) -> None:
        weights = (self.freq, self.recency, self.prior, self.context)
        if any(w < 0 for w in weights):
            raise InputError(f"heuristic weights must be non-negative, got {weights}")
        if sum(weights) <= 0:
            raise InputError("heuristic weights must have a positive sum")
        if self.tau <= 0:
            raise InputError(f"tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class LlmParams:
    """
    OpenAI-compatible chat endpoint. The API key is never stored here; only
    the name of the environment variable that holds it.
    """

    name: str = "openai"
    base_url: Optional[str] = None
    model: str = "gpt-4o-2024-11-20"
    temperature: float = 0.2
    api_key_env: str = "OPENAI_API_KEY"
    max_tokens: int = 512


# ----------------------------------------------------------------------
# Errors
# ----------------------------------------------------------------------


class OwnershipError(Exception):
    """Base class for every error raised by the ownership package."""


class InputError(OwnershipError, ValueError):
    """Invalid files, identifiers or parameters."""


class CalibrationError(InputError):
    def __init__(self, message: str, min_required: Optional[int] = None) -> None:
        super().__init__(message)
        self.min_required = min_required


class BackendError(OwnershipError, RuntimeError):
    def __init__(self, message: str, raw: str = "") -> None:
        super().__init__(message)
        self.raw = raw


class RespondentError(OwnershipError, RuntimeError):
    """The answer source could not produce an answer."""


class AcquisitionAborted(OwnershipError, RuntimeError):
    def __init__(self, message: str, trace: Any = None) -> None:
        super().__init__(message)
        self.trace = trace


def describe_error(err: Exception) -> Dict[str, Any]:
    payload: Dict[str, Any] = {"error": str(err), "type": type(err).__name__}
    if isinstance(err, CalibrationError) and err.min_required is not None:
        payload["min_required"] = err.min_required
    if isinstance(err, BackendError) and err.raw:
        payload["raw"] = err.raw[:500]
    return payload
