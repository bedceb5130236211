# ownership/config.py

"""
Run configuration: a JSON file (optional) overridden by command-line flags.
Secrets never live here; only the name of the environment variable holding
the API key.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field

from .acquisition import AcquisitionParams
from .base import HeuristicWeights, InputError, LlmParams, ShareParams, SimilarityParams, SpatialParams
from .scoring import AblationFlags
from .utils import read_json, validate_model


class LlmSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    base_url: Optional[str] = None
    model: str = "gpt-4o-2024-11-20"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = Field(default=0.2, ge=0.0, le=2.0)
    max_tokens: int = Field(default=512, ge=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # paths
    data_dir: Optional[str] = None
    spec: Optional[str] = None
    calibration: Optional[str] = None
    out: str = "runs"
    record: Optional[str] = None

    # backends
    scorer: str = "heuristic"
    respondent: str = "oracle"
    method: Literal["coin", "last_user", "frequency"] = "coin"
    dialogue: Literal["auto", "template", "llm"] = "auto"
    llm: LlmSettings = Field(default_factory=LlmSettings)

    # context extraction
    gamma: float = 1.0
    sigma: float = Field(default=0.5, gt=0)
    weight_floor: float = Field(default=1e-3, gt=0, lt=1)
    k_near: int = Field(default=5, ge=0)
    k_sim: int = Field(default=5, ge=0)
    window_days: float = Field(default=365.0, gt=0)
    session_gap_minutes: float = Field(default=30.0, gt=0)

    # scoring
    eps_min: float = Field(default=0.80, ge=0, le=1)
    eps_in: float = Field(default=0.08, ge=0, le=1)
    eps_out: float = Field(default=0.20, ge=0, le=1)
    w_freq: float = Field(default=0.4, ge=0)
    w_recency: float = Field(default=0.2, ge=0)
    w_prior: float = Field(default=0.2, ge=0)
    w_context: float = Field(default=0.2, ge=0)
    tau_days: float = Field(default=3.0, gt=0)
    affinity: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    confidence_threshold: float = Field(default=0.9, gt=0.5, le=1.0)
    ablation: List[str] = Field(default_factory=list)

    # conformal
    alpha: float = Field(default=0.2, gt=0, lt=1)
    alpha_cp: float = Field(default=0.05, gt=0, lt=1)
    calibration_envs: int = Field(default=5, ge=1)

    # experiment
    q_max: Optional[int] = Field(default=None, ge=0)
    seed: int = 0
    trials: int = Field(default=1, ge=1)
    workers: int = Field(default=1, ge=1)
    train_days: Optional[int] = Field(default=None, ge=0)

    def spatial_params(self) -> SpatialParams:
        return SpatialParams(gamma=self.gamma, sigma=self.sigma, weight_floor=self.weight_floor, k_near=self.k_near)

    def similarity_params(self) -> SimilarityParams:
        return SimilarityParams(k_sim=self.k_sim)

    def share_params(self) -> ShareParams:
        return ShareParams(eps_min=self.eps_min, eps_in=self.eps_in, eps_out=self.eps_out)

    def heuristic_weights(self) -> HeuristicWeights:
        return HeuristicWeights(
            freq=self.w_freq,
            recency=self.w_recency,
            prior=self.w_prior,
            context=self.w_context,
            tau=self.tau_days,
        )

    def llm_params(self) -> LlmParams:
        return LlmParams(
            base_url=self.llm.base_url,
            model=self.llm.model,
            temperature=self.llm.temperature,
            api_key_env=self.llm.api_key_env,
            max_tokens=self.llm.max_tokens,
        )

    def flags(self) -> AblationFlags:
        return AblationFlags.from_names(self.ablation)

    def acquisition_params(self) -> AcquisitionParams:
        return AcquisitionParams(
            spatial=self.spatial_params(),
            similarity=self.similarity_params(),
            share=self.share_params(),
            flags=self.flags(),
            window_days=self.window_days,
            confidence_threshold=self.confidence_threshold,
            workers=self.workers,
        )

    @property
    def scorer_kind(self) -> str:
        return self.scorer.split(":", 1)[0]

    @property
    def uses_llm_dialogue(self) -> bool:
        if self.dialogue == "auto":
            return self.scorer_kind in ("llm", "replay")
        return self.dialogue == "llm"


def load_config(path: Optional[str | Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """File values first, then every override that is not None."""
    data: Dict[str, Any] = {}
    if path:
        raw = read_json(path)
        if not isinstance(raw, dict):
            raise InputError(f"Config file '{path}' must hold a JSON object")
        data.update(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return validate_model(RunConfig, data, f"config file '{path}'" if path else "configuration")
