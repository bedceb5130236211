# ownership/conformal.py

"""
Split conformal calibration and inference over ownership scores.

  nc      = 1 - max score over the true owners
  q_alpha = ceil((N+1)(1-alpha))-th smallest nc
  Gamma   = users scoring at least 1 - q_alpha
  cp      = 1 - mean score over Gamma (1 when Gamma is empty)
  q_cp    = ceil((N+1) alpha_cp)-th smallest calibration cp
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .base import CalibrationError, InputError, SimilarityParams, SpatialParams
from .roster_map import MapStore, OwnershipScores, Roster
from .scoring import AblationFlags, ScorerBackend, build_bundles, score_objects
from .usage_history import EventLog
from .utils import read_json, validate_model, write_json

if TYPE_CHECKING:
    from .datagen import GroundTruth, ScenarioSpec

logger = logging.getLogger(__name__)

MEMBER_TOLERANCE = 1e-12
CALIBRATION_SEED_OFFSET = 1000


@dataclass(frozen=True)
class CalibrationSample:
    object_id: str
    scores: OwnershipScores
    true_owners: Tuple[str, ...]
    category: str = ""

    def __post_init__(self) -> None:
        if not self.true_owners:
            raise InputError(f"Calibration sample {self.object_id} has no true owners")
        missing = [u for u in self.true_owners if u not in self.scores]
        if missing:
            raise InputError(f"Calibration sample {self.object_id}: owners {missing} not in the roster")


@dataclass(frozen=True)
class CalibrationModel:
    q_alpha: float
    q_cp: float
    n_calibration: int
    alpha: float = 0.2
    alpha_cp: float = 0.05
    scorer: str = "heuristic"

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise InputError(f"alpha must be in (0,1), got {self.alpha}")
        if not 0 < self.alpha_cp < 1:
            raise InputError(f"alpha_cp must be in (0,1), got {self.alpha_cp}")
        if self.n_calibration < 1:
            raise InputError(f"n_calibration must be >= 1, got {self.n_calibration}")
        for name in ("q_alpha", "q_cp"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InputError(f"{name} must be in [0,1], got {value}")

    def to_dict(self) -> Dict[str, object]:
        return {
            "alpha": self.alpha,
            "q_alpha": self.q_alpha,
            "alpha_cp": self.alpha_cp,
            "q_cp": self.q_cp,
            "n_calibration": self.n_calibration,
            "scorer": self.scorer,
        }


@dataclass(frozen=True)
class PredictionSet:
    members: Tuple[str, ...]
    cp_score: float


# ----------------------------------------------------------------------
# Core formulas
# ----------------------------------------------------------------------


def _order_index(n: int, level: float) -> int:
    # round() absorbs float noise such as 5 * 0.8 = 4.000000000000001
    return math.ceil(round((n + 1) * level, 9))


def _min_required(level: float) -> int:
    n = 1
    while _order_index(n, level) > n:
        n += 1
    return n


def nonconformity(scores: OwnershipScores, true_owners: Iterable[str]) -> float:
    owners = list(true_owners)
    if not owners:
        raise InputError("nonconformity needs a non-empty true owner set")
    missing = [u for u in owners if u not in scores]
    if missing:
        raise InputError(f"True owners {missing} have no score")
    return 1.0 - max(scores[u] for u in owners)


def _order_statistic(values: Sequence[float], level: float, what: str) -> float:
    n = len(values)
    idx = _order_index(n, level)
    if n == 0 or idx > n:
        need = _min_required(level)
        raise CalibrationError(
            f"Not enough calibration samples for {what}: N={n}, need at least {need}",
            min_required=need,
        )
    return float(np.sort(np.asarray(values, dtype=float))[max(idx, 1) - 1])


def calibrate(nc_scores: Sequence[float], alpha: float = 0.2) -> float:
    if not 0 < alpha < 1:
        raise InputError(f"alpha must be in (0,1), got {alpha}")
    return _order_statistic(nc_scores, 1.0 - alpha, "q_alpha")


def stopping_threshold(cp_scores: Sequence[float], alpha_cp: float = 0.05) -> float:
    if not 0 < alpha_cp < 1:
        raise InputError(f"alpha_cp must be in (0,1), got {alpha_cp}")
    return _order_statistic(cp_scores, alpha_cp, "q_cp")


def prediction_set(scores: OwnershipScores, q_alpha: float) -> PredictionSet:
    threshold = 1.0 - q_alpha
    members = tuple(u for u, s in scores.items() if s >= threshold - MEMBER_TOLERANCE)
    if not members:
        return PredictionSet(members=(), cp_score=1.0)
    mean = float(np.mean([scores[u] for u in members]))
    return PredictionSet(members=members, cp_score=min(1.0, max(0.0, 1.0 - mean)))


def coverage(samples: Sequence[CalibrationSample], q_alpha: float) -> Dict[str, float]:
    """
    Empirical coverage of the prediction sets on labeled samples:
    `full` is the rate of true owners contained in the set, `any` the rate
    of at least one true owner in it.
    """
    if not samples:
        return {"n": 0, "full": 0.0, "any": 0.0}
    full = 0
    any_owner = 0
    for sample in samples:
        members = set(prediction_set(sample.scores, q_alpha).members)
        truth = set(sample.true_owners)
        full += truth <= members
        any_owner += bool(truth & members)
    n = len(samples)
    return {"n": n, "full": full / n, "any": any_owner / n}


def fit_calibration(
    samples: Sequence[CalibrationSample],
    alpha: float = 0.2,
    alpha_cp: float = 0.05,
    scorer: str = "heuristic",
) -> CalibrationModel:
    """q_alpha from the nonconformity scores, then q_cp from the cp scores under q_alpha."""
    nc = [nonconformity(s.scores, s.true_owners) for s in samples]
    q_alpha = calibrate(nc, alpha)
    cp = [prediction_set(s.scores, q_alpha).cp_score for s in samples]
    q_cp = stopping_threshold(cp, alpha_cp)
    model = CalibrationModel(
        q_alpha=q_alpha,
        q_cp=q_cp,
        n_calibration=len(samples),
        alpha=alpha,
        alpha_cp=alpha_cp,
        scorer=scorer,
    )
    logger.info(
        "Calibrated on %d samples: q_alpha=%.4f q_cp=%.4f (alpha=%g, alpha_cp=%g)",
        len(samples), q_alpha, q_cp, alpha, alpha_cp,
    )
    return model


# ----------------------------------------------------------------------
# Calibration data
# ----------------------------------------------------------------------


def calibration_samples(
    store: MapStore,
    log: EventLog,
    truth: "GroundTruth",
    roster: Roster,
    backend: ScorerBackend,
    spatial: SpatialParams = SpatialParams(),
    similarity: SimilarityParams = SimilarityParams(),
    flags: AblationFlags = AblationFlags(),
    window_days: float = 365.0,
    workers: int = 1,
) -> List[CalibrationSample]:
    """Single-shot scores (no known facts) for every labeled object of one environment."""
    bundles = build_bundles(store, log, roster, spatial, similarity, flags, window_days)
    scored = score_objects(backend, list(bundles.values()), known=None, workers=workers)
    samples = []
    for oid, result in scored.items():
        owners = truth.owners.get(oid)
        if not owners:
            continue
        samples.append(
            CalibrationSample(
                object_id=oid,
                scores=result.scores,
                true_owners=tuple(owners),
                category=truth.categories.get(oid, ""),
            )
        )
    return samples


def calibrate_environment(
    spec: "ScenarioSpec",
    seed: int,
    n_envs: int,
    backend: ScorerBackend,
    spatial: SpatialParams = SpatialParams(),
    similarity: SimilarityParams = SimilarityParams(),
    flags: AblationFlags = AblationFlags(),
    window_days: float = 365.0,
    train_days: Optional[int] = None,
    workers: int = 1,
) -> List[CalibrationSample]:
    """
    Generate `n_envs` environments from `spec` with seeds seed + 1000 + i and
    pool their single-shot calibration samples.
    """
    from .datagen import generate_environment, split_by_time

    if n_envs < 1:
        raise InputError(f"calibration_envs must be >= 1, got {n_envs}")
    samples: List[CalibrationSample] = []
    for i in range(n_envs):
        env_seed = seed + CALIBRATION_SEED_OFFSET + i
        env = generate_environment(spec, seed=env_seed)
        log = env.log if train_days is None else split_by_time(env.log, train_days)[0]
        samples.extend(
            calibration_samples(
                env.map, log, env.truth, env.roster, backend,
                spatial, similarity, flags, window_days, workers,
            )
        )
        logger.debug("Calibration environment seed=%d: %d samples so far", env_seed, len(samples))
    return samples


# ----------------------------------------------------------------------
# Persistence
# ----------------------------------------------------------------------


class _CalibrationFileModel(BaseModel):
    alpha: float = Field(gt=0, lt=1)
    q_alpha: float = Field(ge=0, le=1)
    alpha_cp: float = Field(gt=0, lt=1)
    q_cp: float = Field(ge=0, le=1)
    n_calibration: int = Field(ge=1)
    scorer: str = "heuristic"


def save_calibration(model: CalibrationModel, path: str | Path) -> Path:
    out = write_json(model.to_dict(), path)
    logger.info("Wrote calibration to %s", out)
    return out


def load_calibration(path: str | Path) -> CalibrationModel:
    item = validate_model(_CalibrationFileModel, read_json(path), f"calibration file '{path}'")
    return CalibrationModel(
        q_alpha=item.q_alpha,
        q_cp=item.q_cp,
        n_calibration=item.n_calibration,
        alpha=item.alpha,
        alpha_cp=item.alpha_cp,
        scorer=item.scorer,
    )
