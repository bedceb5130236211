# ownership/roster_map.py

"""
Users, mapped objects and the ownership-aware map store.

Map file (JSON list, one record per object):
  { "object_id": "cup_1", "class": "cup", "position": [x, y, z],
    "feature": [...], "room": "kitchen", "owners": ["Bob"], "scores": {...} }
`room`, `owners` and `scores` are optional. See SCHEMA.md.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .base import InputError, SimilarityParams, SpatialParams
from .utils import read_json, validate_model, write_json

if TYPE_CHECKING:
    from .scoring import ShareDecision

logger = logging.getLogger(__name__)

FEATURE_DIM = 512
UNIT_TOLERANCE = 1e-6
RENORMALIZE_TOLERANCE = 1e-3

OwnershipScores = Dict[str, float]


# ----------------------------------------------------------------------
# Users
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class UserProfile:
    name: str
    role: str
    occupation: str


class Roster:
    """Ordered, name-unique set of candidate owners."""

    def __init__(self, users: Sequence[UserProfile]) -> None:
        users = list(users)
        if len(users) < 2:
            raise InputError(f"A roster needs at least 2 users, got {len(users)}")
        seen = set()
        for u in users:
            if not u.name:
                raise InputError("User name must be non-empty")
            if u.name in seen:
                raise InputError(f"Duplicate user name in roster: {u.name}")
            if not u.role or not u.occupation:
                raise InputError(f"User {u.name} needs a non-empty role and occupation")
            seen.add(u.name)
        self._users: List[UserProfile] = users

    @property
    def users(self) -> List[UserProfile]:
        return list(self._users)

    @property
    def names(self) -> List[str]:
        return [u.name for u in self._users]

    def get(self, name: str) -> Optional[UserProfile]:
        for u in self._users:
            if u.name == name:
                return u
        return None

    def __contains__(self, name: object) -> bool:
        return any(u.name == name for u in self._users)

    def __iter__(self) -> Iterator[UserProfile]:
        return iter(self._users)

    def __len__(self) -> int:
        return len(self._users)

    def zero_scores(self) -> OwnershipScores:
        return {name: 0.0 for name in self.names}

    def to_list(self) -> List[Dict[str, str]]:
        return [{"name": u.name, "role": u.role, "occupation": u.occupation} for u in self._users]


class _UserModel(BaseModel):
    name: str = Field(min_length=1)
    role: str = Field(min_length=1)
    occupation: str = Field(min_length=1)


class _RosterModel(BaseModel):
    users: List[_UserModel]


def roster_from_list(items: List[Dict[str, str]]) -> Roster:
    model = validate_model(_RosterModel, {"users": items}, "roster")
    return Roster([UserProfile(u.name, u.role, u.occupation) for u in model.users])


def load_roster(path: str | Path) -> Roster:
    data = read_json(path)
    if isinstance(data, dict):
        data = data.get("users", [])
    return roster_from_list(data)


def save_roster(roster: Roster, path: str | Path) -> Path:
    return write_json(roster.to_list(), path)


# ----------------------------------------------------------------------
# Objects
# ----------------------------------------------------------------------


@dataclass
class ObjectRecord:
    object_id: str
    class_label: str
    position: Tuple[float, float, float]
    feature: np.ndarray
    scores: OwnershipScores = field(default_factory=dict)
    share: Optional["ShareDecision"] = None
    asked: bool = False
    room: str = ""
    owners: Optional[List[str]] = None


@dataclass(frozen=True)
class ContextEntry:
    """
    One neighboring (distance + weight) or similar (similarity) object, with
    its owner set when that is already known.
    """

    object_id: str
    class_label: str
    distance: Optional[float] = None
    weight: Optional[float] = None
    similarity: Optional[float] = None
    known_ownership: Optional[Tuple[str, ...]] = None

    def with_known(self, owners: Optional[Sequence[str]]) -> "ContextEntry":
        return ContextEntry(
            object_id=self.object_id,
            class_label=self.class_label,
            distance=self.distance,
            weight=self.weight,
            similarity=self.similarity,
            known_ownership=tuple(owners) if owners is not None else None,
        )

    def to_prompt_dict(self) -> Dict[str, object]:
        item: Dict[str, object] = {"object_id": self.object_id, "class": self.class_label}
        if self.distance is not None:
            item["distance"] = round(self.distance, 3)
        if self.weight is not None:
            item["weight"] = round(self.weight, 3)
        if self.similarity is not None:
            item["similarity"] = round(self.similarity, 3)
        if self.known_ownership is not None:
            item["known_ownership"] = list(self.known_ownership)
        return item


class MapStore:
    """
    Ownership-aware object map. Geometry and features are fixed after load;
    scores, share decisions and asked flags are mutated by the acquisition loop.
    """

    def __init__(self, records: Sequence[ObjectRecord] = ()) -> None:
        self._records: Dict[str, ObjectRecord] = {}
        dim: Optional[int] = None
        for rec in records:
            if rec.object_id in self._records:
                raise InputError(f"Duplicate object_id in map: {rec.object_id}")
            size = int(np.asarray(rec.feature).size)
            if dim is None:
                dim = size
            elif size != dim:
                raise InputError(f"Feature of {rec.object_id} has {size} dimensions, expected {dim}")
            self._records[rec.object_id] = rec
        self._positions: Optional[np.ndarray] = None
        self._features: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ObjectRecord]:
        return iter(self._records.values())

    def __contains__(self, object_id: object) -> bool:
        return object_id in self._records

    @property
    def ids(self) -> List[str]:
        return list(self._records.keys())

    def get(self, object_id: str) -> ObjectRecord:
        rec = self._records.get(object_id)
        if rec is None:
            raise InputError(f"Unknown object id: {object_id}")
        return rec

    def positions(self) -> np.ndarray:
        if self._positions is None:
            self._positions = np.array([r.position for r in self], dtype=float).reshape(-1, 3)
        return self._positions

    def features(self) -> np.ndarray:
        if self._features is None:
            if not self._records:
                self._features = np.zeros((0, FEATURE_DIM))
            else:
                self._features = np.vstack([r.feature for r in self])
        return self._features

    def index_of(self, object_id: str) -> int:
        self.get(object_id)
        return self.ids.index(object_id)


class _MapRecordModel(BaseModel):
    object_id: str = Field(min_length=1)
    class_label: str = Field(alias="class", min_length=1)
    position: List[float] = Field(min_length=3, max_length=3)
    feature: List[float] = Field(min_length=1)
    room: str = ""
    owners: Optional[List[str]] = None
    scores: Optional[Dict[str, float]] = None


def _unit_feature(object_id: str, values: List[float]) -> np.ndarray:
    vec = np.asarray(values, dtype=float)
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) <= UNIT_TOLERANCE:
        return vec
    if abs(norm - 1.0) <= RENORMALIZE_TOLERANCE:
        logger.warning("Renormalizing feature of %s (norm %.6f)", object_id, norm)
        return vec / norm
    raise InputError(f"Feature of {object_id} is not unit length (norm {norm:.6f})")


def records_from_list(items: List[Dict[str, object]], roster: Optional[Roster] = None) -> MapStore:
    records: List[ObjectRecord] = []
    seen = set()
    for idx, raw in enumerate(items):
        item = validate_model(_MapRecordModel, raw, f"map record #{idx}")
        if item.object_id in seen:
            raise InputError(f"Duplicate object_id in map: {item.object_id}")
        seen.add(item.object_id)
        scores: OwnershipScores = dict(item.scores or {})
        if roster is not None:
            scores = {name: float(scores.get(name, 0.0)) for name in roster.names}
        for name, value in scores.items():
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise InputError(f"Score for {name} on {item.object_id} outside [0,1]: {value}")
        records.append(
            ObjectRecord(
                object_id=item.object_id,
                class_label=item.class_label,
                position=(item.position[0], item.position[1], item.position[2]),
                feature=_unit_feature(item.object_id, item.feature),
                scores=scores,
                room=item.room,
                owners=list(item.owners) if item.owners is not None else None,
            )
        )
    return MapStore(records)


def load_map(map_file: str | Path, roster: Optional[Roster] = None) -> MapStore:
    data = read_json(map_file)
    if not isinstance(data, list):
        raise InputError(f"Map file '{map_file}' must hold a JSON list of object records")
    store = records_from_list(data, roster)
    logger.info("Loaded %d objects from %s", len(store), map_file)
    return store


def save_map(store: MapStore, path: str | Path, include_scores: bool = False) -> Path:
    items = []
    for rec in store:
        item: Dict[str, object] = {
            "object_id": rec.object_id,
            "class": rec.class_label,
            "position": [float(v) for v in rec.position],
            "feature": [float(v) for v in rec.feature],
            "room": rec.room,
        }
        if rec.owners is not None:
            item["owners"] = list(rec.owners)
        if include_scores:
            item["scores"] = dict(rec.scores)
        items.append(item)
    return write_json(items, path)


# ----------------------------------------------------------------------
# Context extraction
# ----------------------------------------------------------------------


def gaussian_weight(distance: float, sigma: float) -> float:
    return math.exp(-(distance ** 2) / (2.0 * sigma ** 2))


def neighbor_context(store: MapStore, target: str, p: SpatialParams = SpatialParams()) -> List[ContextEntry]:
    """
    Nearby objects ranked by Gaussian weight (descending), then distance,
    then object_id. Candidates under the weight floor are dropped, so fewer
    than k_near entries may come back.
    """
    t = store.index_of(target)
    pos = store.positions()
    diff = pos - pos[t]
    diff[:, 2] *= p.gamma
    dist = np.sqrt(np.sum(diff * diff, axis=1))

    ranked = []
    for i, oid in enumerate(store.ids):
        if i == t:
            continue
        w = gaussian_weight(float(dist[i]), p.sigma)
        if w < p.weight_floor:
            continue
        ranked.append((-w, float(dist[i]), oid))
    ranked.sort()

    entries = []
    for neg_w, d, oid in ranked[: p.k_near]:
        entries.append(
            ContextEntry(object_id=oid, class_label=store.get(oid).class_label, distance=d, weight=-neg_w)
        )
    return entries


def similar_context(
    store: MapStore, target: str, p: SimilarityParams = SimilarityParams()
) -> List[ContextEntry]:
    """Top-k objects by cosine similarity of unit features, object_id as tie-break."""
    t = store.index_of(target)
    feats = store.features()
    sims = feats @ feats[t]

    ranked = []
    for i, oid in enumerate(store.ids):
        if i == t:
            continue
        ranked.append((-float(np.clip(sims[i], -1.0, 1.0)), oid))
    ranked.sort()

    return [
        ContextEntry(object_id=oid, class_label=store.get(oid).class_label, similarity=-neg_s)
        for neg_s, oid in ranked[: p.k_sim]
    ]
