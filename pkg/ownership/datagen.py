# ownership/datagen.py

"""
Synthetic household environments.

A scenario spec lists users, rooms and objects (with their true owners and
usage scenario). generate_environment expands it into:
  - an object map (positions around room centers, clustered unit features),
  - a caption log of single-user usage sessions over N days,
  - the ground-truth owner sets,
  - the roster.
Everything is a pure function of the spec and seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, RootModel, model_validator

from .base import InputError
from .roster_map import (
    FEATURE_DIM,
    MapStore,
    ObjectRecord,
    Roster,
    UserProfile,
    load_map,
    load_roster,
    save_map,
    save_roster,
)
from .usage_history import Event, EventLog, classify_action, load_captions, save_captions
from .utils import read_json, sub_seed, validate_model, write_json

logger = logging.getLogger(__name__)

SCENARIOS = ("single_user", "temporary_sharing", "multi_user_sharing")
DEFAULT_SPEC_PATH = Path(__file__).resolve().parent.parent / "default_spec.json"

# middle-of-session actions: (template, weight)
_MIDDLE_ACTIONS: Tuple[Tuple[str, float], ...] = (
    ("{user} uses the {obj}", 0.6),
    ("{user} carries the {obj} to the {room}", 0.2),
    ("{user} cleans the {obj}", 0.1),
    ("{user} looks for the {obj}", 0.1),
)
_SESSION_MARGIN_BEFORE = 40
_SESSION_MARGIN_AFTER = 50


# ----------------------------------------------------------------------
# Spec
# ----------------------------------------------------------------------


class UserSpec(BaseModel):
    name: str = Field(min_length=1)
    role: str = Field(min_length=1)
    occupation: str = Field(min_length=1)


class RoomSpec(BaseModel):
    name: str = Field(min_length=1)
    center: List[float] = Field(min_length=2, max_length=3)


class ObjectSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    object_id: str = Field(min_length=1, pattern=r"^\S+$")
    class_label: str = Field(alias="class", min_length=1)
    owners: List[str] = Field(min_length=1)
    scenario: Literal["single_user", "temporary_sharing", "multi_user_sharing"]
    p_borrow: float = Field(default=0.2, ge=0.0, lt=1.0)
    room: str = ""
    position: Optional[List[float]] = Field(default=None, min_length=3, max_length=3)

    @model_validator(mode="after")
    def _check_owners(self) -> "ObjectSpec":
        if self.scenario == "single_user" and len(self.owners) != 1:
            raise ValueError(f"single_user object {self.object_id} needs exactly one owner")
        if self.scenario == "multi_user_sharing" and len(self.owners) < 2:
            raise ValueError(f"multi_user_sharing object {self.object_id} needs at least two owners")
        if len(set(self.owners)) != len(self.owners):
            raise ValueError(f"object {self.object_id} lists an owner twice")
        return self


class ScenarioSpec(BaseModel):
    users: List[UserSpec] = Field(min_length=2)
    objects: List[ObjectSpec]
    rooms: List[RoomSpec] = Field(default_factory=list)
    days: int = Field(default=7, ge=0)
    day_start: str = "06:00"
    day_end: str = "23:00"
    start_date: str = "2025-01-13"
    seed: int = 0
    sessions_per_day: Tuple[int, int] = (2, 4)
    events_per_session: Tuple[int, int] = (2, 5)
    event_gap_minutes: Tuple[int, int] = (1, 10)
    feature_dim: int = Field(default=FEATURE_DIM, ge=2)
    owner_weight: float = Field(default=0.8, ge=0.0)
    noise_weight: float = Field(default=0.3, ge=0.0)
    room_jitter: float = Field(default=1.2, ge=0.0)
    affinity: Dict[str, Dict[str, float]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_refs(self) -> "ScenarioSpec":
        names = [u.name for u in self.users]
        if len(set(names)) != len(names):
            raise ValueError("user names must be unique")
        rooms = {r.name for r in self.rooms}
        seen = set()
        for obj in self.objects:
            if obj.object_id in seen:
                raise ValueError(f"duplicate object_id {obj.object_id}")
            seen.add(obj.object_id)
            unknown = [o for o in obj.owners if o not in names]
            if unknown:
                raise ValueError(f"object {obj.object_id}: owners {unknown} are not users")
            if obj.position is None and obj.room not in rooms:
                raise ValueError(f"object {obj.object_id} needs a position or a known room")
        for lo, hi, what in (
            (*self.sessions_per_day, "sessions_per_day"),
            (*self.events_per_session, "events_per_session"),
            (*self.event_gap_minutes, "event_gap_minutes"),
        ):
            if lo < 1 or hi < lo:
                raise ValueError(f"{what} must be an increasing pair of positive integers")
        _check_affinity(self.affinity, {u.role for u in self.users})
        start, end = _parse_hhmm(self.day_start), _parse_hhmm(self.day_end)
        span = self.event_gap_minutes[1] * (self.events_per_session[1] - 1)
        slot = (end - start) / self.sessions_per_day[1]
        if slot < _SESSION_MARGIN_BEFORE + _SESSION_MARGIN_AFTER or span > _SESSION_MARGIN_AFTER:
            raise ValueError("daily window too short for the requested sessions")
        return self


def _check_affinity(affinity: Mapping[str, Mapping[str, float]], roles: set) -> None:
    for role, table in affinity.items():
        if role not in roles:
            raise ValueError(f"affinity role {role!r} is not the role of any user")
        for label, value in table.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"affinity for {role}/{label} outside [0,1]: {value}")


def _parse_hhmm(text: str) -> int:
    try:
        parsed = datetime.strptime(text, "%H:%M")
    except ValueError:
        raise ValueError(f"time of day must be HH:MM, got {text!r}")
    return parsed.hour * 60 + parsed.minute


def load_spec(path: str | Path = DEFAULT_SPEC_PATH) -> ScenarioSpec:
    return validate_model(ScenarioSpec, read_json(path), f"scenario spec '{path}'")


# ----------------------------------------------------------------------
# Ground truth
# ----------------------------------------------------------------------


@dataclass
class GroundTruth:
    owners: Dict[str, Tuple[str, ...]]
    categories: Dict[str, str]

    def to_dict(self) -> Dict[str, Dict[str, object]]:
        return {
            oid: {"owners": list(owners), "category": self.categories.get(oid, "")}
            for oid, owners in sorted(self.owners.items())
        }


class _TruthEntryModel(BaseModel):
    owners: List[str] = Field(min_length=1)
    category: str = ""


def save_truth(truth: GroundTruth, path: str | Path) -> Path:
    return write_json(truth.to_dict(), path)


def load_truth(path: str | Path, roster: Optional[Roster] = None) -> GroundTruth:
    data = read_json(path)
    if not isinstance(data, dict):
        raise InputError(f"Ground-truth file '{path}' must hold a JSON object")
    owners: Dict[str, Tuple[str, ...]] = {}
    categories: Dict[str, str] = {}
    for oid, raw in data.items():
        entry = validate_model(_TruthEntryModel, raw, f"ground truth for {oid}")
        if roster is not None:
            unknown = [u for u in entry.owners if u not in roster]
            if unknown:
                raise InputError(f"Ground truth for {oid} names unknown users {unknown}")
        owners[oid] = tuple(entry.owners)
        categories[oid] = entry.category
    return GroundTruth(owners, categories)


# ----------------------------------------------------------------------
# Generation
# ----------------------------------------------------------------------


@dataclass
class Environment:
    map: MapStore
    log: EventLog
    truth: GroundTruth
    roster: Roster
    affinity: Dict[str, Dict[str, float]] = field(default_factory=dict)


def assign_user(
    obj: ObjectSpec,
    users: Sequence[str],
    rng: np.random.Generator,
    usage_counts: Mapping[str, int],
) -> str:
    """
    single_user: always the owner. temporary_sharing: owners split
    1 - p_borrow evenly, the rest split p_borrow evenly. multi_user_sharing:
    the owner with the fewest events so far (name breaks ties).
    """
    if obj.scenario == "single_user":
        return obj.owners[0]
    if obj.scenario == "multi_user_sharing":
        return min(obj.owners, key=lambda u: (usage_counts.get(u, 0), u))
    others = [u for u in users if u not in obj.owners]
    if not others:
        probs = [1.0 / len(obj.owners)] * len(obj.owners)
        return obj.owners[int(rng.choice(len(obj.owners), p=probs))]
    candidates = list(obj.owners) + others
    probs = [(1.0 - obj.p_borrow) / len(obj.owners)] * len(obj.owners)
    probs += [obj.p_borrow / len(others)] * len(others)
    return candidates[int(rng.choice(len(candidates), p=probs))]


def _unit(vec: np.ndarray) -> np.ndarray:
    return vec / np.linalg.norm(vec)


def _label_vector(seed: int, label: str, dim: int) -> np.ndarray:
    rng = np.random.default_rng(sub_seed(seed, "feature", label))
    return _unit(rng.standard_normal(dim))


def synth_feature(spec: ScenarioSpec, obj: ObjectSpec, seed: int) -> np.ndarray:
    """Unit class vector + owner offset + noise, renormalized."""
    dim = spec.feature_dim
    base = _label_vector(seed, "class:" + obj.class_label, dim)
    owner = _unit(np.mean([_label_vector(seed, "user:" + u, dim) for u in obj.owners], axis=0))
    noise = _label_vector(seed, "noise:" + obj.object_id, dim)
    return _unit(base + spec.owner_weight * owner + spec.noise_weight * noise)


def synth_position(spec: ScenarioSpec, obj: ObjectSpec, seed: int) -> Tuple[float, float, float]:
    if obj.position is not None:
        return (float(obj.position[0]), float(obj.position[1]), float(obj.position[2]))
    room = next(r for r in spec.rooms if r.name == obj.room)
    rng = np.random.default_rng(sub_seed(seed, "position", obj.object_id))
    dx, dy = rng.uniform(-spec.room_jitter, spec.room_jitter, size=2)
    z = room.center[2] if len(room.center) == 3 else float(rng.uniform(0.0, 1.5))
    return (float(room.center[0] + dx), float(room.center[1] + dy), float(z))


def _object_events(
    spec: ScenarioSpec,
    obj: ObjectSpec,
    users: Sequence[str],
    room_names: Sequence[str],
    seed: int,
) -> List[Event]:
    rng = np.random.default_rng(sub_seed(seed, "events", obj.object_id))
    start_day = datetime.strptime(spec.start_date, "%Y-%m-%d")
    window_start, window_end = _parse_hhmm(spec.day_start), _parse_hhmm(spec.day_end)
    counts: Dict[str, int] = {}
    templates = [t for t, _ in _MIDDLE_ACTIONS]
    weights = np.array([w for _, w in _MIDDLE_ACTIONS])
    weights = weights / weights.sum()
    events: List[Event] = []

    for day in range(spec.days):
        n_sessions = int(rng.integers(spec.sessions_per_day[0], spec.sessions_per_day[1] + 1))
        slot = (window_end - window_start) / n_sessions
        for s in range(n_sessions):
            lo = int(np.ceil(window_start + s * slot + _SESSION_MARGIN_BEFORE))
            hi = int(np.floor(window_start + (s + 1) * slot - _SESSION_MARGIN_AFTER))
            minute = int(rng.integers(lo, hi + 1))
            user = assign_user(obj, users, rng, counts)
            n_events = int(rng.integers(spec.events_per_session[0], spec.events_per_session[1] + 1))
            ts = start_day + timedelta(days=day, minutes=minute)
            for k in range(n_events):
                if k == 0:
                    text = f"{user} takes the {obj.object_id}"
                elif k == n_events - 1:
                    text = f"{user} puts back the {obj.object_id}"
                else:
                    template = templates[int(rng.choice(len(templates), p=weights))]
                    room = room_names[int(rng.integers(len(room_names)))] if room_names else "hallway"
                    text = template.format(user=user, obj=obj.object_id, room=room.replace("_", " "))
                events.append(Event(ts, user, classify_action(text), obj.object_id, text))
                ts += timedelta(minutes=int(rng.integers(spec.event_gap_minutes[0], spec.event_gap_minutes[1] + 1)))
            counts[user] = counts.get(user, 0) + n_events
    return events


def generate_environment(spec: ScenarioSpec, seed: Optional[int] = None) -> Environment:
    seed = spec.seed if seed is None else seed
    roster = Roster([UserProfile(u.name, u.role, u.occupation) for u in spec.users])
    users = roster.names
    room_names = [r.name for r in spec.rooms]

    records: List[ObjectRecord] = []
    events: List[Event] = []
    owners: Dict[str, Tuple[str, ...]] = {}
    categories: Dict[str, str] = {}
    for obj in spec.objects:
        records.append(
            ObjectRecord(
                object_id=obj.object_id,
                class_label=obj.class_label,
                position=synth_position(spec, obj, seed),
                feature=synth_feature(spec, obj, seed),
                scores=roster.zero_scores(),
                room=obj.room,
                owners=list(obj.owners),
            )
        )
        events.extend(_object_events(spec, obj, users, room_names, seed))
        owners[obj.object_id] = tuple(obj.owners)
        categories[obj.object_id] = obj.scenario

    # sort by (timestamp, object, text) so the log does not depend on spec order
    events.sort(key=lambda e: (e.timestamp, e.object_id, e.raw_text))
    env = Environment(
        MapStore(records),
        EventLog(events),
        GroundTruth(owners, categories),
        roster,
        affinity={role: dict(table) for role, table in spec.affinity.items()},
    )
    logger.info(
        "Generated %d objects, %d events over %d day(s) (seed=%d)",
        len(env.map), len(env.log), spec.days, seed,
    )
    return env


def split_by_time(log: EventLog, train_days: int) -> Tuple[EventLog, EventLog]:
    """Events strictly before earliest + train_days go to training; the rest (boundary included) to evaluation."""
    if train_days < 0:
        raise InputError(f"train_days must be >= 0, got {train_days}")
    earliest = log.earliest()
    if earliest is None:
        return EventLog(), EventLog()
    t_cut = earliest + timedelta(days=train_days)
    train = [e for e in log if e.timestamp < t_cut]
    evaluation = [e for e in log if e.timestamp >= t_cut]
    return EventLog(train), EventLog(evaluation)


# ----------------------------------------------------------------------
# Dataset files
# ----------------------------------------------------------------------

MAP_FILE = "map.json"
EVENTS_FILE = "events.txt"
TRUTH_FILE = "truth.json"
ROSTER_FILE = "roster.json"
AFFINITY_FILE = "affinity.json"


def write_dataset(env: Environment, out_dir: str | Path) -> Dict[str, Path]:
    out = Path(out_dir)
    paths = {
        "map": save_map(env.map, out / MAP_FILE),
        "events": save_captions(env.log, out / EVENTS_FILE),
        "truth": save_truth(env.truth, out / TRUTH_FILE),
        "roster": save_roster(env.roster, out / ROSTER_FILE),
    }
    if env.affinity:
        paths["affinity"] = write_json(env.affinity, out / AFFINITY_FILE)
    logger.info("Wrote dataset to %s", out)
    return paths


class _AffinityModel(RootModel[Dict[str, Dict[str, float]]]):
    pass


def load_affinity(path: str | Path, roster: Roster) -> Dict[str, Dict[str, float]]:
    table = validate_model(_AffinityModel, read_json(path), f"affinity table '{path}'").root
    try:
        _check_affinity(table, {u.role for u in roster})
    except ValueError as e:
        raise InputError(f"Invalid affinity table '{path}': {e}")
    return table


def load_dataset(data_dir: str | Path) -> Environment:
    base = Path(data_dir)
    roster = load_roster(base / ROSTER_FILE)
    store = load_map(base / MAP_FILE, roster)
    log = load_captions(base / EVENTS_FILE, roster, known_objects=store.ids)
    truth_path = base / TRUTH_FILE
    if truth_path.exists():
        truth = load_truth(truth_path, roster)
    else:
        truth = GroundTruth(
            {r.object_id: tuple(r.owners) for r in store if r.owners},
            {},
        )
    missing = sorted(set(truth.owners) - set(store.ids))
    if missing:
        raise InputError(f"Ground truth names objects missing from the map: {', '.join(missing[:5])}")
    affinity = load_affinity(base / AFFINITY_FILE, roster) if (base / AFFINITY_FILE).exists() else {}
    return Environment(store, log, truth, roster, affinity)
