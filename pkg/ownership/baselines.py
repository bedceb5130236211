# ownership/baselines.py

"""Usage-log heuristics that predict a single owner per object."""

from __future__ import annotations

from typing import Dict, Iterable, List, Optional, Tuple

from .base import InputError
from .usage_history import EventLog

# None marks an object without events (no prediction)
BaselinePrediction = Dict[str, Optional[Tuple[str, ...]]]

METHODS = ("last_user", "frequency")


def last_user_predict(log: EventLog, object_id: str) -> Optional[Tuple[str, ...]]:
    indices = log.indices_for(object_id)
    if not indices:
        return None
    # the log is stably sorted, so the last index is the latest event
    return (log[indices[-1]].user,)


def frequency_predict(log: EventLog, object_id: str) -> Optional[Tuple[str, ...]]:
    indices = log.indices_for(object_id)
    if not indices:
        return None
    counts: Dict[str, int] = {}
    last_seen: Dict[str, int] = {}
    for idx in indices:
        user = log[idx].user
        counts[user] = counts.get(user, 0) + 1
        last_seen[user] = idx
    best = min(counts, key=lambda u: (-counts[u], -last_seen[u], u))
    return (best,)


def predict_all(log: EventLog, object_ids: Iterable[str], method: str) -> BaselinePrediction:
    if method == "last_user":
        fn = last_user_predict
    elif method == "frequency":
        fn = frequency_predict
    else:
        raise InputError(f"Unknown baseline '{method}'")
    return {oid: fn(log, oid) for oid in sorted(object_ids)}


def as_owner_sets(predictions: BaselinePrediction) -> Dict[str, List[str]]:
    return {oid: list(owners) if owners else [] for oid, owners in predictions.items()}
