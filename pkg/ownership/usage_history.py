# ownership/usage_history.py

"""
Time-stamped interaction captions and their per-user summaries.

Caption file: one line per event, "YYYY-MM-DD HH:MM <text>", where the text
starts with the user's name (e.g. "2025-01-19 19:00 Bob takes the marker").
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from pydantic import BaseModel

from .base import InputError
from .roster_map import Roster
from .utils import read_json, validate_model, write_json

logger = logging.getLogger(__name__)

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M"
ACTION_TYPES = ("use", "place", "transport", "clean", "search", "other")

# Phrase -> action type. Checked in order; the first phrase found wins.
ACTION_KEYWORDS: Tuple[Tuple[str, str], ...] = (
    ("puts back", "place"),
    ("places", "place"),
    ("looks for", "search"),
    ("carries", "transport"),
    ("brings", "transport"),
    ("cleans", "clean"),
    ("washes", "clean"),
    ("takes", "use"),
    ("uses", "use"),
    ("reads", "use"),
    ("is using", "use"),
    ("grabs", "use"),
)

_LINE_RE = re.compile(r"^(\d{4}-\d{2}-\d{2} \d{2}:\d{2})\s+(\S.*)$")
_SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class Event:
    timestamp: datetime
    user: str
    action_type: str
    object_id: str
    raw_text: str
    known_user: bool = True

    @property
    def caption(self) -> str:
        return f"{self.timestamp.strftime(TIMESTAMP_FORMAT)} {self.raw_text}"


class EventLog:
    """Chronologically ordered, immutable list of events indexed by object."""

    def __init__(self, events: Iterable[Event] = ()) -> None:
        # sorted() is stable, so same-minute events keep their input order
        self._events: Tuple[Event, ...] = tuple(sorted(events, key=lambda e: e.timestamp))
        self._by_object: Dict[str, List[int]] = {}
        for idx, ev in enumerate(self._events):
            self._by_object.setdefault(ev.object_id, []).append(idx)

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def __getitem__(self, idx: int) -> Event:
        return self._events[idx]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EventLog) and self._events == other._events

    @property
    def events(self) -> Tuple[Event, ...]:
        return self._events

    def indices_for(self, object_id: str) -> List[int]:
        return list(self._by_object.get(object_id, []))

    def for_object(self, object_id: str) -> List[Event]:
        return [self._events[i] for i in self._by_object.get(object_id, [])]

    def object_ids(self) -> List[str]:
        return sorted(self._by_object.keys())

    def earliest(self) -> Optional[datetime]:
        return self._events[0].timestamp if self._events else None

    def latest(self) -> Optional[datetime]:
        return self._events[-1].timestamp if self._events else None


# ----------------------------------------------------------------------
# Parsing
# ----------------------------------------------------------------------


def classify_action(text: str, keywords: Sequence[Tuple[str, str]] = ACTION_KEYWORDS) -> str:
    lowered = text.lower()
    for phrase, action in keywords:
        if re.search(r"\b" + re.escape(phrase) + r"\b", lowered):
            return action
    return "other"


def _resolve_object(text: str, known_objects: Optional[Sequence[str]]) -> str:
    if known_objects:
        best: Optional[Tuple[int, int, str]] = None
        for oid in known_objects:
            m = re.search(r"(?<![\w-])" + re.escape(oid) + r"(?![\w-])", text, flags=re.IGNORECASE)
            if m:
                # earliest match, longest id on ties
                key = (m.start(), -len(oid), oid)
                if best is None or key < best:
                    best = key
        if best is not None:
            return best[2]
    m = re.search(r"\bthe\s+([\w-]+)", text, flags=re.IGNORECASE)
    if m:
        return m.group(1)
    tokens = re.findall(r"[\w-]+", text)
    return tokens[-1] if tokens else ""


def parse_event_line(
    line: str,
    roster: Optional[Roster] = None,
    known_objects: Optional[Sequence[str]] = None,
    keywords: Sequence[Tuple[str, str]] = ACTION_KEYWORDS,
) -> Event:
    m = _LINE_RE.match(line.strip())
    if not m:
        raise InputError(f"Caption does not start with 'YYYY-MM-DD HH:MM': {line!r}")
    try:
        ts = datetime.strptime(m.group(1), TIMESTAMP_FORMAT)
    except ValueError as e:
        raise InputError(f"Unparseable timestamp {m.group(1)!r}: {e}")
    text = m.group(2).strip()
    user = re.sub(r"'s$", "", text.split()[0]).strip(",.:;")
    known_user = roster is None or user in roster
    return Event(
        timestamp=ts,
        user=user,
        action_type=classify_action(text, keywords),
        object_id=_resolve_object(text, known_objects),
        raw_text=text,
        known_user=known_user,
    )


def parse_events(
    caption_lines: Iterable[str],
    roster: Optional[Roster] = None,
    known_objects: Optional[Sequence[str]] = None,
    keywords: Sequence[Tuple[str, str]] = ACTION_KEYWORDS,
) -> EventLog:
    events: List[Event] = []
    unknown = 0
    for lineno, line in enumerate(caption_lines, start=1):
        if not line.strip():
            continue
        try:
            ev = parse_event_line(line, roster, known_objects, keywords)
        except InputError as e:
            raise InputError(f"line {lineno}: {e}")
        if not ev.known_user:
            unknown += 1
            logger.warning("line %d: user %r is not in the roster", lineno, ev.user)
        events.append(ev)
    if unknown:
        logger.warning("%d event(s) flagged with unknown users", unknown)
    return EventLog(events)


def load_captions(
    path: str | Path,
    roster: Optional[Roster] = None,
    known_objects: Optional[Sequence[str]] = None,
) -> EventLog:
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except FileNotFoundError:
        raise InputError(f"Event file '{path}' not found.")
    log = parse_events(lines, roster, known_objects)
    logger.info("Loaded %d events from %s", len(log), path)
    return log


def save_captions(log: EventLog, path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(ev.caption + "\n" for ev in log), encoding="utf-8")
    return out


class _EventModel(BaseModel):
    timestamp: str
    user: str
    action_type: str
    object_id: str
    raw_text: str
    known_user: bool = True


def save_events_json(log: EventLog, path: str | Path) -> Path:
    items = [
        {
            "timestamp": ev.timestamp.strftime(TIMESTAMP_FORMAT),
            "user": ev.user,
            "action_type": ev.action_type,
            "object_id": ev.object_id,
            "raw_text": ev.raw_text,
            "known_user": ev.known_user,
        }
        for ev in log
    ]
    return write_json(items, path)


def load_events_json(path: str | Path) -> EventLog:
    events = []
    for idx, raw in enumerate(read_json(path)):
        item = validate_model(_EventModel, raw, f"event #{idx}")
        if item.action_type not in ACTION_TYPES:
            raise InputError(f"event #{idx}: unknown action_type {item.action_type!r}")
        try:
            ts = datetime.strptime(item.timestamp, TIMESTAMP_FORMAT)
        except ValueError as e:
            raise InputError(f"event #{idx}: {e}")
        events.append(Event(ts, item.user, item.action_type, item.object_id, item.raw_text, item.known_user))
    return EventLog(events)


# ----------------------------------------------------------------------
# Summaries and sessions
# ----------------------------------------------------------------------


@dataclass
class UserUsage:
    user_id: str
    total_events: int
    actions: Dict[str, int]
    last_used_days_ago: float
    example_events: List[str] = field(default_factory=list)

    def to_dict(self, digits: Optional[int] = None) -> Dict[str, object]:
        days = round(self.last_used_days_ago, digits) if digits is not None else self.last_used_days_ago
        return {
            "user_id": self.user_id,
            "total_events": self.total_events,
            "actions": dict(self.actions),
            "last_used_days_ago": days,
            "example_events": list(self.example_events),
        }


@dataclass
class UsageSummary:
    object_id: str
    object_name: str
    user_summary: List[UserUsage] = field(default_factory=list)

    def get(self, user: str) -> Optional[UserUsage]:
        for item in self.user_summary:
            if item.user_id == user:
                return item
        return None

    @property
    def total_events(self) -> int:
        return sum(u.total_events for u in self.user_summary)

    def to_dict(self, digits: Optional[int] = None) -> Dict[str, object]:
        return {
            "object": {"id": self.object_id, "name": self.object_name},
            "user_summary": [u.to_dict(digits) for u in self.user_summary],
        }


def usage_summary(
    log: EventLog,
    object_id: str,
    window_days: float = 365.0,
    now: Optional[datetime] = None,
    object_name: Optional[str] = None,
) -> UsageSummary:
    """
    Aggregate the object's events inside [now - window, now] per user.
    `now` defaults to the latest event in the log.
    """
    if window_days <= 0:
        raise InputError(f"window_days must be > 0, got {window_days}")
    summary = UsageSummary(object_id=object_id, object_name=object_name or object_id)
    if now is None:
        now = log.latest()
        if now is None:
            return summary
    start = now - timedelta(days=window_days)

    per_user: Dict[str, List[Event]] = {}
    for ev in log.for_object(object_id):
        if start <= ev.timestamp <= now:
            per_user.setdefault(ev.user, []).append(ev)

    items: List[UserUsage] = []
    for user, events in per_user.items():
        # same-minute events are ordered by text so the result depends only on the multiset
        events = sorted(events, key=lambda e: (e.timestamp, e.raw_text))
        counts = {a: 0 for a in ACTION_TYPES}
        for ev in events:
            counts[ev.action_type] += 1
        latest = max(ev.timestamp for ev in events)
        items.append(
            UserUsage(
                user_id=user,
                total_events=len(events),
                actions={a: c for a, c in counts.items() if c},
                last_used_days_ago=(now - latest).total_seconds() / _SECONDS_PER_DAY,
                example_events=[ev.caption for ev in events[-2:]],
            )
        )
    items.sort(key=lambda u: (-u.total_events, u.user_id))
    summary.user_summary = items
    return summary


@dataclass(frozen=True)
class Session:
    object_id: str
    user: str
    start: datetime
    end: datetime
    event_indices: Tuple[int, ...]


def segment_sessions(log: EventLog, object_id: str, gap: timedelta = timedelta(minutes=30)) -> List[Session]:
    """Split the object's events wherever the user changes or the gap exceeds `gap`."""
    if gap <= timedelta(0):
        raise InputError(f"Session gap must be positive, got {gap}")
    sessions: List[Session] = []
    current: List[int] = []
    for idx in log.indices_for(object_id):
        ev = log[idx]
        if current:
            prev = log[current[-1]]
            if ev.user != prev.user or ev.timestamp - prev.timestamp > gap:
                sessions.append(_close_session(log, object_id, current))
                current = []
        current.append(idx)
    if current:
        sessions.append(_close_session(log, object_id, current))
    return sessions


def _close_session(log: EventLog, object_id: str, indices: List[int]) -> Session:
    return Session(
        object_id=object_id,
        user=log[indices[0]].user,
        start=log[indices[0]].timestamp,
        end=log[indices[-1]].timestamp,
        event_indices=tuple(indices),
    )
