# ownership/interaction.py

"""
Asking about one object: question generation, answer sources, answer
interpretation into per-user booleans, and applying the answer to the state.
"""

from __future__ import annotations

import json
import logging
import re
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Deque, Dict, Iterable, Mapping, Optional, Protocol, Sequence, Tuple

from .base import BackendError, InputError, RespondentError, ShareParams
from .llm_server import Completer, load_prompt_from_file
from .roster_map import ObjectRecord, Roster
from .scoring import RETRY_SUFFIX, detect_shared
from .utils import extract_json_field

if TYPE_CHECKING:
    from .acquisition import AcquisitionState

logger = logging.getLogger(__name__)

_BOUNDARY_RE = re.compile(r"[?.!](?=\s|$)")
# a period after these does not end the sentence
_ABBREVIATIONS = frozenset({"dr", "mr", "mrs", "ms", "mx", "st", "jr", "sr", "prof", "mt", "vs", "e.g", "i.e"})


@dataclass(frozen=True)
class Question:
    object_id: str
    text: str
    focus_candidates: Tuple[str, ...] = ()
    truncated: bool = False

    def to_dict(self) -> Dict[str, object]:
        return {
            "object_id": self.object_id,
            "text": self.text,
            "focus_candidates": list(self.focus_candidates),
            "truncated": self.truncated,
        }


@dataclass(frozen=True)
class AnswerVector:
    values: Dict[str, bool]
    fallback: bool = False

    @property
    def owners(self) -> Tuple[str, ...]:
        return tuple(u for u, b in self.values.items() if b)

    def to_dict(self) -> Dict[str, bool]:
        return dict(self.values)


# ----------------------------------------------------------------------
# Question generation
# ----------------------------------------------------------------------


def first_sentence(text: str) -> Tuple[str, bool]:
    """First sentence of a reply with surrounding quotes removed, and whether anything was cut."""
    cleaned = text.strip().strip('"').strip("'").strip()
    for m in _BOUNDARY_RE.finditer(cleaned):
        if m.start() == 0:
            continue
        if cleaned[m.start()] == "." and _ends_with_abbreviation(cleaned[: m.start()]):
            continue
        return cleaned[: m.end()].strip(), bool(cleaned[m.end() :].strip())
    return cleaned, False


def _ends_with_abbreviation(head: str) -> bool:
    words = head.split()
    if not words:
        return False
    word = words[-1].lstrip("(\"'")
    return word.lower() in _ABBREVIATIONS or (len(word) == 1 and word.isupper() and word != "I")


def template_question(rec: ObjectRecord) -> Question:
    ranked = sorted(rec.scores.items(), key=lambda kv: (-kv[1], kv[0]))
    focus = tuple(name for name, _ in ranked[:2])
    if len(focus) >= 2:
        text = f"Is this {rec.class_label} (object {rec.object_id}) owned by {focus[0]}, {focus[1]}, or someone else?"
    elif focus:
        text = f"Is this {rec.class_label} (object {rec.object_id}) owned by {focus[0]} or someone else?"
    else:
        text = f"Who owns this {rec.class_label} (object {rec.object_id})?"
    return Question(object_id=rec.object_id, text=text, focus_candidates=focus)


def generate_question(rec: ObjectRecord, roster: Roster, completer: Optional[Completer] = None) -> Question:
    template = template_question(rec)
    if completer is None:
        return template

    prompt = load_prompt_from_file("question_generation").format(
        object_id=rec.object_id,
        object_class=rec.class_label,
        position="({:.2f}, {:.2f}, {:.2f})".format(*rec.position),
        owners=", ".join(roster.names),
        p_final=json.dumps({u: round(s, 3) for u, s in rec.scores.items()}),
    )
    try:
        raw = completer.complete(prompt, kind="question_generation")
    except BackendError as e:
        logger.warning("Question generation for %s failed, using the template: %s", rec.object_id, e)
        return template
    text, truncated = first_sentence(raw)
    if not text:
        logger.warning("Empty question for %s, using the template", rec.object_id)
        return template
    if truncated:
        logger.warning("Question for %s had several sentences; kept the first", rec.object_id)
    return Question(rec.object_id, text, template.focus_candidates, truncated)


# ----------------------------------------------------------------------
# Respondents
# ----------------------------------------------------------------------


def canonical_answer(owners: Iterable[str], roster: Roster) -> str:
    owner_set = set(owners)
    names = [n for n in roster.names if n in owner_set]
    if not names:
        return "It belongs to someone else."
    if len(names) == 1:
        return f"It belongs to {names[0]}."
    return f"It belongs to {', '.join(names[:-1])} and {names[-1]}."


class Respondent(Protocol):
    kind: str

    def respond(self, question: Question) -> str: ...


class OracleRespondent:
    """Answers from ground-truth owner sets with a canonical sentence."""

    kind = "oracle"

    def __init__(self, truth: Mapping[str, Sequence[str]], roster: Roster) -> None:
        self.truth = truth
        self.roster = roster

    def respond(self, question: Question) -> str:
        owners = self.truth.get(question.object_id)
        if owners is None:
            raise RespondentError(f"Oracle has no ground truth for {question.object_id}")
        return canonical_answer(owners, self.roster)


class ScriptedRespondent:
    kind = "scripted"

    def __init__(self, answers: Iterable[str]) -> None:
        self._queue: Deque[str] = deque(answers)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedRespondent":
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except FileNotFoundError:
            raise InputError(f"Answer script '{path}' not found.")
        return cls(line for line in lines if line.strip())

    @property
    def remaining(self) -> int:
        return len(self._queue)

    def respond(self, question: Question) -> str:
        if not self._queue:
            raise RespondentError(f"Answer script exhausted at question about {question.object_id}")
        return self._queue.popleft()


class ConsoleRespondent:
    kind = "console"

    def __init__(
        self,
        input_fn: Callable[[str], str] = input,
        output_fn: Callable[[str], None] = print,
    ) -> None:
        self.input_fn = input_fn
        self.output_fn = output_fn

    def respond(self, question: Question) -> str:
        self.output_fn(f"\nRobot: {question.text}")
        try:
            return self.input_fn("You: ").strip()
        except (EOFError, KeyboardInterrupt):
            raise RespondentError("Console input closed")


def respond(r: Respondent, q: Question) -> str:
    return r.respond(q)


# ----------------------------------------------------------------------
# Interpretation
# ----------------------------------------------------------------------


def rule_based_answer(answer: str, roster: Roster) -> AnswerVector:
    # curly apostrophes count as possessives too
    lowered = answer.lower().replace("’", "'")
    values = {}
    for name in roster.names:
        pattern = r"(?<![\w])" + re.escape(name.lower()) + r"(?:'s)?(?![\w])"
        values[name] = re.search(pattern, lowered) is not None
    return AnswerVector(values)


def parse_answer_response(text: str, roster: Roster) -> AnswerVector:
    payload = extract_json_field(text, "ownership_boolean")
    if not isinstance(payload, dict):
        raise BackendError("ownership_boolean is not an object", raw=text)
    values = {}
    for name in roster.names:
        if name not in payload:
            raise BackendError(f"ownership_boolean misses user {name}", raw=text)
        value = payload[name]
        if not isinstance(value, bool):
            raise BackendError(f"Non-boolean value for {name}: {value!r}", raw=text)
        values[name] = value
    return AnswerVector(values)


def interpret_answer(
    q: Question,
    answer: str,
    roster: Roster,
    completer: Optional[Completer] = None,
    retries: int = 1,
) -> AnswerVector:
    if completer is None:
        return rule_based_answer(answer, roster)

    candidate_lines = ",\n".join(f'    "{name}": true/false' for name in roster.names)
    prompt = load_prompt_from_file("answer_interpretation").format(
        question=q.text,
        user_answer=answer,
        owners=", ".join(roster.names),
        candidate_lines=candidate_lines,
    )
    for attempt in range(retries + 1):
        try:
            raw = completer.complete(prompt if attempt == 0 else prompt + RETRY_SUFFIX, kind="answer_interpretation")
            return parse_answer_response(raw, roster)
        except BackendError as e:
            logger.warning("Interpreting the answer about %s failed (attempt %d): %s", q.object_id, attempt + 1, e)
    logger.warning("Falling back to name matching for the answer about %s", q.object_id)
    vector = rule_based_answer(answer, roster)
    return AnswerVector(vector.values, fallback=True)


def apply_answer(
    state: "AcquisitionState",
    object_id: str,
    v: AnswerVector,
    share_params: ShareParams = ShareParams(),
) -> "AcquisitionState":
    """
    Turn an answer into deterministic scores (1 for owners, 0 otherwise).
    An all-false answer leaves the scores alone and flags the object for a revisit.
    """
    rec = state.map.get(object_id)
    if rec.asked:
        raise InputError(f"Object {object_id} was already asked")
    owners = tuple(u for u in rec.scores if v.values.get(u, False))
    rec.asked = True
    state.answers[object_id] = owners
    if owners:
        rec.scores = {u: 1.0 if u in owners else 0.0 for u in rec.scores}
        rec.share = detect_shared(rec.scores, share_params)
    else:
        state.needs_revisit.add(object_id)
        logger.info("Answer about %s named none of the candidates; flagged for revisit", object_id)
    return state
