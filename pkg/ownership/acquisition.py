# ownership/acquisition.py

"""
Active ownership acquisition.

Each pass re-scores every unasked object with the known facts gathered so
far, computes prediction sets and uncertainty for all objects, then either
stops (every object confident, or the question budget is spent) or asks
about the most uncertain unasked object and applies the answer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple

from .base import AcquisitionAborted, InputError, RespondentError, ShareParams, SimilarityParams, SpatialParams
from .conformal import CalibrationModel, PredictionSet, prediction_set
from .evaluation import compute_metrics, predicted_set_from_state
from .interaction import Respondent, ScriptedRespondent, generate_question, interpret_answer, apply_answer
from .llm_server import Completer
from .roster_map import MapStore, Roster
from .scoring import AblationFlags, ScorerBackend, build_bundles, build_known, detect_shared, score_objects
from .usage_history import EventLog

logger = logging.getLogger(__name__)

CP_TOLERANCE = 1e-12
STOP_REASONS = ("confident", "budget", "exhausted")


@dataclass
class AcquisitionState:
    map: MapStore
    answers: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    needs_revisit: Set[str] = field(default_factory=set)
    q_cnt: int = 0
    q_max: int = 0

    def unasked(self) -> List[str]:
        return sorted(rec.object_id for rec in self.map if not rec.asked)

    def predictions(self) -> Dict[str, List[str]]:
        return {
            rec.object_id: sorted(predicted_set_from_state(rec, self.answers.get(rec.object_id)))
            for rec in self.map
        }


def init_state(store: MapStore, roster: Roster, q_max: Optional[int] = None) -> AcquisitionState:
    """Fresh state over a private copy of the map; q_max defaults to the object count."""
    if q_max is None:
        q_max = len(store)
    if q_max < 0:
        raise InputError(f"q_max must be >= 0, got {q_max}")
    records = []
    for rec in store:
        scores = {name: float(rec.scores.get(name, 0.0)) for name in roster.names}
        records.append(replace(rec, scores=scores, share=None, asked=False))
    return AcquisitionState(map=MapStore(records), q_max=q_max)


@dataclass(frozen=True)
class AcquisitionParams:
    spatial: SpatialParams = SpatialParams()
    similarity: SimilarityParams = SimilarityParams()
    share: ShareParams = ShareParams()
    flags: AblationFlags = AblationFlags()
    window_days: float = 365.0
    confidence_threshold: float = 0.9
    workers: int = 1


# ----------------------------------------------------------------------
# Trace
# ----------------------------------------------------------------------


@dataclass
class PassRecord:
    index: int
    q_cnt: int
    refreshed: Dict[str, Dict[str, float]] = field(default_factory=dict)
    fallbacks: List[str] = field(default_factory=list)
    prediction_sets: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    predicted: Dict[str, List[str]] = field(default_factory=dict)
    stop: Optional[str] = None
    selected: Optional[str] = None
    question: Optional[Dict[str, Any]] = None
    answer: Optional[str] = None
    applied: Optional[Dict[str, bool]] = None
    interpret_fallback: bool = False
    metrics: Optional[Dict[str, float]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "q_cnt": self.q_cnt,
            "refreshed": self.refreshed,
            "fallbacks": list(self.fallbacks),
            "prediction_sets": self.prediction_sets,
            "predicted": self.predicted,
            "stop": self.stop,
            "selected": self.selected,
            "question": self.question,
            "answer": self.answer,
            "applied": self.applied,
            "interpret_fallback": self.interpret_fallback,
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PassRecord":
        return cls(
            index=int(data["index"]),
            q_cnt=int(data["q_cnt"]),
            refreshed={k: dict(v) for k, v in (data.get("refreshed") or {}).items()},
            fallbacks=list(data.get("fallbacks") or []),
            prediction_sets={k: dict(v) for k, v in (data.get("prediction_sets") or {}).items()},
            predicted={k: list(v) for k, v in (data.get("predicted") or {}).items()},
            stop=data.get("stop"),
            selected=data.get("selected"),
            question=data.get("question"),
            answer=data.get("answer"),
            applied=data.get("applied"),
            interpret_fallback=bool(data.get("interpret_fallback", False)),
            metrics=data.get("metrics"),
        )


@dataclass
class RunTrace:
    q_max: int
    scorer: str = "heuristic"
    ablation: str = "full"
    calibration: Dict[str, Any] = field(default_factory=dict)
    steps: List[PassRecord] = field(default_factory=list)
    q_cnt: int = 0
    stop_reason: Optional[str] = None
    final_predictions: Dict[str, List[str]] = field(default_factory=dict)
    final_scores: Dict[str, Dict[str, float]] = field(default_factory=dict)
    needs_revisit: List[str] = field(default_factory=list)
    aborted: bool = False
    error: str = ""

    @property
    def questions(self) -> List[PassRecord]:
        return [s for s in self.steps if s.selected is not None and s.answer is not None]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q_max": self.q_max,
            "scorer": self.scorer,
            "ablation": self.ablation,
            "calibration": self.calibration,
            "steps": [s.to_dict() for s in self.steps],
            "q_cnt": self.q_cnt,
            "stop_reason": self.stop_reason,
            "final_predictions": self.final_predictions,
            "final_scores": self.final_scores,
            "needs_revisit": list(self.needs_revisit),
            "aborted": self.aborted,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunTrace":
        try:
            return cls(
                q_max=int(data["q_max"]),
                scorer=str(data.get("scorer", "heuristic")),
                ablation=str(data.get("ablation", "full")),
                calibration=dict(data.get("calibration") or {}),
                steps=[PassRecord.from_dict(s) for s in data.get("steps") or []],
                q_cnt=int(data.get("q_cnt", 0)),
                stop_reason=data.get("stop_reason"),
                final_predictions={k: list(v) for k, v in (data.get("final_predictions") or {}).items()},
                final_scores={k: dict(v) for k, v in (data.get("final_scores") or {}).items()},
                needs_revisit=list(data.get("needs_revisit") or []),
                aborted=bool(data.get("aborted", False)),
                error=str(data.get("error", "")),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed run trace: {e}")


def trace_respondent(trace: RunTrace) -> ScriptedRespondent:
    """Scripted respondent that replays the answers recorded in a trace, in order."""
    return ScriptedRespondent(s.answer for s in trace.steps if s.answer is not None)


def compare_traces(expected: RunTrace, actual: RunTrace) -> List[str]:
    """Human-readable differences between two traces; empty when they match."""
    diffs: List[str] = []
    if len(expected.steps) != len(actual.steps):
        diffs.append(f"pass count {len(expected.steps)} != {len(actual.steps)}")
    for a, b in zip(expected.steps, actual.steps):
        for name in ("selected", "answer", "applied", "stop", "predicted", "prediction_sets", "refreshed"):
            if getattr(a, name) != getattr(b, name):
                diffs.append(f"pass {a.index}: {name} differs")
    if expected.final_predictions != actual.final_predictions:
        diffs.append("final predictions differ")
    if expected.q_cnt != actual.q_cnt:
        diffs.append(f"question count {expected.q_cnt} != {actual.q_cnt}")
    return diffs


# ----------------------------------------------------------------------
# Loop
# ----------------------------------------------------------------------


def select_query_target(state: AcquisitionState, sets: Mapping[str, PredictionSet]) -> str:
    candidates = [
        (-sets[oid].cp_score, -len(sets[oid].members), oid)
        for oid in state.unasked()
    ]
    if not candidates:
        raise InputError("Every object has already been asked")
    return min(candidates)[2]


def _set_snapshot(sets: Mapping[str, PredictionSet]) -> Dict[str, Dict[str, Any]]:
    return {
        oid: {"members": list(ps.members), "cp": ps.cp_score}
        for oid, ps in sorted(sets.items())
    }


def run_acquisition(
    store: MapStore,
    log: EventLog,
    roster: Roster,
    scorer: ScorerBackend,
    respondent: Respondent,
    cal: CalibrationModel,
    q_max: Optional[int] = None,
    truth: Optional[Mapping[str, Sequence[str]]] = None,
    params: AcquisitionParams = AcquisitionParams(),
    question_completer: Optional[Completer] = None,
    answer_completer: Optional[Completer] = None,
) -> RunTrace:
    if not params.flags.use_questioning:
        q_max = 0
    state = init_state(store, roster, q_max)
    bundles = build_bundles(
        state.map, log, roster, params.spatial, params.similarity, params.flags, params.window_days
    )
    trace = RunTrace(
        q_max=state.q_max,
        scorer=scorer.kind,
        ablation=params.flags.label,
        calibration=cal.to_dict(),
    )

    index = 0
    while True:
        known = build_known(state, params.confidence_threshold, params.share)
        unasked = [bundles[oid] for oid in state.unasked()]
        scored = score_objects(scorer, unasked, known, params.workers)
        for oid, result in scored.items():
            rec = state.map.get(oid)
            rec.scores = dict(result.scores)
            rec.share = detect_shared(rec.scores, params.share)

        sets = {rec.object_id: prediction_set(rec.scores, cal.q_alpha) for rec in state.map}
        step = PassRecord(
            index=index,
            q_cnt=state.q_cnt,
            refreshed={oid: dict(r.scores) for oid, r in scored.items()},
            fallbacks=[oid for oid, r in scored.items() if r.fallback],
            prediction_sets=_set_snapshot(sets),
            predicted=state.predictions(),
        )
        if truth is not None:
            step.metrics = compute_metrics(step.predicted, truth).headline()

        confident = all(
            ps.cp_score <= cal.q_cp + CP_TOLERANCE or oid in state.needs_revisit
            for oid, ps in sets.items()
        )
        stop: Optional[str] = None
        target = ""
        if confident:
            stop = "confident"
        elif state.q_cnt >= state.q_max:
            stop = "budget"
        else:
            try:
                target = select_query_target(state, sets)
            except InputError:
                stop = "exhausted"

        if stop is not None:
            step.stop = stop
            trace.steps.append(step)
            trace.stop_reason = stop
            logger.info("Pass %d: stopping (%s) after %d question(s)", index, stop, state.q_cnt)
            break

        question = generate_question(state.map.get(target), roster, question_completer)
        step.selected = target
        step.question = question.to_dict()
        try:
            answer = respondent.respond(question)
        except RespondentError as e:
            trace.steps.append(step)
            _finish(trace, state)
            trace.aborted = True
            trace.error = str(e)
            logger.error("Run aborted at pass %d: %s", index, e)
            raise AcquisitionAborted(f"Respondent failed: {e}", trace=trace)

        vector = interpret_answer(question, answer, roster, answer_completer)
        apply_answer(state, target, vector, params.share)
        state.q_cnt += 1
        step.answer = answer
        step.applied = vector.to_dict()
        step.interpret_fallback = vector.fallback
        trace.steps.append(step)
        logger.info(
            "Pass %d: asked about %s (cp=%.3f) -> %s",
            index, target, sets[target].cp_score, list(vector.owners) or "none",
        )
        index += 1

    _finish(trace, state)
    return trace


def _finish(trace: RunTrace, state: AcquisitionState) -> None:
    trace.q_cnt = state.q_cnt
    trace.final_predictions = state.predictions()
    trace.final_scores = {rec.object_id: dict(rec.scores) for rec in sorted(state.map, key=lambda r: r.object_id)}
    trace.needs_revisit = sorted(state.needs_revisit)
