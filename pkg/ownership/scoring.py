# ownership/scoring.py

"""
Multi-label ownership scoring for one object at a time.

Two backends produce OwnershipScores from a ContextBundle:
  - heuristic: a deterministic weighted sum of usage frequency, recency,
    role/class prior and known-facts context (offline, reproducible).
  - llm / replay: the ownership inference prompt sent to a chat completer
    (live or replayed from a transcript), reply parsed from JSON.

Scores are independent per user and are NOT normalized.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import TYPE_CHECKING, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .base import BackendError, HeuristicWeights, InputError, ShareParams, SimilarityParams, SpatialParams
from .llm_server import Completer, load_prompt_from_file
from .roster_map import ContextEntry, MapStore, OwnershipScores, Roster, neighbor_context, similar_context
from .usage_history import EventLog, UsageSummary, usage_summary
from .utils import extract_json_field

if TYPE_CHECKING:
    from .acquisition import AcquisitionState

logger = logging.getLogger(__name__)

NOT_AVAILABLE = "not available"
DEFAULT_PRIOR = 0.5
SHARE_TOLERANCE = 1e-9
SCORER_KINDS = ("heuristic", "llm", "replay")
RETRY_SUFFIX = "\n\nYour previous reply could not be parsed. Return ONLY the JSON object described above."

# role -> {class_label -> prior}; pairs not listed use DEFAULT_PRIOR
AffinityTable = Mapping[str, Mapping[str, float]]

ABLATION_NAMES = (
    "no-questioning",
    "no-background",
    "no-history",
    "no-neighbors",
    "no-similars",
    "object-context-only",
)


@dataclass(frozen=True)
class AblationFlags:
    use_background: bool = True
    use_history: bool = True
    use_neighbors: bool = True
    use_similars: bool = True
    use_questioning: bool = True

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "AblationFlags":
        flags = {
            "use_background": True,
            "use_history": True,
            "use_neighbors": True,
            "use_similars": True,
            "use_questioning": True,
        }
        for raw in names:
            name = raw.strip()
            if not name:
                continue
            if name == "no-questioning":
                flags["use_questioning"] = False
            elif name == "no-background":
                flags["use_background"] = False
            elif name == "no-history":
                flags["use_history"] = False
            elif name == "no-neighbors":
                flags["use_neighbors"] = False
            elif name == "no-similars":
                flags["use_similars"] = False
            elif name == "object-context-only":
                # approximates an object-centric scorer without user information
                flags["use_background"] = False
                flags["use_history"] = False
                flags["use_questioning"] = False
            else:
                raise InputError(f"Unknown ablation '{name}'. Expected one of: {', '.join(ABLATION_NAMES)}")
        return cls(**flags)

    def names(self) -> List[str]:
        if self == AblationFlags(use_background=False, use_history=False, use_questioning=False):
            return ["object-context-only"]
        out = []
        if not self.use_questioning:
            out.append("no-questioning")
        if not self.use_background:
            out.append("no-background")
        if not self.use_history:
            out.append("no-history")
        if not self.use_neighbors:
            out.append("no-neighbors")
        if not self.use_similars:
            out.append("no-similars")
        return out

    @property
    def label(self) -> str:
        return "+".join(self.names()) or "full"


# ----------------------------------------------------------------------
# Shared ownership and known facts
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ShareDecision:
    kind: str  # single | shared | undetermined
    owners: Tuple[str, ...] = ()
    k: int = 0

    def to_dict(self) -> Dict[str, object]:
        return {"kind": self.kind, "owners": list(self.owners), "k": self.k}

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "ShareDecision":
        owners = tuple(data.get("owners") or ())  # type: ignore[arg-type]
        return cls(kind=str(data["kind"]), owners=owners, k=int(data.get("k", len(owners))))  # type: ignore[arg-type]


UNDETERMINED = ShareDecision("undetermined")


def detect_shared(scores: OwnershipScores, p: ShareParams = ShareParams()) -> ShareDecision:
    """
    Pick the largest k whose k-th best score clears eps_min, stays within
    eps_in of the best, and is separated from the (k+1)-th by eps_out.
    The score below the last user counts as 0.
    """
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    if not ranked:
        return UNDETERMINED
    values = [v for _, v in ranked] + [0.0]
    top = values[0]
    best = 0
    for k in range(1, len(ranked) + 1):
        s_k = values[k - 1]
        if (
            s_k >= p.eps_min - SHARE_TOLERANCE
            and top - s_k <= p.eps_in + SHARE_TOLERANCE
            and s_k - values[k] >= p.eps_out - SHARE_TOLERANCE
        ):
            best = k
    if best == 0:
        return UNDETERMINED
    owners = tuple(name for name, _ in ranked[:best])
    return ShareDecision("shared" if best >= 2 else "single", owners, best)


@dataclass(frozen=True)
class KnownFact:
    owners: Tuple[str, ...]
    provenance: str  # answered | high_confidence


KnownFacts = Dict[str, KnownFact]


def build_known(
    state: "AcquisitionState",
    confidence_threshold: float = 0.9,
    share_params: ShareParams = ShareParams(),
) -> KnownFacts:
    """
    Answered objects contribute their answered owners. Unasked objects
    contribute their share decision owners when every owner scores at least
    `confidence_threshold`.
    """
    if not 0.5 < confidence_threshold <= 1.0:
        raise InputError(f"confidence_threshold must be in (0.5, 1], got {confidence_threshold}")
    known: KnownFacts = {}
    for rec in state.map:
        if rec.asked:
            owners = state.answers.get(rec.object_id, ())
            if owners:
                known[rec.object_id] = KnownFact(tuple(owners), "answered")
            continue
        share = rec.share if rec.share is not None else detect_shared(rec.scores, share_params)
        if share.kind == "undetermined":
            continue
        if min(rec.scores[u] for u in share.owners) >= confidence_threshold:
            known[rec.object_id] = KnownFact(share.owners, "high_confidence")
    return known


# ----------------------------------------------------------------------
# Context bundle
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ContextBundle:
    object_id: str
    class_label: str
    roster: Roster
    neighbors: Tuple[ContextEntry, ...] = ()
    similars: Tuple[ContextEntry, ...] = ()
    usage: UsageSummary = field(default_factory=lambda: UsageSummary("", ""))
    flags: AblationFlags = AblationFlags()

    def context_entries(self) -> List[ContextEntry]:
        entries: List[ContextEntry] = []
        if self.flags.use_neighbors:
            entries.extend(self.neighbors)
        if self.flags.use_similars:
            entries.extend(self.similars)
        return entries


def build_bundle(
    store: MapStore,
    log: EventLog,
    roster: Roster,
    object_id: str,
    spatial: SpatialParams = SpatialParams(),
    similarity: SimilarityParams = SimilarityParams(),
    flags: AblationFlags = AblationFlags(),
    window_days: float = 365.0,
    now: Optional[datetime] = None,
) -> ContextBundle:
    rec = store.get(object_id)
    neighbors = neighbor_context(store, object_id, spatial) if flags.use_neighbors else []
    similars = similar_context(store, object_id, similarity) if flags.use_similars else []
    if flags.use_history:
        usage = usage_summary(log, object_id, window_days=window_days, now=now, object_name=rec.class_label)
    else:
        usage = UsageSummary(object_id=object_id, object_name=rec.class_label)
    return ContextBundle(
        object_id=object_id,
        class_label=rec.class_label,
        roster=roster,
        neighbors=tuple(neighbors),
        similars=tuple(similars),
        usage=usage,
        flags=flags,
    )


def build_bundles(
    store: MapStore,
    log: EventLog,
    roster: Roster,
    spatial: SpatialParams = SpatialParams(),
    similarity: SimilarityParams = SimilarityParams(),
    flags: AblationFlags = AblationFlags(),
    window_days: float = 365.0,
) -> Dict[str, ContextBundle]:
    now = log.latest()
    return {
        oid: build_bundle(store, log, roster, oid, spatial, similarity, flags, window_days, now)
        for oid in sorted(store.ids)
    }


# ----------------------------------------------------------------------
# Heuristic backend
# ----------------------------------------------------------------------


def _effective_weights(weights: HeuristicWeights, flags: AblationFlags) -> Tuple[float, float, float, float]:
    w = [weights.freq, weights.recency, weights.prior, weights.context]
    if not flags.use_history:
        w[0] = w[1] = 0.0
    if not flags.use_background:
        w[2] = 0.0
    if not (flags.use_neighbors or flags.use_similars):
        w[3] = 0.0
    total = weights.freq + weights.recency + weights.prior + weights.context
    remaining = sum(w)
    if remaining <= 0:
        return (0.0, 0.0, 0.0, 0.0)
    if remaining != total:
        scale = total / remaining
        w = [x * scale for x in w]
    return (w[0], w[1], w[2], w[3])


def heuristic_score(
    bundle: ContextBundle,
    weights: HeuristicWeights = HeuristicWeights(),
    known: Optional[KnownFacts] = None,
    affinity: Optional[AffinityTable] = None,
) -> OwnershipScores:
    w_f, w_r, w_p, w_c = _effective_weights(weights, bundle.flags)
    total_events = bundle.usage.total_events

    facts = [known[e.object_id] for e in bundle.context_entries() if known and e.object_id in known]

    scores: OwnershipScores = {}
    for user in bundle.roster:
        usage = bundle.usage.get(user.name)
        freq = usage.total_events / total_events if usage and total_events else 0.0
        rec = math.exp(-usage.last_used_days_ago / weights.tau) if usage else 0.0
        prior = DEFAULT_PRIOR
        if affinity is not None:
            prior = float(affinity.get(user.role, {}).get(bundle.class_label, DEFAULT_PRIOR))
        if facts:
            ctx = sum(1 for f in facts if user.name in f.owners) / len(facts)
        else:
            ctx = 0.5
        value = w_f * freq + w_r * rec + w_p * prior + w_c * ctx
        scores[user.name] = min(1.0, max(0.0, value))
    return scores


# ----------------------------------------------------------------------
# LLM backend
# ----------------------------------------------------------------------


def _context_json(entries: Sequence[ContextEntry], known: Optional[KnownFacts]) -> str:
    items = []
    for entry in entries:
        fact = known.get(entry.object_id) if known else None
        items.append(entry.with_known(fact.owners if fact else None).to_prompt_dict())
    return json.dumps(items, indent=2)


def build_inference_prompt(
    bundle: ContextBundle,
    known: Optional[KnownFacts] = None,
    window_days: float = 365.0,
) -> str:
    template = load_prompt_from_file("ownership_inference")
    flags = bundle.flags

    if flags.use_background:
        lines = [f"- {u.name}: role={u.role}, occupation={u.occupation}" for u in bundle.roster]
        member_background = "### Member Background\n" + "\n".join(lines)
    else:
        member_background = f"### Member Background\n{NOT_AVAILABLE}"

    similar_objects = _context_json(bundle.similars, known) if flags.use_similars else NOT_AVAILABLE
    nearby_objects = _context_json(bundle.neighbors, known) if flags.use_neighbors else NOT_AVAILABLE
    usage_history = json.dumps(bundle.usage.to_dict(digits=2), indent=2) if flags.use_history else NOT_AVAILABLE
    output_format = ", ".join(f'"{name}": <0..1>' for name in bundle.roster.names)

    return template.format(
        member_background=member_background,
        object_id=bundle.object_id,
        object_class=bundle.class_label,
        similar_objects=similar_objects,
        nearby_objects=nearby_objects,
        window_days=f"{window_days:g}",
        usage_history=usage_history,
        output_format=output_format,
    )


def parse_score_response(text: str, roster: Roster) -> OwnershipScores:
    dist = extract_json_field(text, "ownership_distribution")
    if not isinstance(dist, dict):
        raise BackendError("ownership_distribution is not an object", raw=text)
    scores: OwnershipScores = {}
    for name in roster.names:
        if name not in dist:
            raise BackendError(f"ownership_distribution misses user {name}", raw=text)
        value = dist[name]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise BackendError(f"Non-numeric score for {name}: {value!r}", raw=text)
        scores[name] = min(1.0, max(0.0, float(value)))
    return scores


@dataclass
class ScorerBackend:
    kind: str = "heuristic"
    completer: Optional[Completer] = None
    weights: HeuristicWeights = HeuristicWeights()
    affinity: Optional[AffinityTable] = None
    window_days: float = 365.0
    retries: int = 1

    def __post_init__(self) -> None:
        if self.kind not in SCORER_KINDS:
            raise InputError(f"Unknown scorer '{self.kind}'. Expected one of: {', '.join(SCORER_KINDS)}")
        if self.kind != "heuristic" and self.completer is None:
            raise InputError(f"The {self.kind} scorer needs a completer")

    @property
    def deterministic(self) -> bool:
        return self.kind in ("heuristic", "replay")


@dataclass(frozen=True)
class ScoredObject:
    object_id: str
    scores: OwnershipScores
    fallback: bool = False
    raw: str = ""


def score_object(
    backend: ScorerBackend,
    bundle: ContextBundle,
    known: Optional[KnownFacts] = None,
) -> ScoredObject:
    if backend.kind == "heuristic":
        return ScoredObject(bundle.object_id, heuristic_score(bundle, backend.weights, known, backend.affinity))

    prompt = build_inference_prompt(bundle, known, backend.window_days)
    raw = ""
    for attempt in range(backend.retries + 1):
        attempt_prompt = prompt if attempt == 0 else prompt + RETRY_SUFFIX
        try:
            raw = backend.completer.complete(attempt_prompt, kind="ownership_inference")  # type: ignore[union-attr]
            scores = parse_score_response(raw, bundle.roster)
            logger.debug("Scored %s via %s: %s", bundle.object_id, backend.kind, scores)
            return ScoredObject(bundle.object_id, scores, False, raw)
        except BackendError as e:
            raw = e.raw or raw
            logger.warning("Scoring %s failed (attempt %d): %s", bundle.object_id, attempt + 1, e)

    logger.warning("Falling back to the heuristic scorer for %s", bundle.object_id)
    scores = heuristic_score(bundle, backend.weights, known, backend.affinity)
    return ScoredObject(bundle.object_id, scores, True, raw)


def score_objects(
    backend: ScorerBackend,
    bundles: Sequence[ContextBundle],
    known: Optional[KnownFacts] = None,
    workers: int = 1,
) -> Dict[str, ScoredObject]:
    """Score several objects, concurrently when workers > 1; results keyed in ascending object_id order."""
    if workers > 1 and len(bundles) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda b: score_object(backend, b, known), bundles))
    else:
        results = [score_object(backend, b, known) for b in bundles]
    return {r.object_id: r for r in sorted(results, key=lambda r: r.object_id)}
