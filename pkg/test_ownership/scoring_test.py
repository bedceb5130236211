import json
from datetime import datetime

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ownership.acquisition import init_state
from ownership.base import BackendError, HeuristicWeights, InputError, ShareParams
from ownership.llm_server import LlmCompleter, ReplayCompleter
from ownership.roster_map import ContextEntry, MapStore, Roster, UserProfile
from ownership.scoring import (
    NOT_AVAILABLE,
    RETRY_SUFFIX,
    AblationFlags,
    ContextBundle,
    KnownFact,
    ScorerBackend,
    build_bundles,
    build_inference_prompt,
    build_known,
    detect_shared,
    heuristic_score,
    parse_score_response,
    score_object,
    score_objects,
)
from ownership.usage_history import Event, EventLog, UsageSummary, UserUsage


def _bundle(roster, usage=None, neighbors=(), flags=AblationFlags(), class_label="marker"):
    return ContextBundle(
        object_id="marker",
        class_label=class_label,
        roster=roster,
        neighbors=tuple(neighbors),
        usage=usage or UsageSummary("marker", class_label),
        flags=flags,
    )


def _usage(*items):
    return UsageSummary("marker", "marker", [UserUsage(u, n, {"use": n}, days) for u, n, days in items])


# ---------------------------------------------------------------- ablations


def test_ablation_names_round_trip():
    flags = AblationFlags.from_names(["no-history", "no-similars"])
    assert not flags.use_history and not flags.use_similars
    assert flags.label == "no-history+no-similars"
    assert AblationFlags().label == "full"


def test_object_context_only_ablation():
    flags = AblationFlags.from_names(["object-context-only"])
    assert not flags.use_background and not flags.use_history and not flags.use_questioning
    assert flags.use_neighbors and flags.use_similars
    assert flags.label == "object-context-only"


def test_unknown_ablation_rejected():
    with pytest.raises(InputError, match="no-gravity"):
        AblationFlags.from_names(["no-gravity"])


# ---------------------------------------------------------------- shared ownership


@pytest.mark.parametrize(
    "scores, kind, owners",
    [
        ({"Bob": 0.92, "Mary": 0.90, "Tom": 0.10}, "shared", ("Bob", "Mary")),
        ({"Bob": 0.95, "Mary": 0.30, "Tom": 0.10}, "single", ("Bob",)),
        ({"Bob": 0.60, "Mary": 0.55, "Tom": 0.10}, "undetermined", ()),
        ({"Bob": 0.85, "Mary": 0.84, "Tom": 0.83}, "shared", ("Bob", "Mary", "Tom")),
        ({"Bob": 0.95, "Mary": 0.80, "Tom": 0.10}, "undetermined", ()),
    ],
)
def test_detect_shared_examples(scores, kind, owners):
    decision = detect_shared(scores)
    assert decision.kind == kind
    assert decision.owners == owners
    assert decision.k == len(owners)


def test_detect_shared_boundary_is_inclusive():
    decision = detect_shared({"Bob": 0.88, "Mary": 0.80, "Tom": 0.60})
    assert decision.kind == "shared"
    assert decision.owners == ("Bob", "Mary")


def test_detect_shared_with_custom_thresholds():
    decision = detect_shared({"Bob": 0.7, "Mary": 0.1}, ShareParams(eps_min=0.6))
    assert decision.owners == ("Bob",)


score_values = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@given(st.lists(score_values, min_size=3, max_size=3), st.permutations(["Bob", "Mary", "Tom"]))
def test_detect_shared_ignores_key_order(values, order):
    scores = dict(zip(["Bob", "Mary", "Tom"], values))
    shuffled = {name: scores[name] for name in order}
    assert detect_shared(shuffled) == detect_shared(scores)


# ---------------------------------------------------------------- heuristic scorer


def test_heuristic_without_information_is_uniform(roster):
    assert heuristic_score(_bundle(roster)) == pytest.approx({"Bob": 0.2, "Mary": 0.2, "Tom": 0.2})


def test_heuristic_sole_recent_user(roster):
    scores = heuristic_score(_bundle(roster, _usage(("Bob", 3, 0.0))))
    assert scores == pytest.approx({"Bob": 0.8, "Mary": 0.2, "Tom": 0.2})


def test_heuristic_frequency_only(roster):
    weights = HeuristicWeights(freq=1.0, recency=0.0, prior=0.0, context=0.0)
    scores = heuristic_score(_bundle(roster, _usage(("Bob", 3, 1.0), ("Mary", 1, 2.0))), weights)
    assert scores == pytest.approx({"Bob": 0.75, "Mary": 0.25, "Tom": 0.0})


def test_heuristic_renormalizes_under_ablation(roster):
    flags = AblationFlags(use_history=False)
    scores = heuristic_score(_bundle(roster, _usage(("Bob", 3, 0.0)), flags=flags))
    assert scores == pytest.approx({"Bob": 0.5, "Mary": 0.5, "Tom": 0.5})


def test_heuristic_uses_known_context(roster):
    neighbors = [ContextEntry("cup_1", "cup", 0.1, 0.98), ContextEntry("cup_2", "cup", 0.2, 0.92)]
    known = {"cup_1": KnownFact(("Tom",), "answered"), "cup_2": KnownFact(("Tom", "Mary"), "answered")}
    scores = heuristic_score(_bundle(roster, neighbors=neighbors), known=known)
    assert scores["Tom"] == pytest.approx(0.1 + 0.2)
    assert scores["Mary"] == pytest.approx(0.1 + 0.1)
    assert scores["Bob"] == pytest.approx(0.1)


def test_heuristic_affinity_prior(roster):
    affinity = {"son": {"marker": 1.0}}
    scores = heuristic_score(_bundle(roster), affinity=affinity)
    assert scores["Tom"] == pytest.approx(0.3)
    assert scores["Bob"] == pytest.approx(0.2)


# ---------------------------------------------------------------- known facts


def test_build_known(roster, make_record):
    store = MapStore(
        [
            make_record("a", scores={"Bob": 0.95, "Mary": 0.1, "Tom": 0.1}),
            make_record("b", scores={"Bob": 0.6, "Mary": 0.5, "Tom": 0.1}),
            make_record("c", scores={"Bob": 0.2, "Mary": 0.2, "Tom": 0.2}),
        ]
    )
    state = init_state(store, roster)
    assert build_known(state) == {"a": KnownFact(("Bob",), "high_confidence")}

    state.map.get("c").asked = True
    state.answers["c"] = ("Mary", "Tom")
    known = build_known(state)
    assert known["c"] == KnownFact(("Mary", "Tom"), "answered")
    assert "b" not in known


def test_build_known_threshold_range(roster, make_record):
    state = init_state(MapStore([make_record("a")]), roster)
    with pytest.raises(InputError):
        build_known(state, confidence_threshold=0.5)


# ---------------------------------------------------------------- prompt


def test_prompt_lists_every_user(roster):
    prompt = build_inference_prompt(_bundle(roster, _usage(("Bob", 2, 0.5))))
    line = next(l for l in prompt.splitlines() if '"ownership_distribution"' in l)
    assert all(f'"{name}": <0..1>' in line for name in roster.names)
    assert "- Tom: role=son, occupation=elementary school student" in prompt
    assert '"user_id": "Bob"' in prompt


def test_prompt_marks_disabled_sources(roster):
    prompt = build_inference_prompt(_bundle(roster, flags=AblationFlags(use_history=False, use_similars=False)))
    assert f"### Usage History (last 365 days)\n{NOT_AVAILABLE}" in prompt
    assert f"### Similar Objects (may include known_ownership for asked==1 or high-confidence)\n{NOT_AVAILABLE}" in prompt


def test_prompt_embeds_known_ownership(roster):
    neighbors = [ContextEntry("cup_1", "cup", 0.1, 0.98)]
    known = {"cup_1": KnownFact(("Tom",), "answered")}
    prompt = build_inference_prompt(_bundle(roster, neighbors=neighbors), known)
    start = prompt.index("### Nearby Objects")
    body = prompt[prompt.index("\n", start) + 1 : prompt.index("### Usage History")]
    assert json.loads(body) == [
        {"object_id": "cup_1", "class": "cup", "distance": 0.1, "weight": 0.98, "known_ownership": ["Tom"]}
    ]


# ---------------------------------------------------------------- response parsing


def test_parse_plain_and_fenced(roster):
    payload = '{"ownership_distribution": {"Bob": 0.9, "Mary": 0.1, "Tom": 0.0}}'
    expected = {"Bob": 0.9, "Mary": 0.1, "Tom": 0.0}
    assert parse_score_response(payload, roster) == expected
    assert parse_score_response(f"Sure!\n```json\n{payload}\n```", roster) == expected


def test_parse_clamps_out_of_range(roster):
    scores = parse_score_response('{"ownership_distribution": {"Bob": 1.3, "Mary": -0.2, "Tom": 1}}', roster)
    assert scores == {"Bob": 1.0, "Mary": 0.0, "Tom": 1.0}


@pytest.mark.parametrize(
    "text",
    [
        '{"ownership_distribution": {"Bob": 0.9, "Mary": 0.1}}',
        '{"ownership_distribution": {"Bob": true, "Mary": 0.1, "Tom": 0.1}}',
        '{"ownership_distribution": {"Bob": "high", "Mary": 0.1, "Tom": 0.1}}',
        '{"scores": {"Bob": 0.9}}',
        "I cannot tell.",
    ],
)
def test_parse_rejects_malformed(roster, text):
    with pytest.raises(BackendError):
        parse_score_response(text, roster)


@given(st.lists(score_values, min_size=3, max_size=3))
def test_parse_reads_back_written_scores(values):
    roster = Roster([UserProfile(n, "r", "o") for n in ("Bob", "Mary", "Tom")])
    scores = dict(zip(roster.names, values))
    assert parse_score_response(json.dumps({"ownership_distribution": scores}), roster) == scores


# ---------------------------------------------------------------- backends


class _ListCompleter:
    def __init__(self, replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, prompt, kind=""):
        self.prompts.append(prompt)
        return self.replies.pop(0)


def test_llm_backend_retries_then_succeeds(roster):
    completer = _ListCompleter(["nope", '{"ownership_distribution": {"Bob": 0.7, "Mary": 0.2, "Tom": 0.1}}'])
    result = score_object(ScorerBackend("llm", completer), _bundle(roster))
    assert not result.fallback
    assert result.scores == {"Bob": 0.7, "Mary": 0.2, "Tom": 0.1}
    assert completer.prompts[1] == completer.prompts[0] + RETRY_SUFFIX


def test_llm_backend_falls_back_to_heuristic(roster):
    completer = _ListCompleter(["nope", "still nope"])
    bundle = _bundle(roster, _usage(("Bob", 3, 0.0)))
    result = score_object(ScorerBackend("llm", completer), bundle)
    assert result.fallback
    assert result.scores == heuristic_score(bundle)
    assert result.raw == "still nope"


def test_non_heuristic_backend_needs_completer():
    with pytest.raises(InputError):
        ScorerBackend("llm")
    with pytest.raises(InputError):
        ScorerBackend("oracle")


def test_score_objects_is_keyed_by_id_and_worker_independent(default_env):
    bundles = build_bundles(default_env.map, default_env.log, default_env.roster)
    ordered = list(reversed(list(bundles.values())))
    serial = score_objects(ScorerBackend(), ordered)
    parallel = score_objects(ScorerBackend(), ordered, workers=4)
    assert list(serial) == sorted(bundles)
    assert serial == parallel


def test_bundles_use_latest_event_as_now(roster, make_record):
    log = EventLog(
        [
            Event(datetime(2025, 1, 13, 8, 0), "Bob", "use", "a", "Bob takes the a"),
            Event(datetime(2025, 1, 16, 8, 0), "Mary", "use", "b", "Mary takes the b"),
        ]
    )
    store = MapStore([make_record("a"), make_record("b", position=(3.0, 0.0, 0.0))])
    bundles = build_bundles(store, log, roster)
    assert bundles["a"].usage.get("Bob").last_used_days_ago == pytest.approx(3.0)


def test_recorded_scores_replay_identically(tmp_path, roster, stub_chat):
    reply = '{"ownership_distribution": {"Bob": 0.81, "Mary": 0.12, "Tom": 0.05}}'
    client = stub_chat(lambda messages: reply)
    transcript = tmp_path / "transcript.sqlite"
    live = ScorerBackend("llm", LlmCompleter(client=client, transcript_path=transcript))
    bundle = _bundle(roster, _usage(("Bob", 2, 0.3)))
    recorded = score_object(live, bundle)

    replayed = score_object(ScorerBackend("replay", ReplayCompleter(transcript)), bundle)
    assert replayed == recorded
    assert len(client.calls) == 1
    assert client.calls[0]["temperature"] == 0.2


def test_replay_misses_unrecorded_prompt(tmp_path, roster, stub_chat):
    transcript = tmp_path / "transcript.sqlite"
    LlmCompleter(client=stub_chat(lambda m: "x"), transcript_path=transcript).complete("hello")
    completer = ReplayCompleter(transcript)
    assert completer.complete("hello") == "x"
    with pytest.raises(BackendError):
        completer.complete("something else")
