import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from ownership.base import InputError, SimilarityParams, SpatialParams
from ownership.roster_map import (
    MapStore,
    Roster,
    UserProfile,
    gaussian_weight,
    load_map,
    load_roster,
    neighbor_context,
    records_from_list,
    save_map,
    save_roster,
    similar_context,
)
from ownership.utils import write_json


def _raw(object_id, feature, position=(0.0, 0.0, 0.0), **extra):
    item = {"object_id": object_id, "class": "cup", "position": list(position), "feature": list(feature)}
    item.update(extra)
    return item


def test_roster_needs_two_unique_users():
    with pytest.raises(InputError):
        Roster([UserProfile("Bob", "father", "office worker")])
    with pytest.raises(InputError, match="Duplicate"):
        Roster([UserProfile("Bob", "father", "x"), UserProfile("Bob", "son", "y")])


def test_roster_round_trip(tmp_path, roster):
    path = save_roster(roster, tmp_path / "roster.json")
    loaded = load_roster(path)
    assert loaded.names == ["Bob", "Mary", "Tom"]
    assert loaded.get("Tom").occupation == "elementary school student"


def test_empty_map_loads(tmp_path):
    write_json([], tmp_path / "map.json")
    assert len(load_map(tmp_path / "map.json")) == 0


def test_missing_scores_start_at_zero(roster):
    store = records_from_list([_raw("cup_1", [1.0, 0.0])], roster)
    assert store.get("cup_1").scores == {"Bob": 0.0, "Mary": 0.0, "Tom": 0.0}


def test_feature_not_unit_length_rejected():
    with pytest.raises(InputError, match="cup_1"):
        records_from_list([_raw("cup_1", [0.5, 0.0])])


def test_feature_close_to_unit_is_renormalized():
    store = records_from_list([_raw("cup_1", [1.0005, 0.0])])
    assert np.linalg.norm(store.get("cup_1").feature) == pytest.approx(1.0, abs=1e-12)


def test_duplicate_object_id_named():
    with pytest.raises(InputError, match="cup_1"):
        records_from_list([_raw("cup_1", [1.0, 0.0]), _raw("cup_1", [0.0, 1.0])])


def test_mismatched_feature_dimension_named():
    items = [_raw("cup_1", [1.0, 0.0]), _raw("cup_2", [0.0, 1.0, 0.0])]
    with pytest.raises(InputError, match="cup_2 has 3 dimensions, expected 2"):
        records_from_list(items)


def test_mismatched_feature_dimension_rejected_by_store(make_record):
    with pytest.raises(InputError, match="b has 2 dimensions"):
        MapStore([make_record("a"), make_record("b", feature=[1.0, 0.0])])


def test_score_outside_unit_interval_rejected(roster):
    with pytest.raises(InputError):
        records_from_list([_raw("cup_1", [1.0, 0.0], scores={"Bob": 1.5})], roster)


def test_generated_map_round_trip(tmp_path, default_env):
    path = save_map(default_env.map, tmp_path / "map.json")
    loaded = load_map(path, default_env.roster)
    assert len(loaded) == 34
    assert loaded.ids == default_env.map.ids


def test_gaussian_weight_at_one_meter():
    assert gaussian_weight(1.0, 0.5) == pytest.approx(math.exp(-2.0), abs=1e-12)


def test_neighbor_weights(make_record):
    store = MapStore(
        [
            make_record("a", position=(0.0, 0.0, 0.0)),
            make_record("b", position=(1.0, 0.0, 0.0)),
            make_record("c", position=(0.0, 0.0, 0.0)),
            make_record("far", position=(10.0, 0.0, 0.0)),
        ]
    )
    entries = neighbor_context(store, "a", SpatialParams(sigma=0.5))
    assert [e.object_id for e in entries] == ["c", "b"]
    assert entries[0].weight == 1.0
    assert entries[0].distance == 0.0
    assert entries[1].weight == pytest.approx(math.exp(-2.0), abs=1e-12)


def test_neighbor_k_zero_and_floor(make_record):
    store = MapStore([make_record("a"), make_record("b", position=(0.1, 0.0, 0.0))])
    assert neighbor_context(store, "a", SpatialParams(k_near=0)) == []
    lonely = MapStore([make_record("a"), make_record("b", position=(5.0, 0.0, 0.0))])
    assert neighbor_context(lonely, "a") == []


def test_unknown_target_rejected(make_record):
    store = MapStore([make_record("a"), make_record("b")])
    with pytest.raises(InputError):
        neighbor_context(store, "zzz")
    with pytest.raises(InputError):
        similar_context(store, "zzz")


def _neighbor_oracle(positions, target, p):
    tx, ty, tz = positions[target]
    ranked = []
    for oid, (x, y, z) in positions.items():
        if oid == target:
            continue
        d = math.sqrt((x - tx) * (x - tx) + (y - ty) * (y - ty) + (p.gamma * (z - tz)) * (p.gamma * (z - tz)))
        w = gaussian_weight(d, p.sigma)
        if w >= p.weight_floor:
            ranked.append((-w, d, oid))
    ranked.sort()
    return [(oid, -nw) for nw, d, oid in ranked[: p.k_near]]


coords = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(points=st.lists(st.tuples(coords, coords, coords), min_size=30, max_size=30))
def test_neighbors_match_brute_force(make_record, points):
    positions = {f"obj_{i:02d}": p for i, p in enumerate(points)}
    store = MapStore([make_record(oid, position=pos) for oid, pos in positions.items()])
    p = SpatialParams(sigma=0.8, k_near=5)
    for target in positions:
        got = [(e.object_id, e.weight) for e in neighbor_context(store, target, p)]
        assert got == _neighbor_oracle(positions, target, p)


@pytest.mark.parametrize("seed", range(50))
def test_similars_match_brute_force(make_record, seed):
    rng = np.random.default_rng(seed)
    feats = {f"obj_{i:02d}": rng.normal(size=8) for i in range(30)}
    store = MapStore([make_record(oid, feature=f) for oid, f in feats.items()])
    for target in ("obj_00", "obj_15", "obj_29"):
        t = store.get(target).feature
        expected = sorted(
            ((-float(np.dot(store.get(oid).feature, t)), oid) for oid in feats if oid != target)
        )[:5]
        got = similar_context(store, target, SimilarityParams(k_sim=5))
        assert [e.object_id for e in got] == [oid for _, oid in expected]
        assert [e.similarity for e in got] == pytest.approx([-s for s, _ in expected], abs=1e-12)


def test_context_independent_of_insertion_order(make_record):
    rng = np.random.default_rng(7)
    records = [
        make_record(f"obj_{i}", position=tuple(rng.uniform(-1, 1, size=3)), feature=rng.normal(size=8))
        for i in range(12)
    ]
    forward = MapStore(records)
    backward = MapStore(list(reversed(records)))
    for oid in ("obj_0", "obj_5"):
        assert neighbor_context(forward, oid) == neighbor_context(backward, oid)
        assert [e.object_id for e in similar_context(forward, oid)] == [
            e.object_id for e in similar_context(backward, oid)
        ]


def test_scaling_coordinates_and_sigma_keeps_weights(make_record):
    rng = np.random.default_rng(3)
    pts = [tuple(rng.uniform(-1, 1, size=3)) for _ in range(8)]
    base = MapStore([make_record(f"o{i}", position=p) for i, p in enumerate(pts)])
    scaled = MapStore([make_record(f"o{i}", position=tuple(3.0 * v for v in p)) for i, p in enumerate(pts)])
    a = neighbor_context(base, "o0", SpatialParams(sigma=0.5))
    b = neighbor_context(scaled, "o0", SpatialParams(sigma=1.5))
    assert [e.object_id for e in a] == [e.object_id for e in b]
    assert [e.weight for e in a] == pytest.approx([e.weight for e in b], rel=1e-9)
