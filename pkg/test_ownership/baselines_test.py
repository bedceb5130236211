from datetime import datetime, timedelta

import pytest

from ownership.base import InputError
from ownership.baselines import as_owner_sets, frequency_predict, last_user_predict, predict_all
from ownership.evaluation import compute_metrics
from ownership.usage_history import Event, EventLog

T0 = datetime(2025, 1, 13, 8, 0)


def _log(*users, object_id="cup_1"):
    return EventLog(
        Event(T0 + timedelta(minutes=i), u, "use", object_id, f"{u} takes the {object_id}")
        for i, u in enumerate(users)
    )


def test_last_user():
    assert last_user_predict(_log("Bob", "Mary", "Tom"), "cup_1") == ("Tom",)


def test_frequency_majority():
    assert frequency_predict(_log("Bob", "Mary", "Bob"), "cup_1") == ("Bob",)


def test_frequency_tie_goes_to_latest_user():
    assert frequency_predict(_log("Bob", "Mary", "Mary", "Bob"), "cup_1") == ("Bob",)
    assert frequency_predict(_log("Mary", "Bob", "Bob", "Mary"), "cup_1") == ("Mary",)


def test_same_minute_events_keep_log_order():
    same = EventLog(
        [
            Event(T0, "Bob", "use", "cup_1", "Bob takes the cup_1"),
            Event(T0, "Tom", "use", "cup_1", "Tom takes the cup_1"),
        ]
    )
    assert last_user_predict(same, "cup_1") == ("Tom",)


def test_object_without_events_has_no_prediction():
    predictions = predict_all(_log("Bob"), ["cup_1", "piano"], "frequency")
    assert predictions == {"cup_1": ("Bob",), "piano": None}
    assert as_owner_sets(predictions) == {"cup_1": ["Bob"], "piano": []}


def test_unknown_method():
    with pytest.raises(InputError):
        predict_all(_log("Bob"), ["cup_1"], "coin_flip")


@pytest.mark.parametrize("method", ["last_user", "frequency"])
def test_baselines_on_generated_household(default_env, method):
    predictions = as_owner_sets(predict_all(default_env.log, default_env.map.ids, method))
    report = compute_metrics(predictions, default_env.truth.owners, default_env.truth.categories)
    assert report.categories["single_user"].subset_accuracy == 1.0
    assert report.categories["multi_user_sharing"].subset_accuracy == 0.0
    assert all(len(p) == 1 for p in predictions.values())
