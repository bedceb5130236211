from __future__ import annotations

from types import SimpleNamespace
from typing import Callable, Dict, Optional, Sequence

import numpy as np
import pytest

from ownership.conformal import CalibrationModel, calibrate_environment, fit_calibration
from ownership.datagen import Environment, ScenarioSpec, generate_environment, load_spec
from ownership.roster_map import ObjectRecord, Roster, UserProfile
from ownership.scoring import ScorerBackend


def _unit(vec: Sequence[float]) -> np.ndarray:
    arr = np.asarray(vec, dtype=float)
    return arr / np.linalg.norm(arr)


def _make_record(
    object_id: str,
    class_label: str = "cup",
    position=(0.0, 0.0, 0.0),
    feature: Optional[Sequence[float]] = None,
    scores: Optional[Dict[str, float]] = None,
) -> ObjectRecord:
    if feature is None:
        feature = [1.0] + [0.0] * 7
    return ObjectRecord(
        object_id=object_id,
        class_label=class_label,
        position=tuple(float(v) for v in position),
        feature=_unit(feature),
        scores=dict(scores or {}),
    )


@pytest.fixture
def roster() -> Roster:
    return Roster(
        [
            UserProfile("Bob", "father", "office worker"),
            UserProfile("Mary", "mother", "homemaker"),
            UserProfile("Tom", "son", "elementary school student"),
        ]
    )


@pytest.fixture
def make_record() -> Callable[..., ObjectRecord]:
    return _make_record


@pytest.fixture(scope="session")
def default_spec() -> ScenarioSpec:
    return load_spec()


@pytest.fixture(scope="session")
def default_env(default_spec: ScenarioSpec) -> Environment:
    return generate_environment(default_spec, seed=0)


@pytest.fixture(scope="session")
def heuristic_calibration(default_spec: ScenarioSpec) -> CalibrationModel:
    samples = calibrate_environment(default_spec, seed=0, n_envs=5, backend=ScorerBackend())
    return fit_calibration(samples)


@pytest.fixture(scope="session")
def scenario_calibration(default_spec: ScenarioSpec) -> CalibrationModel:
    backend = ScorerBackend(affinity=default_spec.affinity)
    return fit_calibration(calibrate_environment(default_spec, seed=0, n_envs=5, backend=backend))


class StubChat:
    """Stands in for openai.OpenAI: `.chat.completions.create(...)` answers from `reply(messages)`."""

    def __init__(self, reply: Callable[[list], str]) -> None:
        self.calls = []
        self.reply = reply
        self.chat = SimpleNamespace(completions=SimpleNamespace(create=self._create))

    def _create(self, **kwargs):
        self.calls.append(kwargs)
        content = self.reply(kwargs["messages"])
        return SimpleNamespace(choices=[SimpleNamespace(message=SimpleNamespace(content=content))])


@pytest.fixture
def stub_chat() -> Callable[[Callable[[list], str]], StubChat]:
    return StubChat
