# tests/test_fixtures.py
import json

import numpy as np
import pytest

from core.base_space import build_circle
from core.errors import InvalidInputError, LabError
from core.models import FixtureSpec
from data import FixtureRegistry, default_registry
from data.base_provider import BaseFixtureProvider
from data.fixtures import CircleProvider
from data.io_utils import atomic_write_text, read_json


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


class _CountingProvider(CircleProvider):
    name = "counting"

    def __init__(self) -> None:
        super().__init__()
        self.built = 0

    def build(self, spec: FixtureSpec):
        self.built += 1
        return super().build(spec)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


def test_default_registry_providers():
    registry = default_registry()
    assert sorted(registry.list_providers()) == ["circle", "custom", "two_state"]
    assert len(registry) == 3


def test_build_two_state():
    base = default_registry().build(FixtureSpec.parse("two_state:rate=2"))
    assert base.generator[0, 1] == 2.0


def test_build_circle():
    base = default_registry().build(FixtureSpec.parse("circle:n=6"))
    assert base.n == 6
    assert np.allclose(base.generator, build_circle(6).generator)


def test_unknown_provider():
    with pytest.raises(InvalidInputError):
        FixtureRegistry().build(FixtureSpec.parse("two_state"))


def test_fetch_is_cached_per_label():
    provider = _CountingProvider()
    spec = FixtureSpec(kind="circle", n=5)
    first = provider.fetch(spec)
    second = provider.fetch(spec)
    assert first is second
    assert provider.built == 1
    provider.fetch(FixtureSpec(kind="circle", n=7))
    assert provider.built == 2


def test_provider_must_implement_build():
    with pytest.raises(TypeError):
        BaseFixtureProvider()


# ---------------------------------------------------------------------------
# Custom files
# ---------------------------------------------------------------------------


def test_custom_file(tmp_path):
    path = tmp_path / "three.json"
    path.write_text(
        json.dumps(
            {
                "states": ["x", "y", "z"],
                "m": [1.0, 2.0, 1.0],
                "Q": [[-2.0, 2.0, 0.0], [1.0, -2.0, 1.0], [0.0, 2.0, -2.0]],
                "d": [[0, 1, 2], [1, 0, 1], [2, 1, 0]],
            }
        )
    )
    base = default_registry().build(FixtureSpec(kind="custom", path=str(path)))
    assert base.states == ["x", "y", "z"]
    assert base.total_mass == pytest.approx(4.0)
    assert base.is_irreducible


def test_custom_file_missing(tmp_path):
    with pytest.raises(InvalidInputError):
        default_registry().build(FixtureSpec(kind="custom", path=str(tmp_path / "nope.json")))


def test_custom_file_invalid(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"states": ["a", "b"], "m": [1, 1], "Q": [[-1, 2], [1, -1]]}))
    with pytest.raises(InvalidInputError, match="invalid base space"):
        default_registry().build(FixtureSpec(kind="custom", path=str(path)))


# ---------------------------------------------------------------------------
# File helpers
# ---------------------------------------------------------------------------


def test_atomic_write_and_read(tmp_path):
    path = atomic_write_text(tmp_path / "out.json", '{"a": 1}')
    assert read_json(path) == {"a": 1}
    assert [p.name for p in tmp_path.iterdir()] == ["out.json"]


def test_atomic_write_missing_directory(tmp_path):
    with pytest.raises(LabError):
        atomic_write_text(tmp_path / "missing" / "out.json", "{}")


def test_read_json_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InvalidInputError):
        read_json(bad)
    with pytest.raises(InvalidInputError):
        read_json(tmp_path / "absent.json")
