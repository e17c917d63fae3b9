"""Shipped base-space fixtures: the two-state chain, the discrete circle and
user-supplied JSON documents."""
from __future__ import annotations

from pathlib import Path

from pydantic import ValidationError

from core.base_space import FiniteBaseSpace, build_circle, build_two_state
from core.errors import InvalidInputError
from core.models import FixtureSpec
from data.base_provider import BaseFixtureProvider


class TwoStateProvider(BaseFixtureProvider):
    """States {a, b}, unit weights, flip rate ``rate``, d(a, b) = 1."""

    name = "two_state"

    def build(self, spec: FixtureSpec) -> FiniteBaseSpace:
        return build_two_state(spec.rate)


class CircleProvider(BaseFixtureProvider):
    """Nearest-neighbour walk on ``n`` points of the unit circle with arc-length metric."""

    name = "circle"

    def build(self, spec: FixtureSpec) -> FiniteBaseSpace:
        return build_circle(int(spec.n), spec.rate)


class CustomFileProvider(BaseFixtureProvider):
    """Base space read from a JSON document ``{"states", "m", "Q", "d"}``."""

    name = "custom"

    def build(self, spec: FixtureSpec) -> FiniteBaseSpace:
        path = Path(str(spec.path))
        if not path.is_file():
            raise InvalidInputError(f"fixture file not found: {path}")
        try:
            return FiniteBaseSpace.load(path)
        except ValidationError as exc:
            raise InvalidInputError(f"invalid base space in {path}: {exc.errors()[0]['msg']}") from exc
