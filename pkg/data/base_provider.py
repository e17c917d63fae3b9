"""Abstract base class for all fixture providers."""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

from core.base_space import FiniteBaseSpace
from core.models import FixtureSpec


class BaseFixtureProvider(ABC):
    """Base class every fixture provider must inherit from.

    Provides:
    * A logger namespaced to ``data.<name>``.
    * An in-memory cache of built base spaces keyed by fixture label.
    """

    name: str = "base"

    def __init__(self) -> None:
        self.logger = logging.getLogger(f"data.{self.name}")
        self._cache: Dict[str, Any] = {}

    @abstractmethod
    def build(self, spec: FixtureSpec) -> FiniteBaseSpace:
        """Construct the base space described by *spec*."""
        ...

    def fetch(self, spec: FixtureSpec) -> FiniteBaseSpace:
        """Cached entry point: one base space per fixture label."""
        cached = self.get_cached(spec.label)
        if cached is not None:
            return cached
        space = self.build(spec)
        self.logger.info("Built fixture %s (%d states)", spec.label, space.n)
        self.set_cached(spec.label, space)
        return space

    def get_cached(self, key: str) -> Optional[Any]:
        return self._cache.get(key)

    def set_cached(self, key: str, value: Any) -> None:
        self._cache[key] = value
