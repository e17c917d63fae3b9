"""Data layer -- fixture providers, a registry, and file I/O helpers."""
from __future__ import annotations

from typing import Dict, List, Optional

from core.base_space import FiniteBaseSpace
from core.errors import InvalidInputError
from core.models import FixtureSpec
from data.base_provider import BaseFixtureProvider


class FixtureRegistry:
    """Central registry mapping fixture kinds to provider instances."""

    def __init__(self) -> None:
        self._providers: Dict[str, BaseFixtureProvider] = {}

    def register(self, provider: BaseFixtureProvider) -> None:
        """Register a fixture provider under its name."""
        self._providers[provider.name] = provider

    def get(self, name: str) -> Optional[BaseFixtureProvider]:
        """Get a provider by name. Returns None if not found."""
        return self._providers.get(name)

    def list_providers(self) -> List[str]:
        return list(self._providers.keys())

    def build(self, spec: FixtureSpec) -> FiniteBaseSpace:
        provider = self.get(spec.kind)
        if provider is None:
            raise InvalidInputError(f"no provider for fixture kind {spec.kind!r}")
        return provider.fetch(spec)

    def __len__(self) -> int:
        return len(self._providers)


def default_registry() -> FixtureRegistry:
    from data.fixtures import CircleProvider, CustomFileProvider, TwoStateProvider

    registry = FixtureRegistry()
    for provider in (TwoStateProvider(), CircleProvider(), CustomFileProvider()):
        registry.register(provider)
    return registry


__all__ = ["BaseFixtureProvider", "FixtureRegistry", "default_registry"]
