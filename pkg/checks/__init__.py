import importlib
import inspect
import logging
import pkgutil
from typing import Dict, List, Optional, Sequence

from core.base_check import BaseCheck

logger = logging.getLogger(__name__)


class CheckRegistry:
    def __init__(self):
        self._checks: Dict[str, BaseCheck] = {}

    def register(self, check: BaseCheck) -> None:
        self._checks[check.check_id] = check

    def get(self, check_id: str) -> Optional[BaseCheck]:
        return self._checks.get(check_id)

    def get_all(self) -> List[BaseCheck]:
        return sorted(self._checks.values(), key=lambda c: c.check_id)

    def get_by_tier(self, tier: str) -> List[BaseCheck]:
        return [c for c in self.get_all() if c.tier == tier]

    def select(self, selectors: Sequence[str]) -> List[BaseCheck]:
        """Checks matching any selector (suite name, tier, check id, ``controls`` or ``all``)."""
        chosen = [c for c in self.get_all() if any(c.matches(s) for s in selectors)]
        unknown = [s for s in selectors if not any(c.matches(s) for c in self._checks.values())]
        if unknown:
            raise ValueError(f"unknown suite or check: {', '.join(sorted(unknown))}")
        return chosen

    def discover(self, package_name: str = "checks") -> "CheckRegistry":
        package = importlib.import_module(package_name)
        for importer, modname, ispkg in pkgutil.walk_packages(package.__path__, prefix=package.__name__ + "."):
            if ispkg:
                continue
            module = importlib.import_module(modname)
            for attr_name in dir(module):
                attr = getattr(module, attr_name)
                if not (isinstance(attr, type) and issubclass(attr, BaseCheck)):
                    continue
                if attr.__module__ == modname and not inspect.isabstract(attr):
                    self.register(attr())
        logger.debug("discovered %d checks", len(self._checks))
        return self

    def __len__(self) -> int:
        return len(self._checks)
