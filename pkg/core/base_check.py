# core/base_check.py
"""Check interface and the shared per-fixture context handed to every check."""
from __future__ import annotations

import logging
import threading
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from core.base_space import BaseFunction, FiniteBaseSpace, best_be_constant, default_f_samples, exact_be_constant
from core.config_space import ConfigMeasure, ConfigSpace, config_count, mixed_poisson_weights, poisson_weights
from core.lift import ExpCylinder, random_config_functions
from core.models import BEResult, DefectReport, ExperimentConfig, RefusalCode, Tier
from core.settings import LabDefaults

Refusal = Tuple[RefusalCode, str]


class CheckContext:
    """Fixture, enumeration and lazily computed shared ingredients.

    Checks run concurrently. Each lazily built value has its own lock, so
    different ingredients build in parallel and each one is built once; every
    value depends only on the config and seed.
    """

    def __init__(self, config: ExperimentConfig, base: FiniteBaseSpace, cspace: ConfigSpace, lab: Optional[LabDefaults] = None) -> None:
        self.config = config
        self.base = base
        self.cspace = cspace
        self.lab = lab or LabDefaults()
        self.fixture = config.fixture.label
        self._lock = threading.Lock()
        self._key_locks: Dict[str, threading.Lock] = {}
        self._values: Dict[str, Any] = {}

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def t_grid(self) -> List[float]:
        return list(self.config.t_grid)

    def tolerance(self, check_id: str, default: float) -> float:
        if check_id in self.config.tolerances:
            return float(self.config.tolerances[check_id])
        return float(self.lab.tolerances.get(check_id, default))

    def shared(self, key: str, build: Callable[[], Any]) -> Any:
        if key in self._values:
            return self._values[key]
        with self._lock:
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        # builds may nest other keys; the dependency graph has no cycles
        with key_lock:
            if key not in self._values:
                self._values[key] = build()
            return self._values[key]

    def f_samples(self) -> List[BaseFunction]:
        """Indicators, seeded normals and, on irreducible bases, the extremal gradient-estimate function."""

        def build() -> List[BaseFunction]:
            samples = default_f_samples(self.base, self.config.sample_count, self.seed)
            if self.base.is_irreducible and "function" in self.exact_be().witness:
                samples.append(np.asarray(self.exact_be().witness["function"], dtype=float))
            return samples

        return self.shared("f_samples", build)

    def exact_be(self) -> BEResult:
        return self.shared("be_exact", lambda: exact_be_constant(self.base, self.config.c, self.t_grid))

    def be_result(self) -> BEResult:
        return self.shared("be", lambda: best_be_constant(self.base, self.config.c, self.t_grid, self.f_samples(), seed=self.seed))

    @property
    def K(self) -> float:
        """Gradient-estimate constant used by the transfer suites (valid for every base function)."""
        return self.exact_be().K_best

    def poisson(self) -> ConfigMeasure:
        return self.shared("poisson", lambda: poisson_weights(self.cspace, self.config.intensity))

    def mixture(self) -> ConfigMeasure:
        return self.shared("mixture", lambda: mixed_poisson_weights(self.cspace, self.config.mixture))

    def config_samples(self) -> List[np.ndarray]:
        return self.shared("u_samples", lambda: random_config_functions(self.cspace, self.config.sample_count, self.seed))

    def positive_samples(self) -> List[np.ndarray]:
        return self.shared("u_positive", lambda: random_config_functions(self.cspace, self.config.sample_count, self.seed + 1, positive=True))

    def exp_cylinders(self) -> List[ExpCylinder]:
        """Seeded f with entries in (-0.9, 1), plus the zero function."""

        def build() -> List[ExpCylinder]:
            rng = np.random.Generator(np.random.Philox(self.seed + 2))
            cylinders = [ExpCylinder.of(np.zeros(self.base.n))]
            cylinders.extend(ExpCylinder.of(rng.uniform(-0.9, 1.0, self.base.n)) for _ in range(min(self.config.sample_count, 8)))
            return cylinders

        return self.shared("exp_cylinders", build)

    def be_functions(self) -> List[np.ndarray]:
        """Random tables, star functions of the base samples and exponential cylinders."""

        def build() -> List[np.ndarray]:
            funcs = list(self.config_samples())
            funcs.extend(self.cspace.star(f) for f in self.f_samples())
            funcs.extend(e.values(self.cspace) for e in self.exp_cylinders())
            return funcs

        return self.shared("be_functions", build)

    def measure_space(self) -> Tuple[ConfigSpace, float]:
        """Enumeration and Poisson scaling for the measure battery.

        The scaling is capped at 2 / mX and the cap raised to ``measure_n_max``,
        lowered again while the enumeration exceeds ``measure_max_configs``.
        """

        def build() -> Tuple[ConfigSpace, float]:
            s = min(self.config.intensity, 2.0 / self.base.total_mass)
            n_max = max(self.cspace.n_max, self.lab.measure_n_max)
            while n_max > self.cspace.n_max and config_count(self.base.n, n_max) > self.lab.measure_max_configs:
                n_max -= 1
            if n_max == self.cspace.n_max:
                return self.cspace, s
            return ConfigSpace(self.base, n_max, self.lab.max_configs), s

        return self.shared("measure_space", build)


class BaseCheck(ABC):
    check_id: str = "base"
    tier: Tier = "exact"
    suite: str = "core"
    negative_control: bool = False
    needs_metric: bool = False
    needs_transport: bool = False

    def __init__(self) -> None:
        self.logger = logging.getLogger(f"checks.{self.check_id}")

    @abstractmethod
    def run(self, ctx: CheckContext) -> DefectReport:
        ...

    def refusal_reason(self, ctx: CheckContext) -> Optional[Refusal]:
        """(code, reason) when this check cannot run on the fixture, or None."""
        if self.needs_metric and ctx.base.metric is None:
            return "missing_metric", "fixture has no base metric"
        return None

    def matches(self, selector: str) -> bool:
        return selector in ("all", self.suite, self.tier, self.check_id) or (selector == "controls" and self.negative_control)
