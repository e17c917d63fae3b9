"""Mesh-refinement studies on the n-point circle.

Each study fixes continuum data (configurations given by angles, inner
functions given by Fourier coefficients, times) and samples it on circles of
increasing resolution with the diffusive rate ``(n / 2 pi)^2``. The defect of
an asymptotic-tier statement is recorded per level. Chain-rule remainders pass
when the defects do not increase and the fitted order in the mesh size reaches
the declared floor. Inequality defects keep their sign: they pass when the
changes between levels shrink and the finest level satisfies the inequality,
so data that holds with room to spare at every level is not enough.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from core.base_space import FiniteBaseSpace, build_circle, check_log_harnack_base, continuum_rate
from core.config_space import Configuration, ConfigSpace, poisson_weights
from core.cylinder import CylinderFunction, affine, check_cylinder_gamma, check_cylinder_generator_formula, power, var
from core.errors import InvalidInputError
from core.lift import kernel_config_row
from core.models import ConvergenceStudy
from core.settings import StudyDefaults
from core.transport import check_entropy_cost, check_evi, dirac

logger = logging.getLogger(__name__)

DEFECT_FLOOR = 1e-16
CYLINDER_N_MAX = 2


class FourierFunction(BaseModel):
    """g(theta) = constant + sum_k cos[k-1] cos(k theta) + sin[k-1] sin(k theta)."""

    constant: float = 0.0
    cos: List[float] = Field(default_factory=list)
    sin: List[float] = Field(default_factory=list)

    def evaluate(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, self.constant)
        for k, a in enumerate(self.cos, start=1):
            out += a * np.cos(k * theta)
        for k, b in enumerate(self.sin, start=1):
            out += b * np.sin(k * theta)
        return out

    def on_circle(self, n: int) -> np.ndarray:
        return self.evaluate(2.0 * math.pi * np.arange(n) / n)


class ContinuumData(BaseModel):
    """Level-independent input of a refinement study."""

    angles: List[float] = Field(default_factory=lambda: [math.pi / 4, 3 * math.pi / 4])
    inner: List[FourierFunction] = Field(
        default_factory=lambda: [
            FourierFunction(cos=[0.6, 0.0], sin=[0.3, 0.2]),
            FourierFunction(constant=0.5, cos=[0.0, 0.4], sin=[-0.25]),
        ],
        min_length=2,
    )
    target_angle: float = 3 * math.pi / 4
    target_time: float = 0.25
    t: float = 0.5
    K: float = 0.0
    s: float = 1.0


def circle_level(n: int) -> FiniteBaseSpace:
    return build_circle(n, continuum_rate(n))


def grid_state(n: int, angle: float) -> int:
    """Nearest grid point to ``angle`` on the n-point circle."""
    return int(round(angle * n / (2.0 * math.pi))) % n


def fit_order(levels: Sequence[int], defects: Sequence[float]) -> float:
    """Least-squares slope of log defect against log mesh size 2 pi / n."""
    h = np.log(2.0 * math.pi / np.asarray(levels, dtype=float))
    d = np.log(np.maximum(np.asarray(defects, dtype=float), DEFECT_FLOOR))
    slope = float(np.polyfit(h, d, 1)[0])
    return slope if math.isfinite(slope) else 0.0


# ---------------------------------------------------------------------------
# Per-level defects
# ---------------------------------------------------------------------------


def cylinder_generator_defect(n: int, data: ContinuumData) -> float:
    cspace = ConfigSpace(circle_level(n), CYLINDER_N_MAX)
    u = CylinderFunction.of([data.inner[0].on_circle(n)], power(var(0), 3))
    return check_cylinder_generator_formula(cspace, u).max_defect


def cylinder_gamma_defect(n: int, data: ContinuumData) -> float:
    cspace = ConfigSpace(circle_level(n), CYLINDER_N_MAX)
    u = CylinderFunction.of([data.inner[0].on_circle(n)], power(var(0), 2))
    return check_cylinder_gamma(cspace, u).max_defect


def affine_defect(n: int, data: ContinuumData) -> float:
    cspace = ConfigSpace(circle_level(n), CYLINDER_N_MAX)
    u = CylinderFunction.of([g.on_circle(n) for g in data.inner[:2]], affine([1.5, -0.5], offset=0.25))
    return max(check_cylinder_generator_formula(cspace, u).max_defect, check_cylinder_gamma(cspace, u).max_defect)


def log_harnack_defect(n: int, data: ContinuumData) -> float:
    base = circle_level(n)
    f = np.exp(data.inner[0].on_circle(n))
    return check_log_harnack_base(base, data.K, [data.t], [f]).max_defect


def _one_particle_endpoints(n: int, data: ContinuumData):
    cspace = ConfigSpace(circle_level(n), 1)
    start = Configuration.from_particles(n, [grid_state(n, data.angles[0])])
    target = Configuration.from_particles(n, [grid_state(n, data.target_angle)])
    return cspace, dirac(cspace, start), kernel_config_row(cspace, target, data.target_time), poisson_weights(cspace, data.s)


def entropy_cost_defect(n: int, data: ContinuumData) -> float:
    cspace, mu, nu, ref = _one_particle_endpoints(n, data)
    return check_entropy_cost(cspace, mu, nu, ref, data.K, [data.t]).max_defect


def evi_defect(n: int, data: ContinuumData) -> float:
    cspace, mu, nu, ref = _one_particle_endpoints(n, data)
    return check_evi(cspace, mu, nu, ref, data.K, [data.t]).max_defect


@dataclass(frozen=True)
class StudySpec:
    defect: Callable[[int, ContinuumData], float]
    mode: str
    inequality: bool


STUDIES: Dict[str, StudySpec] = {
    "cylinder_generator": StudySpec(cylinder_generator_defect, "order", False),
    "cylinder_gamma": StudySpec(cylinder_gamma_defect, "order", False),
    "cylinder_affine": StudySpec(affine_defect, "exact", False),
    "log_harnack": StudySpec(log_harnack_defect, "settle", True),
    "entropy_cost": StudySpec(entropy_cost_defect, "settle", True),
    "evi": StudySpec(evi_defect, "settle", True),
}


def default_levels(study_id: str, defaults: Optional[StudyDefaults] = None) -> List[int]:
    defaults = defaults or StudyDefaults()
    spec = STUDIES.get(study_id)
    if spec is None:
        raise InvalidInputError(f"unknown study {study_id!r}; available: {', '.join(sorted(STUDIES))}")
    return list(defaults.inequality_levels if spec.inequality else defaults.levels)


def run_convergence_study(
    study_id: str,
    levels: Optional[Sequence[int]] = None,
    data: Optional[ContinuumData] = None,
    defaults: Optional[StudyDefaults] = None,
) -> ConvergenceStudy:
    """Defect per circle resolution, log-log fitted order and pass criterion.

    Inequality studies record the signed defect and fit the order of its
    level-to-level changes; ``details['excess']`` keeps the positive parts.
    """
    defaults = defaults or StudyDefaults()
    spec = STUDIES.get(study_id)
    if spec is None:
        raise InvalidInputError(f"unknown study {study_id!r}; available: {', '.join(sorted(STUDIES))}")
    levels = list(levels) if levels is not None else default_levels(study_id, defaults)
    if any(n < 3 for n in levels):
        raise InvalidInputError("circle levels must be at least 3")
    data = data or ContinuumData(t=defaults.t)
    defects: List[float] = []
    for n in levels:
        value = float(spec.defect(n, data))
        logger.info("study %s: n=%d defect=%.6g", study_id, n, value)
        defects.append(value)
    if spec.inequality:
        order = fit_order(levels[1:], np.abs(np.diff(defects)))
        extra = {"excess": [max(v, 0.0) for v in defects]}
    else:
        order = fit_order(levels, defects)
        extra = {}
    return ConvergenceStudy(
        study_id=study_id,
        parameter="circle n",
        levels=levels,
        defects=defects,
        fitted_order=order,
        mode=spec.mode,
        floor=defaults.order_floor if spec.mode == "order" else None,
        exact_tolerance=defaults.exact_tolerance,
        details={"t": data.t, "K": data.K, **extra},
    )


def run_all_studies(defaults: Optional[StudyDefaults] = None, data: Optional[ContinuumData] = None) -> List[ConvergenceStudy]:
    return [run_convergence_study(study_id, data=data, defaults=defaults) for study_id in sorted(STUDIES)]


def study_to_frame(study: ConvergenceStudy) -> pd.DataFrame:
    return pd.DataFrame({"level": study.levels, "defect": study.defects})
