from __future__ import annotations

import math
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

Tier = Literal["exact", "asymptotic"]
RefusalCode = Literal["precondition", "missing_metric", "desk_scale", "reducible_base", "infinite_distance"]


class DefectReport(BaseModel):
    """Outcome of one check on one fixture.

    Exact-tier entries pass when ``max_defect <= tolerance + tail_bound``.
    Negative controls invert the criterion: they pass when the violation is at
    least ``margin``. Asymptotic-tier entries only carry a defect value.

    ``refused`` marks a documented precondition the fixture does not meet
    (``refusal_code`` says which); ``error`` marks a check that raised, which
    counts as a failure on the exact tier.
    """

    model_config = ConfigDict(populate_by_name=True)

    check_id: str
    tier: Tier
    max_defect: float
    tolerance: float = 0.0
    tail_bound: float = 0.0
    witness: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    fixture: str = ""
    negative_control: bool = False
    margin: float = 0.0
    refused: Optional[str] = None
    refusal_code: Optional[RefusalCode] = None
    error: Optional[str] = None
    details: Dict[str, Any] = Field(default_factory=dict)

    @computed_field(alias="pass")
    @property
    def passed(self) -> Optional[bool]:
        if self.error is not None:
            return False if self.tier == "exact" else None
        if self.refused is not None or self.tier != "exact":
            return None
        if self.negative_control:
            return bool(self.max_defect >= self.margin)
        return bool(self.max_defect <= self.tolerance + self.tail_bound)

    @computed_field
    @property
    def status(self) -> str:
        if self.error is not None:
            return "error"
        if self.refused is not None:
            return "refused"
        if self.passed is None:
            return "defect-only"
        return "pass" if self.passed else "fail"

    @classmethod
    def refusal(
        cls,
        check_id: str,
        tier: Tier,
        reason: str,
        code: RefusalCode = "precondition",
        fixture: str = "",
        seed: Optional[int] = None,
    ) -> "DefectReport":
        return cls(check_id=check_id, tier=tier, max_defect=math.nan, refused=reason, refusal_code=code, fixture=fixture, seed=seed)

    @classmethod
    def crashed(cls, check_id: str, tier: Tier, message: str, fixture: str = "", seed: Optional[int] = None) -> "DefectReport":
        return cls(check_id=check_id, tier=tier, max_defect=math.nan, error=message, fixture=fixture, seed=seed)


class BEResult(BaseModel):
    c: float = Field(ge=1.0)
    K_best: float
    t_grid: List[float]
    max_defect: float
    tolerance: float = 1e-6
    witness: Dict[str, Any] = Field(default_factory=dict)


class ConvergenceStudy(BaseModel):
    study_id: str
    parameter: str = "n"
    levels: List[int]
    defects: List[float]
    fitted_order: float
    mode: Literal["order", "settle", "exact"] = "order"
    floor: Optional[float] = None
    exact_tolerance: float = 1e-11
    details: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("levels")
    @classmethod
    def _levels_increasing(cls, v: List[int]) -> List[int]:
        if len(v) < 3:
            raise ValueError("a convergence study needs at least 3 levels")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("levels must be strictly increasing")
        return v

    @computed_field
    @property
    def nonincreasing(self) -> bool:
        return all(b <= a * (1.0 + 1e-9) + 1e-15 for a, b in zip(self.defects, self.defects[1:]))

    @computed_field
    @property
    def settling(self) -> bool:
        """Successive differences of the signed defects do not grow."""
        steps = [abs(b - a) for a, b in zip(self.defects, self.defects[1:])]
        return all(b <= a * (1.0 + 1e-9) + 1e-15 for a, b in zip(steps, steps[1:]))

    @computed_field(alias="pass")
    @property
    def passed(self) -> bool:
        if self.mode == "exact":
            return all(d <= self.exact_tolerance for d in self.defects)
        if self.mode == "settle":
            excess = [max(d, 0.0) for d in self.defects]
            shrinking = all(b <= a * (1.0 + 1e-9) + 1e-15 for a, b in zip(excess, excess[1:]))
            return shrinking and self.settling and self.defects[-1] <= self.exact_tolerance
        if not self.nonincreasing:
            return False
        if self.mode == "order" and self.floor is not None:
            return self.fitted_order >= self.floor
        return True


class LevyAtom(BaseModel):
    s: float = Field(gt=0.0)
    w: float = Field(gt=0.0)


class LevyMixture(BaseModel):
    """Finite atomic mixing measure over intensity scalings."""

    atoms: List[LevyAtom]

    @field_validator("atoms")
    @classmethod
    def _check_atoms(cls, v: List[LevyAtom]) -> List[LevyAtom]:
        if not v:
            raise ValueError("empty mixture")
        scalings = [a.s for a in v]
        if len(set(scalings)) != len(scalings):
            raise ValueError("mixture atoms must be distinct in s")
        total = sum(a.w for a in v)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1 (got {total!r})")
        return v

    @classmethod
    def from_pairs(cls, pairs: List[Tuple[float, float]]) -> "LevyMixture":
        return cls(atoms=[LevyAtom(s=s, w=w) for s, w in pairs])

    @classmethod
    def dirac(cls, s: float = 1.0) -> "LevyMixture":
        return cls.from_pairs([(s, 1.0)])

    @property
    def mean(self) -> float:
        return sum(a.w * a.s for a in self.atoms)

    @property
    def variance(self) -> float:
        mean = self.mean
        return sum(a.w * (a.s - mean) ** 2 for a in self.atoms)

    @property
    def is_degenerate(self) -> bool:
        return len(self.atoms) == 1


class ExtendedDistance(BaseModel):
    value: float = Field(ge=0.0)
    matching: List[Tuple[int, int]] = Field(default_factory=list)

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value)


class FixtureSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["two_state", "circle", "custom"]
    rate: float = Field(default=1.0, gt=0.0)
    n: Optional[int] = None
    path: Optional[str] = None

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "FixtureSpec":
        if self.kind == "circle" and (self.n is None or self.n < 3):
            raise ValueError("circle fixture needs n >= 3")
        if self.kind == "custom" and not self.path:
            raise ValueError("custom fixture needs a path")
        return self

    @classmethod
    def parse(cls, text: str) -> "FixtureSpec":
        """Parse ``two_state``, ``circle:n=8``, ``circle:n=8,rate=2`` or ``custom:path=x.json``."""
        kind, _, rest = text.partition(":")
        fields: Dict[str, Any] = {"kind": kind.strip()}
        for item in filter(None, (p.strip() for p in rest.split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"malformed fixture option: {item!r}")
            key = key.strip()
            if key == "n":
                fields["n"] = int(value)
            elif key == "rate":
                fields["rate"] = float(value)
            elif key == "path":
                fields["path"] = value.strip()
            else:
                raise ValueError(f"unknown fixture option: {key!r}")
        return cls(**fields)

    @property
    def label(self) -> str:
        if self.kind == "circle":
            return f"circle:n={self.n},rate={self.rate!r}"
        if self.kind == "custom":
            return f"custom:path={self.path}"
        return f"two_state:rate={self.rate!r}"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fixture: FixtureSpec
    n_max: int = Field(default=3, ge=0)
    s: Optional[float] = Field(default=None, gt=0.0)
    levy: Optional[LevyMixture] = None
    t_grid: List[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0])
    suites: List[str] = Field(default_factory=lambda: ["all"])
    tolerances: Dict[str, float] = Field(default_factory=dict)
    seed: int = 7
    threads: int = Field(default=1, ge=1)
    output: Optional[str] = None
    sample_count: int = Field(default=32, ge=1)
    c: float = Field(default=1.0, ge=1.0)

    @field_validator("fixture", mode="before")
    @classmethod
    def _fixture_from_text(cls, v: Any) -> Any:
        if isinstance(v, str):
            return FixtureSpec.parse(v)
        return v

    @field_validator("t_grid")
    @classmethod
    def _t_grid_ascending(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("t_grid must not be empty")
        if any(t <= 0 for t in v):
            raise ValueError("t_grid entries must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("t_grid must be strictly ascending")
        return v

    @model_validator(mode="after")
    def _one_intensity(self) -> "ExperimentConfig":
        if self.s is not None and self.levy is not None:
            raise ValueError("give either s or levy, not both")
        return self

    @property
    def intensity(self) -> float:
        """Poisson scaling used by Poisson-only checks (mixture mean when ``levy`` is set)."""
        if self.levy is not None:
            return self.levy.mean
        return 1.0 if self.s is None else self.s

    @property
    def mixture(self) -> LevyMixture:
        if self.levy is not None:
            return self.levy
        return LevyMixture.from_pairs([(1.0, 0.5), (2.0, 0.5)])


class SuiteReport(BaseModel):
    config: ExperimentConfig
    fixture: str
    version: str
    seed: int
    reports: List[DefectReport] = Field(default_factory=list)
    studies: List[ConvergenceStudy] = Field(default_factory=list)
    wall_clock: Optional[float] = None

    @computed_field
    @property
    def exact_failures(self) -> int:
        return sum(1 for r in self.reports if r.passed is False)

    @computed_field
    @property
    def exact_passes(self) -> int:
        return sum(1 for r in self.reports if r.passed is True)
