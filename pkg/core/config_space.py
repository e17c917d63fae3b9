"""Configurations over a finite base: enumeration, Poisson measures, samplers and
the measure-level identities (Mecke, Laplace transform, L1 isometry)."""
from __future__ import annotations

import itertools
import logging
import math
import threading
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.special import gammaln
from scipy.stats import poisson

from core.base_space import BaseFunction, FiniteBaseSpace
from core.errors import DeskScaleError, InvalidInputError
from core.models import DefectReport, LevyMixture
from data.io_utils import write_frame_csv

logger = logging.getLogger(__name__)

MAX_CONFIGS = 10**7

# u(occupations, x) -> values, evaluated row-wise on an (k, n) occupation matrix
ConfigStateFunction = Callable[[npt.NDArray[np.int64], int], npt.NDArray[np.float64]]


@dataclass(frozen=True)
class Configuration:
    """Multiset of base states stored as its occupation vector."""

    occupation: Tuple[int, ...]

    def __post_init__(self) -> None:
        if any(k < 0 for k in self.occupation):
            raise InvalidInputError("occupation numbers must be nonnegative")

    @property
    def total(self) -> int:
        return sum(self.occupation)

    @property
    def n(self) -> int:
        return len(self.occupation)

    def particles(self) -> List[int]:
        """States of the particles, with multiplicity, in increasing order."""
        return [x for x, k in enumerate(self.occupation) for _ in range(k)]

    def add(self, x: int) -> "Configuration":
        occ = list(self.occupation)
        occ[x] += 1
        return Configuration(tuple(occ))

    def remove(self, x: int) -> "Configuration":
        if self.occupation[x] == 0:
            raise InvalidInputError(f"no particle at state {x}")
        occ = list(self.occupation)
        occ[x] -= 1
        return Configuration(tuple(occ))

    def move(self, x: int, y: int) -> "Configuration":
        return self.remove(x).add(y)

    @classmethod
    def empty(cls, n: int) -> "Configuration":
        return cls((0,) * n)

    @classmethod
    def from_particles(cls, n: int, particles: Sequence[int]) -> "Configuration":
        occ = [0] * n
        for x in particles:
            occ[x] += 1
        return cls(tuple(occ))

    @classmethod
    def from_labels(cls, base: FiniteBaseSpace, labels: Sequence[str]) -> "Configuration":
        return cls.from_particles(base.n, [base.index_of(s) for s in labels])

    def label(self, base: FiniteBaseSpace) -> str:
        """``"a+a+b"`` style; the empty configuration is ``"empty"``."""
        return "+".join(base.states[x] for x in self.particles()) or "empty"


def config_count(n: int, n_max: int) -> int:
    return sum(math.comb(n + k - 1, k) for k in range(n_max + 1))


class ConfigSpace:
    """All configurations with at most ``n_max`` particles, in graded-lex order.

    Sector ``k`` (exactly ``k`` particles) occupies the contiguous index range
    ``sector_ranges[k]``; inside a sector configurations follow the
    lexicographic order of their sorted particle lists.
    """

    def __init__(self, base: FiniteBaseSpace, n_max: int, limit: int = MAX_CONFIGS) -> None:
        if n_max < 0:
            raise InvalidInputError(f"n_max must be nonnegative (got {n_max})")
        size = config_count(base.n, n_max)
        if size > limit:
            raise DeskScaleError(f"{size} configurations exceed the enumeration limit {limit}")
        self.base = base
        self.n_max = n_max
        self.configs: List[Configuration] = []
        self.sector_ranges: List[Tuple[int, int]] = []
        for k in range(n_max + 1):
            start = len(self.configs)
            for particles in itertools.combinations_with_replacement(range(base.n), k):
                self.configs.append(Configuration.from_particles(base.n, particles))
            self.sector_ranges.append((start, len(self.configs)))
        self.index: Dict[Tuple[int, ...], int] = {c.occupation: i for i, c in enumerate(self.configs)}
        self._lock = threading.Lock()
        self._semigroups: Dict[Tuple[str, float], Any] = {}
        logger.debug("enumerated %d configurations (n=%d, n_max=%d)", len(self.configs), base.n, n_max)

    def __len__(self) -> int:
        return len(self.configs)

    def position(self, gamma: Configuration) -> int:
        try:
            return self.index[gamma.occupation]
        except KeyError:
            raise InvalidInputError(f"configuration {gamma.occupation} is not enumerated (n_max={self.n_max})") from None

    def sector(self, k: int) -> range:
        start, stop = self.sector_ranges[k]
        return range(start, stop)

    def sector_size(self, k: int) -> int:
        start, stop = self.sector_ranges[k]
        return stop - start

    @property
    def max_sector_size(self) -> int:
        return max(self.sector_size(k) for k in range(self.n_max + 1))

    @cached_property
    def occupations(self) -> npt.NDArray[np.int64]:
        return np.array([c.occupation for c in self.configs], dtype=np.int64).reshape(len(self.configs), self.base.n)

    @cached_property
    def totals(self) -> npt.NDArray[np.int64]:
        return self.occupations.sum(axis=1)

    @cached_property
    def successor(self) -> npt.NDArray[np.int64]:
        """successor[i, y] = index of configs[i] + delta_y, or -1 beyond the cap."""
        table = np.full((len(self.configs), self.base.n), -1, dtype=np.int64)
        for i, c in enumerate(self.configs):
            if c.total >= self.n_max:
                continue
            for y in range(self.base.n):
                table[i, y] = self.index[c.add(y).occupation]
        return table

    def star(self, f: BaseFunction) -> npt.NDArray[np.float64]:
        """f* evaluated on every configuration."""
        return self.occupations @ np.asarray(f, dtype=float)

    def cached(self, key: Tuple[str, float], build: Callable[[], Any]) -> Any:
        with self._lock:
            if key in self._semigroups:
                return self._semigroups[key]
        value = build()
        with self._lock:
            self._semigroups.setdefault(key, value)
            return self._semigroups[key]


@dataclass
class ConfigMeasure:
    """Nonnegative weights over an enumeration plus the mass lost beyond the cap."""

    weights: npt.NDArray[np.float64]
    tail: float = 0.0
    kind: str = "custom"
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise InvalidInputError("measure weights must be finite and nonnegative")
        if self.tail < 0:
            raise InvalidInputError("tail bound must be nonnegative")

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def sector_masses(self, cspace: ConfigSpace) -> npt.NDArray[np.float64]:
        return np.array([self.weights[a:b].sum() for a, b in cspace.sector_ranges])

    def integrate(self, values: npt.NDArray[np.float64]) -> float:
        return float(np.dot(self.weights, values))

    def to_frame(self, cspace: ConfigSpace) -> pd.DataFrame:
        frame = pd.DataFrame(cspace.occupations, columns=[f"n_{s}" for s in cspace.base.states])
        frame["weight"] = self.weights
        return frame

    def to_csv(self, cspace: ConfigSpace, path: str | Path) -> Path:
        return write_frame_csv(self.to_frame(cspace), path)


def poisson_tail(lam: float, n_max: int) -> float:
    """P(N > n_max) for N ~ Poisson(lam)."""
    return float(poisson.sf(n_max, lam))


def poisson_weights(cspace: ConfigSpace, s: float) -> ConfigMeasure:
    """pi_{s m}(gamma) = e^{-s mX} prod_x (s m_x)^{gamma_x} / gamma_x!."""
    if not s > 0:
        raise InvalidInputError(f"intensity scaling must be positive (got {s!r})")
    occ = cspace.occupations
    intensity = s * cspace.base.weights
    lam = float(intensity.sum())
    log_w = -lam + occ @ np.log(intensity) - gammaln(occ + 1.0).sum(axis=1)
    return ConfigMeasure(
        weights=np.exp(log_w),
        tail=poisson_tail(lam, cspace.n_max),
        kind="poisson",
        params={"s": float(s)},
    )


def mixed_poisson_weights(cspace: ConfigSpace, levy: LevyMixture) -> ConfigMeasure:
    """mu_lambda = sum_j w_j pi_{s_j m}."""
    if not levy.atoms:
        raise InvalidInputError("empty mixture")
    weights = np.zeros(len(cspace))
    tail = 0.0
    for atom in levy.atoms:
        component = poisson_weights(cspace, atom.s)
        weights += atom.w * component.weights
        tail += atom.w * component.tail
    if levy.is_degenerate:
        return ConfigMeasure(weights=weights, tail=tail, kind="poisson", params={"s": levy.atoms[0].s})
    return ConfigMeasure(
        weights=weights,
        tail=tail,
        kind="mixed",
        params={"atoms": [(a.s, a.w) for a in levy.atoms]},
    )


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def sample_poisson(base: FiniteBaseSpace, s: float, rng_seed: int) -> Configuration:
    """One draw: N ~ Poisson(s mX), then N iid locations from m / mX."""
    occ = sample_poisson_batch(base, s, rng_seed, size=1)[0]
    return Configuration(tuple(int(k) for k in occ))


def sample_poisson_batch(base: FiniteBaseSpace, s: float, rng_seed: int, size: int) -> npt.NDArray[np.int64]:
    if not s > 0:
        raise InvalidInputError(f"intensity scaling must be positive (got {s!r})")
    rng = _rng(rng_seed)
    counts = rng.poisson(s * base.total_mass, size=size)
    owners = np.repeat(np.arange(size), counts)
    locations = rng.choice(base.n, size=int(counts.sum()), p=base.weights / base.total_mass)
    occ = np.zeros((size, base.n), dtype=np.int64)
    np.add.at(occ, (owners, locations), 1)
    return occ


def star(f: BaseFunction, gamma: Configuration) -> float:
    """f* gamma = sum_x gamma_x f(x)."""
    return float(np.dot(np.asarray(gamma.occupation, dtype=float), np.asarray(f, dtype=float)))


def _poisson_scaling(mu: ConfigMeasure) -> float:
    if mu.kind != "poisson":
        raise InvalidInputError(f"this identity characterizes Poisson measures; got a {mu.kind!r} measure")
    return float(mu.params["s"])


def _mecke_sides(
    cspace: ConfigSpace,
    mu: ConfigMeasure,
    u: ConfigStateFunction,
    s: float,
) -> Tuple[float, float, float]:
    occ = cspace.occupations
    base = cspace.base
    lhs = 0.0
    rhs = 0.0
    bound = 0.0
    inner = cspace.totals < cspace.n_max
    for x in range(base.n):
        values = np.asarray(u(occ, x), dtype=float)
        lhs += float(np.dot(mu.weights, occ[:, x] * values))
        bound = max(bound, float(np.abs(values).max()))
        shifted = occ[inner].copy()
        shifted[:, x] += 1
        rhs += s * base.weights[x] * float(np.dot(mu.weights[inner], np.asarray(u(shifted, x), dtype=float)))
    return lhs, rhs, bound


def check_mecke(
    cspace: ConfigSpace,
    mu: ConfigMeasure,
    u: ConfigStateFunction,
    mode: str = "exact",
    *,
    samples: int = 10**6,
    seed: int = 7,
    s: Optional[float] = None,
    negative_control: bool = False,
    margin: float = 0.0,
    tolerance: float = 1e-10,
) -> DefectReport:
    """Mecke identity: int sum_x gamma_x u(gamma,x) dpi = s int int u(gamma+delta_x, x) dm dpi.

    Non-Poisson measures are refused unless run as a negative control, in which
    case ``s`` (default: the mixture's mean scaling) is used on the right-hand side.
    """
    if negative_control:
        if s is None:
            atoms = mu.params.get("atoms")
            s = sum(sc * w for sc, w in atoms) if atoms else float(mu.params["s"])
    else:
        s = _poisson_scaling(mu)
    lam = s * cspace.base.total_mass
    if mode == "exact":
        lhs, rhs, bound = _mecke_sides(cspace, mu, u, s)
        tail = 2.0 * bound * lam * poisson_tail(lam, cspace.n_max - 1) if cspace.n_max >= 1 else bound * lam
        return DefectReport(
            check_id="measures.mecke",
            tier="exact",
            max_defect=abs(lhs - rhs),
            tolerance=tolerance,
            tail_bound=0.0 if negative_control else tail,
            seed=seed,
            negative_control=negative_control,
            margin=margin,
            details={"lhs": lhs, "rhs": rhs, "mode": mode, "s": s, "truncation": tail},
        )
    if mode == "montecarlo":
        if mu.kind != "poisson":
            raise InvalidInputError("Monte Carlo Mecke samples from a Poisson measure")
        occ = sample_poisson_batch(cspace.base, s, seed, samples)
        diff = np.zeros(samples)
        for x in range(cspace.base.n):
            diff += occ[:, x] * np.asarray(u(occ, x), dtype=float)
            shifted = occ.copy()
            shifted[:, x] += 1
            diff -= s * cspace.base.weights[x] * np.asarray(u(shifted, x), dtype=float)
        estimate = float(diff.mean())
        stderr = float(diff.std(ddof=1) / math.sqrt(samples))
        return DefectReport(
            check_id="measures.mecke_montecarlo",
            tier="exact",
            max_defect=abs(estimate),
            tolerance=3.0 * stderr,
            seed=seed,
            details={"estimate": estimate, "stderr": stderr, "samples": samples, "mode": mode},
        )
    raise InvalidInputError(f"unknown Mecke mode {mode!r}")


def mecke_mixture_gap(base: FiniteBaseSpace, levy: LevyMixture) -> float:
    """Exact LHS - RHS of Mecke for u(gamma,x) = gamma X under a mixture, RHS at the mean scaling."""
    return base.total_mass**2 * levy.variance


def check_laplace(
    cspace: ConfigSpace,
    s: float,
    f: BaseFunction,
    tolerance: float = 1e-10,
    max_tail: float = 1.0,
) -> DefectReport:
    """int e^{f* gamma} dpi = exp(s int (e^f - 1) dm)."""
    f = np.asarray(f, dtype=float)
    if np.abs(f).max(initial=0.0) > 5.0:
        raise InvalidInputError("Laplace check needs |f| <= 5")
    mu = poisson_weights(cspace, s)
    base = cspace.base
    lhs = mu.integrate(np.exp(cspace.star(f)))
    rhs = math.exp(s * float(np.dot(base.weights, np.expm1(f))))
    lam = s * base.total_mass
    c = max(float(f.max(initial=0.0)), 0.0)
    tail = math.exp(lam * math.expm1(c)) * poisson_tail(lam * math.exp(c), cspace.n_max)
    if tail > max_tail:
        raise DeskScaleError(f"Laplace tail bound {tail:.3g} exceeds {max_tail:.3g}; raise n_max or shrink f")
    return DefectReport(
        check_id="measures.laplace",
        tier="exact",
        max_defect=abs(lhs - rhs),
        tolerance=tolerance,
        tail_bound=tail,
        details={"lhs": lhs, "rhs": rhs, "s": s},
    )


def check_star_isometry(cspace: ConfigSpace, mu: ConfigMeasure, f: BaseFunction, tolerance: float = 1e-10) -> DefectReport:
    """||f*||_{L1(pi)} = s ||f||_{L1(m)}, via |f|* = (|f|)* for the sign decomposition."""
    s = _poisson_scaling(mu)
    g = np.abs(np.asarray(f, dtype=float))
    base = cspace.base
    lhs = mu.integrate(cspace.star(g))
    rhs = s * float(np.dot(base.weights, g))
    lam = s * base.total_mass
    tail = float(g.max(initial=0.0)) * lam * (poisson_tail(lam, cspace.n_max - 1) if cspace.n_max >= 1 else 1.0)
    return DefectReport(
        check_id="measures.star_isometry",
        tier="exact",
        max_defect=abs(lhs - rhs),
        tolerance=tolerance,
        tail_bound=tail,
        details={"lhs": lhs, "rhs": rhs},
    )


def check_star_order(cspace: ConfigSpace, f: BaseFunction, g: BaseFunction) -> DefectReport:
    """f <= g entrywise implies f* <= g* on every configuration."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(f > g):
        raise InvalidInputError("check_star_order needs f <= g entrywise")
    gap = cspace.star(f) - cspace.star(g)
    return DefectReport(check_id="measures.star_order", tier="exact", max_defect=max(0.0, float(gap.max())))


def check_independence(
    cspace: ConfigSpace,
    mu: ConfigMeasure,
    A: Sequence[int],
    B: Sequence[int],
    tolerance: float = 1e-12,
) -> DefectReport:
    """Joint law of (gamma A, gamma B) against the product of its Poisson marginals."""
    if set(A) & set(B):
        raise InvalidInputError("A and B must be disjoint")
    s = _poisson_scaling(mu)
    m = cspace.base.weights
    lam_a = s * float(m[list(A)].sum())
    lam_b = s * float(m[list(B)].sum())
    occ = cspace.occupations
    count_a = occ[:, list(A)].sum(axis=1)
    count_b = occ[:, list(B)].sum(axis=1)
    worst = 0.0
    witness: Dict[str, int] = {}
    for a in range(cspace.n_max + 1):
        for b in range(cspace.n_max + 1 - a):
            joint = float(mu.weights[(count_a == a) & (count_b == b)].sum())
            product = float(poisson.pmf(a, lam_a) * poisson.pmf(b, lam_b))
            if abs(joint - product) > worst:
                worst = abs(joint - product)
                witness = {"a": a, "b": b}
    return DefectReport(
        check_id="measures.independence",
        tier="exact",
        max_defect=worst,
        tolerance=tolerance,
        tail_bound=mu.tail,
        witness=witness,
    )
