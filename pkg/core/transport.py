"""Metric side: configuration distance, exact optimal transport, entropy and Fisher information.

Distances between configurations with different particle counts are infinite,
so every transport problem splits into independent per-sector problems.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse.linalg import expm_multiply

from core.base_space import FiniteBaseSpace, interval_integral, semigroup_matrix
from core.config_space import ConfigMeasure, ConfigSpace, Configuration
from core.errors import DeskScaleError, InvalidInputError, LabError
from core.lift import gamma_section, kernel_config_row, lifted_generator_matrix, lifted_semigroup_matrix, transition_edges
from core.models import DefectReport, ExtendedDistance
from data.io_utils import write_frame_csv

logger = logging.getLogger(__name__)

OT_SECTOR_LIMIT = 500
MASS_TOL = 1e-9
EVI_STEPS = (1e-2, 5e-3, 2.5e-3)

_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
# (method, options, relative support cutoff) tried in order
_LP_ATTEMPTS = (
    ("highs", _LP_OPTIONS, 1e-14),
    ("highs-ds", {**_LP_OPTIONS, "presolve": False}, 1e-14),
    ("highs-ds", {**_LP_OPTIONS, "presolve": False}, 1e-9),
)


@dataclass
class TransportPlan:
    plan: sp.csr_matrix
    cost: float
    status: str = "optimal"
    sector_costs: Dict[int, float] = field(default_factory=dict)

    @property
    def distance(self) -> float:
        return math.sqrt(max(self.cost, 0.0)) if self.status == "optimal" else math.inf

    def to_frame(self, labels: Optional[Sequence[str]] = None) -> pd.DataFrame:
        coo = self.plan.tocoo()
        rows = [labels[i] for i in coo.row] if labels is not None else coo.row
        cols = [labels[j] for j in coo.col] if labels is not None else coo.col
        return pd.DataFrame({"source": rows, "target": cols, "mass": coo.data})

    def to_csv(self, path: str | Path, labels: Optional[Sequence[str]] = None) -> Path:
        return write_frame_csv(self.to_frame(labels), path)

    @classmethod
    def infinite(cls, size: int) -> "TransportPlan":
        return cls(plan=sp.csr_matrix((size, size)), cost=math.inf, status="infinite")


def config_distance(base: FiniteBaseSpace, gamma: Configuration, eta: Configuration) -> ExtendedDistance:
    """Square root of the optimal squared-cost assignment between the particles."""
    d = base.require_metric()
    if gamma.total != eta.total:
        return ExtendedDistance(value=math.inf)
    if gamma.total == 0:
        return ExtendedDistance(value=0.0)
    xs = np.asarray(gamma.particles())
    ys = np.asarray(eta.particles())
    cost = d[np.ix_(xs, ys)] ** 2
    rows, cols = linear_sum_assignment(cost)
    value = math.sqrt(float(cost[rows, cols].sum()))
    return ExtendedDistance(value=value, matching=[(int(xs[i]), int(ys[j])) for i, j in zip(rows, cols)])


def sector_cost_matrix(cspace: ConfigSpace, k: int) -> npt.NDArray[np.float64]:
    """Squared configuration distance between every pair of k-particle configurations."""
    d2 = cspace.base.require_metric() ** 2

    def build():
        idx = cspace.sector(k)
        if k == 0:
            return np.zeros((1, 1))
        particles = np.array([cspace.configs[i].particles() for i in idx], dtype=np.int64)
        if k <= 6:
            best = None
            for sigma in itertools.permutations(range(k)):
                cost = sum(d2[particles[:, i][:, None], particles[:, sigma[i]][None, :]] for i in range(k))
                best = cost if best is None else np.minimum(best, cost)
            return best
        size = len(idx)
        out = np.zeros((size, size))
        for a in range(size):
            for b in range(a + 1, size):
                c = d2[np.ix_(particles[a], particles[b])]
                r, s = linear_sum_assignment(c)
                out[a, b] = out[b, a] = c[r, s].sum()
        return out

    return cspace.cached(("cost", float(k)), build)


def _trim_support(v: np.ndarray, cutoff: float) -> np.ndarray:
    """Zero the entries below ``cutoff`` times the mass and restore the mass."""
    total = v.sum()
    kept = np.where(v > cutoff * total, v, 0.0)
    return kept * (total / kept.sum())


def _solve_ot(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> Tuple[sp.coo_matrix, float]:
    """Exact discrete OT between equal-mass vectors a and b (HiGHS on the supports).

    Marginals produced by short heat flows carry entries far below the solver
    feasibility tolerance; they are trimmed relative to the mass, and a failed
    solve is retried with the dual simplex and no presolve, then with a
    coarser trim.
    """
    shape = (a.size, b.size)
    if a.sum() <= 0 or b.sum() <= 0:
        return sp.coo_matrix(shape), 0.0
    b = b * (a.sum() / b.sum())
    message = ""
    for method, options, cutoff in _LP_ATTEMPTS:
        ta, tb = _trim_support(a, cutoff), _trim_support(b, cutoff)
        ia, ib = np.flatnonzero(ta), np.flatnonzero(tb)
        c = cost[np.ix_(ia, ib)]
        p, q = ia.size, ib.size
        if p == 1 or q == 1:
            local = np.outer(ta[ia], tb[ib]) / (ta[ia].sum() if q == 1 else tb[ib].sum())
            break
        a_eq = sp.vstack([sp.kron(sp.eye(p), np.ones((1, q))), sp.kron(np.ones((1, p)), sp.eye(q))]).tocsr()
        b_eq = np.concatenate([ta[ia], tb[ib]])
        result = linprog(c.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method=method, options=options)
        if result.status == 0:
            local = np.clip(result.x.reshape(p, q), 0.0, None)
            break
        message = result.message
        logger.debug("transport LP (%s, cutoff %.0e) failed: %s", method, cutoff, message)
    else:
        raise LabError(f"transport LP failed: {message}")
    rows, cols = np.nonzero(local > 0)
    plan = sp.coo_matrix((local[rows, cols], (ia[rows], ib[cols])), shape=shape)
    return plan, float((local * c).sum())


def wasserstein_base(base: FiniteBaseSpace, mu: Sequence[float], nu: Sequence[float]) -> TransportPlan:
    d = base.require_metric()
    a = np.asarray(mu, dtype=float)
    b = np.asarray(nu, dtype=float)
    if a.shape != (base.n,) or b.shape != (base.n,):
        raise InvalidInputError("base measures must have one weight per state")
    if np.any(a < 0) or np.any(b < 0):
        raise InvalidInputError("base measures must be nonnegative")
    if abs(a.sum() - b.sum()) > 1e-10:
        raise InvalidInputError(f"unbalanced masses {a.sum()!r} and {b.sum()!r}")
    plan, cost = _solve_ot(a, b, d**2)
    return TransportPlan(plan=plan.tocsr(), cost=cost)


def _require_desk_scale(cspace: ConfigSpace, k: int, limit: int) -> None:
    size = cspace.sector_size(k)
    if size > limit:
        raise DeskScaleError(f"sector {k} holds {size} configurations; exact transport is limited to {limit}")


def wasserstein_config(
    cspace: ConfigSpace,
    mu: ConfigMeasure,
    nu: ConfigMeasure,
    limit: int = OT_SECTOR_LIMIT,
) -> TransportPlan:
    """Squared W2 as the sum of per-sector optimal costs; infinite when sector masses differ."""
    cspace.base.require_metric()
    size = len(cspace)
    mass_mu = mu.sector_masses(cspace)
    mass_nu = nu.sector_masses(cspace)
    if np.max(np.abs(mass_mu - mass_nu)) > MASS_TOL:
        return TransportPlan.infinite(size)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    data: List[np.ndarray] = []
    sector_costs: Dict[int, float] = {}
    for k, (start, stop) in enumerate(cspace.sector_ranges):
        a = mu.weights[start:stop]
        b = nu.weights[start:stop]
        if a.sum() <= 0 and b.sum() <= 0:
            continue
        _require_desk_scale(cspace, k, limit)
        plan, cost = _solve_ot(a, b, sector_cost_matrix(cspace, k))
        rows.append(plan.row + start)
        cols.append(plan.col + start)
        data.append(plan.data)
        sector_costs[k] = cost
    if data:
        plan = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size))
    else:
        plan = sp.coo_matrix((size, size))
    return TransportPlan(plan=plan.tocsr(), cost=float(sum(sector_costs.values())), sector_costs=sector_costs)


def dirac(cspace: ConfigSpace, gamma: Configuration) -> ConfigMeasure:
    weights = np.zeros(len(cspace))
    weights[cspace.position(gamma)] = 1.0
    return ConfigMeasure(weights=weights, kind="dirac", params={"gamma": list(gamma.occupation)})


def check_distance_metric(cspace: ConfigSpace, max_sector: int = 200, tolerance: float = 1e-10) -> DefectReport:
    """Symmetry, triangle inequality, Dirac isometry and infinity across sectors."""
    base = cspace.base
    d = base.require_metric()
    symmetry = 0.0
    triangle = 0.0
    checked: List[int] = []
    for k in range(cspace.n_max + 1):
        if cspace.sector_size(k) > max_sector:
            continue
        dist = np.sqrt(sector_cost_matrix(cspace, k))
        symmetry = max(symmetry, float(np.abs(dist - dist.T).max()))
        # dist[a,c] - dist[a,b] - dist[b,c]
        excess = dist[:, None, :] - dist[:, :, None] - dist[None, :, :]
        triangle = max(triangle, float(excess.max()))
        checked.append(k)
    isometry = 0.0
    if cspace.n_max >= 1:
        singles = np.sqrt(sector_cost_matrix(cspace, 1))
        isometry = float(np.abs(singles - d).max())
    cross = 0.0
    if cspace.n_max >= 1:
        empty = cspace.configs[0]
        for i in cspace.sector(1):
            if config_distance(base, empty, cspace.configs[i]).is_finite:
                cross = 1.0
    worst = max(symmetry, max(triangle, 0.0), isometry, cross)
    return DefectReport(
        check_id="transport.distance_metric",
        tier="exact",
        max_defect=worst,
        tolerance=tolerance,
        details={"symmetry": symmetry, "triangle": max(triangle, 0.0), "dirac_isometry": isometry, "sectors": checked},
    )


def check_ot_assignment(cspace: ConfigSpace, pairs: Sequence[Tuple[Configuration, Configuration]], tolerance: float = 1e-9) -> DefectReport:
    """Transport between Dirac measures against the assignment solver."""
    worst = 0.0
    witness: dict = {}
    for gamma, eta in pairs:
        via_ot = wasserstein_config(cspace, dirac(cspace, gamma), dirac(cspace, eta)).distance
        via_assignment = config_distance(cspace.base, gamma, eta).value
        gap = 0.0 if math.isinf(via_ot) and math.isinf(via_assignment) else abs(via_ot - via_assignment)
        if gap > worst:
            worst = gap
            witness = {"gamma": list(gamma.occupation), "eta": list(eta.occupation)}
    return DefectReport(check_id="transport.ot_vs_assignment", tier="exact", max_defect=worst, tolerance=tolerance, witness=witness)


def same_sector_pairs(cspace: ConfigSpace, count: int, seed: int = 7, max_total: Optional[int] = None) -> List[Tuple[Configuration, Configuration]]:
    """Seeded pairs drawn uniformly inside a uniformly chosen sector 1..max_total."""
    rng = np.random.Generator(np.random.Philox(seed))
    top = cspace.n_max if max_total is None else min(max_total, cspace.n_max)
    sectors = list(range(1, top + 1))
    pairs: List[Tuple[Configuration, Configuration]] = []
    for _ in range(count if sectors else 0):
        k = sectors[int(rng.integers(len(sectors)))]
        a, b = cspace.sector_ranges[k]
        i, j = rng.integers(a, b, size=2)
        pairs.append((cspace.configs[int(i)], cspace.configs[int(j)]))
    return pairs


def check_kwc(
    cspace: ConfigSpace,
    c_fn: Callable[[float], float],
    t_grid: Sequence[float],
    pairs: Sequence[Tuple[Configuration, Configuration]],
    tolerance: float = 1e-8,
    limit: int = OT_SECTOR_LIMIT,
) -> DefectReport:
    """W2(h_t(gamma,.), h_t(eta,.)) <= c(t) d(gamma, eta), maximized over pairs and t.

    One-particle pairs are also solved on the base space; the configuration
    and base distances must agree there (``details['singleton_gap']``) and
    any disagreement counts toward the defect.
    """
    base = cspace.base
    worst = -math.inf
    singleton_gap = 0.0
    witness: dict = {}
    for gamma, eta in pairs:
        if gamma.total != eta.total:
            raise InvalidInputError("kernel contraction pairs must share a sector")
        dist = config_distance(base, gamma, eta).value
        for t in t_grid:
            w2 = wasserstein_config(cspace, kernel_config_row(cspace, gamma, t), kernel_config_row(cspace, eta, t), limit=limit).distance
            if gamma.total == 1 and math.isfinite(w2):
                h = semigroup_matrix(base, t)
                x, y = gamma.particles()[0], eta.particles()[0]
                # killed chains can lose different mass from x and y
                if abs(h[x].sum() - h[y].sum()) <= 1e-10:
                    singleton_gap = max(singleton_gap, abs(w2 - wasserstein_base(base, h[x], h[y]).distance))
            gap = w2 - c_fn(t) * dist
            if gap > worst:
                worst = gap
                witness = {"gamma": list(gamma.occupation), "eta": list(eta.occupation), "t": float(t)}
    return DefectReport(
        check_id="transport.kwc",
        tier="exact",
        max_defect=max(worst, singleton_gap, 0.0) if pairs else 0.0,
        tolerance=tolerance,
        witness=witness,
        details={"pairs": len(pairs), "raw_defect": worst if pairs else 0.0, "singleton_gap": singleton_gap},
    )


def entropy(mu: ConfigMeasure, ref: ConfigMeasure) -> float:
    """sum mu log(mu / ref); infinite when mu charges a ref-null configuration."""
    w = mu.weights
    r = ref.weights
    if w.shape != r.shape:
        raise InvalidInputError("entropy needs measures on the same enumeration")
    support = w > 0
    if np.any(r[support] <= 0):
        return math.inf
    return float(np.sum(w[support] * np.log(w[support] / r[support])))


def density(mu: ConfigMeasure, ref: ConfigMeasure) -> npt.NDArray[np.float64]:
    if np.any((mu.weights > 0) & (ref.weights <= 0)):
        raise InvalidInputError("measure is not absolutely continuous with respect to the reference")
    return np.divide(mu.weights, ref.weights, out=np.zeros_like(mu.weights), where=ref.weights > 0)


def fisher_information(cspace: ConfigSpace, rho: npt.NDArray[np.float64], ref: ConfigMeasure) -> Tuple[float, float]:
    """(4 E(sqrt rho), E(rho, log rho)) for the lifted Dirichlet form under ``ref``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < -1e-14):
        raise InvalidInputError("density must be nonnegative")
    rho = np.clip(rho, 0.0, None)
    f_sqrt = 4.0 * ref.integrate(gamma_section(cspace, np.sqrt(rho)))
    rows, cols, rates = transition_edges(cspace)
    a, b = rho[rows], rho[cols]
    both = (a > 0) & (b > 0)
    mismatched = (a > 0) != (b > 0)
    if np.any(mismatched & (ref.weights[rows] > 0)):
        return float(f_sqrt), math.inf
    terms = np.zeros(rows.size)
    terms[both] = 0.5 * rates[both] * (b[both] - a[both]) * (np.log(b[both]) - np.log(a[both]))
    per_config = np.bincount(rows, weights=terms, minlength=len(cspace))
    return float(f_sqrt), ref.integrate(per_config)


def flow(cspace: ConfigSpace, mu: ConfigMeasure, t: float) -> ConfigMeasure:
    """mu T_t via the action of the matrix exponential (no per-t caching)."""
    if t < 0:
        raise InvalidInputError(f"time must be nonnegative (got {t!r})")
    weights = expm_multiply(t * lifted_generator_matrix(cspace).T.tocsr(), mu.weights) if t > 0 else mu.weights.copy()
    return ConfigMeasure(weights=np.clip(weights, 0.0, None), tail=mu.tail, kind="flow", params={"t": float(t)})


def check_entropy_dissipation(
    cspace: ConfigSpace,
    mu0: ConfigMeasure,
    ref: ConfigMeasure,
    t_grid: Sequence[float],
    tolerance: float = 1e-8,
) -> DefectReport:
    """d/dt Ent = <L rho_t, 1 + log rho_t> = -E(rho_t, log rho_t), entropy monotone, and
    the integrated dissipation against the entropy drop."""
    generator = lifted_generator_matrix(cspace)
    if np.any(ref.weights <= 0):
        raise InvalidInputError("entropy dissipation needs a strictly positive reference")
    identity_gap = 0.0
    entropies = []
    for t in t_grid:
        rho = density(flow(cspace, mu0, t), ref)
        entropies.append(entropy(flow(cspace, mu0, t), ref))
        if np.any(rho <= 0):
            continue
        derivative = ref.integrate((generator @ rho) * (1.0 + np.log(rho)))
        _, f_log = fisher_information(cspace, rho, ref)
        identity_gap = max(identity_gap, abs(derivative + f_log))
    monotone = max((b - a for a, b in zip(entropies, entropies[1:])), default=0.0)

    def dissipation(t: float) -> float:
        return fisher_information(cspace, density(flow(cspace, mu0, t), ref), ref)[1]

    horizon = float(max(t_grid))
    integral, error = quad(dissipation, 0.0, horizon, epsabs=1e-11, epsrel=1e-10, limit=200)
    ent0 = entropy(mu0, ref)
    drop = ent0 - entropy(flow(cspace, mu0, horizon), ref)
    quadrature_gap = abs(integral - drop)
    bound_gap = max(integral - 2.0 * ent0, 0.0)
    worst = max(identity_gap, max(monotone, 0.0), max(quadrature_gap - 10.0 * error, 0.0), bound_gap)
    return DefectReport(
        check_id="transport.entropy_dissipation",
        tier="exact",
        max_defect=worst,
        tolerance=tolerance,
        details={
            "identity": identity_gap,
            "monotone_increase": max(monotone, 0.0),
            "integrated_dissipation": integral,
            "entropy_drop": drop,
            "quadrature_error": error,
            "entropy_bound_excess": bound_gap,
        },
    )


def check_entropy_cost(
    cspace: ConfigSpace,
    mu: ConfigMeasure,
    nu: ConfigMeasure,
    ref: ConfigMeasure,
    K: float,
    t_grid: Sequence[float],
    limit: int = OT_SECTOR_LIMIT,
) -> DefectReport:
    """Ent(mu T_t) - Ent(nu) - W2(mu, nu)^2 / (4 I_{2K}(t)), maximized over t."""
    cost = wasserstein_config(cspace, mu, nu, limit=limit).cost
    if math.isinf(cost):
        return DefectReport(
            check_id="transport.entropy_cost",
            tier="asymptotic",
            max_defect=math.nan,
            refused="infinite transport distance between the measures",
            refusal_code="infinite_distance",
        )
    ent_nu = entropy(nu, ref)
    worst = -math.inf
    witness: dict = {}
    for t in t_grid:
        gap = entropy(flow(cspace, mu, t), ref) - ent_nu - cost / (4.0 * interval_integral(2.0 * K, t))
        if gap > worst:
            worst = gap
            witness = {"t": float(t)}
    return DefectReport(check_id="transport.entropy_cost", tier="asymptotic", max_defect=worst, witness=witness, details={"K": K, "w2_squared": cost})


def step_sequence_settles(values: Sequence[float], ratio: float = 0.75, floor: float = 1e-12) -> bool:
    """True when successive differences of a step-halving sequence shrink by ``ratio``."""
    diffs = np.abs(np.diff(np.asarray(values, dtype=float)))
    if diffs.size < 2 or not np.all(np.isfinite(diffs)):
        return False
    return bool(np.all((diffs[1:] <= ratio * diffs[:-1]) | (diffs[1:] <= floor)))


def check_evi(
    cspace: ConfigSpace,
    mu0: ConfigMeasure,
    nu: ConfigMeasure,
    ref: ConfigMeasure,
    K: float,
    t_grid: Sequence[float],
    limit: int = OT_SECTOR_LIMIT,
) -> DefectReport:
    """Forward-difference EVI defect d+/dt W^2/2 + K/2 W^2 - (Ent(nu) - Ent(mu_t)).

    Each step in ``EVI_STEPS`` (relative to t) is reported; the headline value
    uses the smallest step. When the differences between successive steps do
    not shrink at some t, the difference quotient has not settled and the
    report is flagged ``details['inconclusive']``.
    """
    ent_nu = entropy(nu, ref)
    per_step: Dict[str, List[float]] = {repr(h): [] for h in EVI_STEPS}
    unsettled: List[float] = []
    for t in t_grid:
        current = flow(cspace, mu0, t)
        w2_now = wasserstein_config(cspace, current, nu, limit=limit).cost
        if math.isinf(w2_now):
            return DefectReport(
                check_id="transport.evi",
                tier="asymptotic",
                max_defect=math.nan,
                refused="infinite transport distance along the curve",
                refusal_code="infinite_distance",
            )
        rhs = ent_nu - entropy(current, ref)
        for rel in EVI_STEPS:
            h = rel * t
            w2_next = wasserstein_config(cspace, flow(cspace, mu0, t + h), nu, limit=limit).cost
            derivative = 0.5 * (w2_next - w2_now) / h
            per_step[repr(rel)].append(derivative + 0.5 * K * w2_now - rhs)
        if not step_sequence_settles([per_step[repr(rel)][-1] for rel in EVI_STEPS]):
            unsettled.append(float(t))
    headline = per_step[repr(EVI_STEPS[-1])]
    if unsettled:
        logger.warning("EVI difference quotient did not settle at t=%s", unsettled)
    return DefectReport(
        check_id="transport.evi",
        tier="asymptotic",
        max_defect=float(max(headline)),
        details={
            "K": K,
            "t_grid": [float(t) for t in t_grid],
            "by_step": per_step,
            "inconclusive": bool(unsettled),
            "unsettled_t": unsettled,
        },
    )


def check_log_harnack_config(
    cspace: ConfigSpace,
    K: float,
    t_grid: Sequence[float],
    samples: Sequence[npt.NDArray[np.float64]],
    max_sector: int = OT_SECTOR_LIMIT,
) -> DefectReport:
    """T_t log u(gamma) <= log T_t u(eta) + d(gamma, eta)^2 / (4 I_{2K}(t)) on same-sector pairs.

    ``details['singleton_defect']`` restricts the maximum to one-particle
    configurations, where the inequality is the base one through the Dirac embedding.
    """
    worst = -math.inf
    singles = -math.inf
    witness: dict = {}
    for u_index, u in enumerate(samples):
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0):
            raise InvalidInputError("log-Harnack needs strictly positive functions")
        for t in t_grid:
            semigroup = lifted_semigroup_matrix(cspace, t)
            lhs = semigroup @ np.log(u)
            rhs = np.log(semigroup @ u)
            denom = 4.0 * interval_integral(2.0 * K, t)
            for k in range(1, cspace.n_max + 1):
                if cspace.sector_size(k) > max_sector:
                    continue
                a, b = cspace.sector_ranges[k]
                gap = lhs[a:b, None] - rhs[None, a:b] - sector_cost_matrix(cspace, k) / denom
                i, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
                if k == 1:
                    singles = max(singles, float(gap[i, j]))
                if gap[i, j] > worst:
                    worst = float(gap[i, j])
                    witness = {"sample": u_index, "t": float(t), "gamma": list(cspace.configs[a + i].occupation), "eta": list(cspace.configs[a + j].occupation)}
    return DefectReport(
        check_id="transport.log_harnack",
        tier="asymptotic",
        max_defect=worst,
        witness=witness,
        details={"K": K, "singleton_defect": singles},
    )
