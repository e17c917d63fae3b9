"""Independent-particle dynamics lifted to configuration space.

The lifted generator moves one particle at a time,

    (L u)(gamma) = sum_x gamma_x sum_y Q[x,y] (u(gamma - delta_x + delta_y) - u(gamma)),

and never changes the particle count, so every matrix below is block diagonal
by sector. The heat semigroup has two independent realizations: the
sector-wise matrix exponential of ``L`` and the product heat kernel obtained
by pushing each particle through the base kernel.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd
import scipy.linalg
import scipy.sparse as sp

from core.base_space import BaseFunction, semigroup_matrix
from core.config_space import ConfigMeasure, ConfigSpace, Configuration
from core.errors import InvalidInputError
from core.models import DefectReport
from data.io_utils import write_frame_csv

logger = logging.getLogger(__name__)

ConfigFunction = npt.NDArray[np.float64]


def transition_edges(cspace: ConfigSpace) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Off-diagonal entries (i, j, rate) of the lifted generator."""

    def build():
        q = cspace.base.generator
        n = cspace.base.n
        neighbours = [[(y, q[x, y]) for y in range(n) if y != x and q[x, y] > 0] for x in range(n)]
        rows: List[int] = []
        cols: List[int] = []
        rates: List[float] = []
        for i, config in enumerate(cspace.configs):
            occ = config.occupation
            for x, k in enumerate(occ):
                if k == 0:
                    continue
                for y, rate in neighbours[x]:
                    target = list(occ)
                    target[x] -= 1
                    target[y] += 1
                    rows.append(i)
                    cols.append(cspace.index[tuple(target)])
                    rates.append(k * rate)
        return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64), np.asarray(rates, dtype=float)

    return cspace.cached(("edges", 0.0), build)


def lifted_generator_matrix(cspace: ConfigSpace) -> sp.csr_matrix:
    def build():
        rows, cols, rates = transition_edges(cspace)
        size = len(cspace)
        off = sp.csr_matrix((rates, (rows, cols)), shape=(size, size))
        diag = cspace.occupations @ np.diag(cspace.base.generator)
        return (off + sp.diags(diag)).tocsr()

    return cspace.cached(("generator", 0.0), build)


def lifted_generator_apply(cspace: ConfigSpace, u: ConfigFunction) -> ConfigFunction:
    u = _as_config_function(cspace, u)
    return lifted_generator_matrix(cspace) @ u


def _as_config_function(cspace: ConfigSpace, u: Sequence[float] | ConfigFunction) -> ConfigFunction:
    arr = np.asarray(u, dtype=float)
    if arr.shape != (len(cspace),):
        raise InvalidInputError(f"configuration function has shape {arr.shape}, expected ({len(cspace)},)")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("configuration function entries must be finite")
    return arr


def random_config_functions(cspace: ConfigSpace, count: int, seed: int = 7, positive: bool = False) -> List[ConfigFunction]:
    """Seeded standard-normal tables (exponentiated when ``positive``)."""
    rng = np.random.Generator(np.random.Philox(seed))
    samples = [rng.standard_normal(len(cspace)) for _ in range(count)]
    return [np.exp(0.5 * u) for u in samples] if positive else samples


def kernel_config_row(cspace: ConfigSpace, gamma: Configuration, t: float) -> ConfigMeasure:
    """Heat kernel measure h_t(gamma, .) by sequential single-particle convolution."""
    if gamma.total > cspace.n_max:
        raise InvalidInputError(f"configuration with {gamma.total} particles exceeds n_max={cspace.n_max}")
    h = semigroup_matrix(cspace.base, t)
    weights = np.zeros(len(cspace))
    weights[cspace.position(Configuration.empty(cspace.base.n))] = 1.0
    for k, x in enumerate(gamma.particles()):
        sources = np.arange(*cspace.sector_ranges[k])
        targets = cspace.successor[sources]
        pushed = np.zeros(len(cspace))
        np.add.at(pushed, targets.ravel(), (weights[sources][:, None] * h[x][None, :]).ravel())
        weights = pushed
    return ConfigMeasure(weights=weights, tail=0.0, kind="kernel_row", params={"gamma": list(gamma.occupation), "t": float(t)})


def kernel_permanent(cspace: ConfigSpace, gamma: Configuration, eta: Configuration, t: float) -> float:
    """h_t(gamma, eta) = perm(H[x_i, y_j]) / prod_y eta_y!  (brute force, totals <= 3)."""
    if gamma.total != eta.total:
        return 0.0
    if gamma.total > 3:
        raise InvalidInputError("permanent cross-check is limited to totals <= 3")
    h = semigroup_matrix(cspace.base, t)
    xs, ys = gamma.particles(), eta.particles()
    perm = sum(math.prod(h[x, ys[j]] for x, j in zip(xs, sigma)) for sigma in itertools.permutations(range(len(ys))))
    return perm / math.prod(math.factorial(k) for k in eta.occupation)


def lifted_semigroup_matrix(cspace: ConfigSpace, t: float, method: str = "expm") -> sp.csr_matrix:
    """T_t as a block-diagonal matrix, either exp(t L) per sector or stacked kernel rows."""
    if t < 0:
        raise InvalidInputError(f"time must be nonnegative (got {t!r})")
    if method not in ("expm", "kernel"):
        raise InvalidInputError(f"unknown semigroup method {method!r}")

    def build():
        blocks = []
        if method == "expm":
            generator = lifted_generator_matrix(cspace)
            for a, b in cspace.sector_ranges:
                block = generator[a:b, a:b].toarray()
                blocks.append(scipy.linalg.expm(t * block))
        else:
            for a, b in cspace.sector_ranges:
                blocks.append(np.vstack([kernel_config_row(cspace, cspace.configs[i], t).weights[a:b] for i in range(a, b)]))
        return sp.block_diag(blocks, format="csr")

    return cspace.cached((method, float(t)), build)


def lifted_semigroup_apply(cspace: ConfigSpace, u: ConfigFunction, t: float) -> ConfigFunction:
    """(T_t u)(gamma) = sum_eta h_t(gamma, eta) u(eta)."""
    u = _as_config_function(cspace, u)
    return lifted_semigroup_matrix(cspace, t, method="kernel") @ u


@dataclass(frozen=True)
class ExpCylinder:
    """gamma -> prod_x (1 + f(x))^{gamma_x} = exp(log(1+f)* gamma)."""

    f: Tuple[float, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.f, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= -1.0):
            raise InvalidInputError("exponential cylinder needs finite f with entries > -1")

    @classmethod
    def of(cls, f: Iterable[float]) -> "ExpCylinder":
        return cls(tuple(float(v) for v in f))

    @property
    def array(self) -> BaseFunction:
        return np.asarray(self.f, dtype=float)

    def in_box(self, delta: float) -> bool:
        """The classical constraint -delta <= f <= 0 with delta in (0, 1)."""
        arr = self.array
        return bool(0 < delta < 1 and np.all(arr >= -delta) and np.all(arr <= 0))

    def values(self, cspace: ConfigSpace) -> ConfigFunction:
        return np.exp(cspace.star(np.log1p(self.array)))


def check_semigroup_representation(cspace: ConfigSpace, e: ExpCylinder, t: float, tolerance: float = 1e-10) -> DefectReport:
    """T_t exp(log(1+f)*) = exp(log(1+T_t f)*)."""
    lhs = lifted_semigroup_matrix(cspace, t) @ e.values(cspace)
    h = semigroup_matrix(cspace.base, t)
    rhs = np.exp(cspace.star(np.log1p(h @ e.array)))
    gap = np.abs(lhs - rhs)
    i = int(np.argmax(gap))
    return DefectReport(
        check_id="lift.semigroup_representation",
        tier="exact",
        max_defect=float(gap[i]),
        tolerance=tolerance,
        witness={"config": list(cspace.configs[i].occupation), "t": float(t)},
    )


def check_exp_generator_formula(cspace: ConfigSpace, e: ExpCylinder, tolerance: float = 1e-11) -> DefectReport:
    """L exp(log(1+f)*) = (Lf / (1+f))* exp(log(1+f)*)."""
    values = e.values(cspace)
    lhs = lifted_generator_apply(cspace, values)
    f = e.array
    rhs = cspace.star((cspace.base.generator @ f) / (1.0 + f)) * values
    gap = np.abs(lhs - rhs)
    i = int(np.argmax(gap))
    return DefectReport(
        check_id="lift.exp_generator_formula",
        tier="exact",
        max_defect=float(gap[i]),
        tolerance=tolerance,
        witness={"config": list(cspace.configs[i].occupation)},
    )


def gamma_section(cspace: ConfigSpace, u: ConfigFunction, v: Optional[ConfigFunction] = None) -> ConfigFunction:
    """Lifted square field: 1/2 sum_x gamma_x sum_y Q[x,y] (du)(dv) over single-particle moves."""
    u = _as_config_function(cspace, u)
    v = u if v is None else _as_config_function(cspace, v)
    rows, cols, rates = transition_edges(cspace)
    terms = 0.5 * rates * (u[cols] - u[rows]) * (v[cols] - v[rows])
    return np.bincount(rows, weights=terms, minlength=len(cspace))


def gamma2_section(cspace: ConfigSpace, u: ConfigFunction) -> ConfigFunction:
    """Iterated square field Gamma_2(u) = 1/2 (L Gamma(u) - 2 Gamma(u, L u))."""
    lu = lifted_generator_apply(cspace, u)
    return 0.5 * (lifted_generator_apply(cspace, gamma_section(cspace, u)) - 2.0 * gamma_section(cspace, u, lu))


def check_carre_du_champ(cspace: ConfigSpace, samples: Sequence[ConfigFunction], tolerance: float = 1e-12) -> DefectReport:
    """gamma_section(u) = 1/2 (L(u^2) - 2 u L u)."""
    worst = 0.0
    witness: dict = {}
    for k, u in enumerate(samples):
        direct = gamma_section(cspace, u)
        identity = 0.5 * (lifted_generator_apply(cspace, u * u) - 2.0 * u * lifted_generator_apply(cspace, u))
        gap = np.abs(direct - identity)
        scale = max(1.0, float(np.abs(direct).max()))
        if gap.max() / scale > worst:
            worst = float(gap.max() / scale)
            witness = {"sample": k, "config": list(cspace.configs[int(np.argmax(gap))].occupation)}
    return DefectReport(check_id="lift.carre_du_champ", tier="exact", max_defect=worst, tolerance=tolerance, witness=witness)


def check_selfadjointness(cspace: ConfigSpace, mu: ConfigMeasure, tolerance: float = 1e-11) -> DefectReport:
    """diag(mu) L is symmetric."""
    if np.any(mu.weights <= 0):
        raise InvalidInputError("self-adjointness needs a strictly positive measure on the enumeration")
    weighted = sp.diags(mu.weights) @ lifted_generator_matrix(cspace)
    asym = abs(weighted - weighted.T)
    worst = float(asym.max()) if asym.nnz else 0.0
    return DefectReport(
        check_id="lift.selfadjointness",
        tier="exact",
        max_defect=worst,
        tolerance=tolerance,
        details={"measure": mu.kind},
    )


def check_kernel_identification(cspace: ConfigSpace, t_grid: Sequence[float], tolerance: float = 1e-10) -> DefectReport:
    """Rows of exp(tL) coincide with the product heat kernel rows."""
    worst = 0.0
    witness: dict = {}
    for t in t_grid:
        gap = abs(lifted_semigroup_matrix(cspace, t, "expm") - lifted_semigroup_matrix(cspace, t, "kernel"))
        if gap.nnz and gap.max() > worst:
            worst = float(gap.max())
            i = int(gap.max(axis=1).toarray().ravel().argmax())
            witness = {"config": list(cspace.configs[i].occupation), "t": float(t)}
    return DefectReport(check_id="lift.kernel_identification", tier="exact", max_defect=worst, tolerance=tolerance, witness=witness)


def check_kernel_mass(cspace: ConfigSpace, t_grid: Sequence[float], tolerance: float = 1e-12) -> DefectReport:
    """Every kernel row is a probability measure carried by the sector of its source."""
    worst = 0.0
    leaked = 0.0
    for t in t_grid:
        for k, (a, b) in enumerate(cspace.sector_ranges):
            for i in range(a, b):
                row = kernel_config_row(cspace, cspace.configs[i], t).weights
                worst = max(worst, abs(row.sum() - 1.0))
                leaked = max(leaked, float(row[:a].sum() + row[b:].sum()))
    return DefectReport(
        check_id="lift.kernel_mass",
        tier="exact",
        max_defect=max(worst, leaked),
        tolerance=tolerance,
        details={"mass_defect": worst, "cross_sector_mass": leaked},
    )


def check_kernel_permanent(cspace: ConfigSpace, t: float, tolerance: float = 1e-12, max_sector: int = 120) -> DefectReport:
    """Convolution rows against the permanent formula on sectors with at most 3 particles
    and at most ``max_sector`` configurations."""
    worst = 0.0
    checked = []
    for k in range(min(cspace.n_max, 3) + 1):
        if cspace.sector_size(k) > max_sector:
            continue
        checked.append(k)
        for i in cspace.sector(k):
            row = kernel_config_row(cspace, cspace.configs[i], t).weights
            for j in cspace.sector(k):
                worst = max(worst, abs(row[j] - kernel_permanent(cspace, cspace.configs[i], cspace.configs[j], t)))
    return DefectReport(check_id="lift.kernel_permanent", tier="exact", max_defect=worst, tolerance=tolerance, details={"t": t, "sectors": checked})


def check_intertwining(cspace: ConfigSpace, f_samples: Sequence[BaseFunction], t_grid: Sequence[float], tolerance: float = 1e-12) -> DefectReport:
    """T_t (f*) = (T_t f)*."""
    worst = 0.0
    witness: dict = {}
    for t in t_grid:
        h = semigroup_matrix(cspace.base, t)
        for k, f in enumerate(f_samples):
            lhs = lifted_semigroup_apply(cspace, cspace.star(f), t)
            rhs = cspace.star(h @ f)
            gap = np.abs(lhs - rhs)
            scale = max(1.0, float(np.abs(rhs).max()))
            if gap.max() / scale > worst:
                worst = float(gap.max() / scale)
                witness = {"sample": k, "t": float(t)}
    return DefectReport(check_id="lift.intertwining", tier="exact", max_defect=worst, tolerance=tolerance, witness=witness)


def check_partial_submarkov(cspace: ConfigSpace, t_grid: Sequence[float], count: int = 16, seed: int = 7) -> DefectReport:
    """One-coordinate partial semigroups on labeled two-particle tables keep [0, 1] tables in [0, 1]."""
    rng = np.random.Generator(np.random.Philox(seed))
    n = cspace.base.n
    worst = 0.0
    for t in t_grid:
        h = semigroup_matrix(cspace.base, t)
        for _ in range(count):
            table = rng.uniform(0.0, 1.0, (n, n))
            for moved in (h @ table, table @ h.T):
                worst = max(worst, float(-moved.min()), float(moved.max() - 1.0))
    return DefectReport(check_id="lift.partial_submarkov", tier="exact", max_defect=max(worst, 0.0), tolerance=1e-12, seed=seed)


def check_lp_contraction(
    cspace: ConfigSpace,
    mu: ConfigMeasure,
    t_grid: Sequence[float],
    samples: Sequence[ConfigFunction],
    p_values: Sequence[float] = (1.0, 2.0, 4.0, math.inf),
    tolerance: float = 1e-12,
) -> DefectReport:
    """||T_t u||_{L^p(mu)} <= ||u||_{L^p(mu)} for sector-wise invariant mu."""

    def norm(values: np.ndarray, p: float) -> float:
        if math.isinf(p):
            return float(np.abs(values[mu.weights > 0]).max())
        return float(np.dot(mu.weights, np.abs(values) ** p) ** (1.0 / p))

    worst = -math.inf
    witness: dict = {}
    for t in t_grid:
        for k, u in enumerate(samples):
            moved = lifted_semigroup_apply(cspace, u, t)
            for p in p_values:
                gap = norm(moved, p) - norm(u, p)
                if gap > worst:
                    worst = gap
                    witness = {"sample": k, "t": float(t), "p": "inf" if math.isinf(p) else p}
    return DefectReport(
        check_id="lift.lp_contraction",
        tier="exact",
        max_defect=max(worst, 0.0),
        tolerance=tolerance,
        witness=witness,
        details={"measure": mu.kind},
    )


def check_weak_bochner(
    cspace: ConfigSpace,
    mu: ConfigMeasure,
    K: float,
    samples: Sequence[ConfigFunction],
    seed: int = 7,
) -> DefectReport:
    """int Gamma_2(u) v dmu >= K int Gamma(u) v dmu for v >= 0; reports K-side minus Gamma_2-side."""
    rng = np.random.Generator(np.random.Philox(seed))
    worst = -math.inf
    witness: dict = {}
    for k, u in enumerate(samples):
        g2 = gamma2_section(cspace, u)
        g1 = gamma_section(cspace, u)
        v = rng.uniform(0.0, 1.0, len(cspace))
        gap = K * mu.integrate(g1 * v) - mu.integrate(g2 * v)
        if gap > worst:
            worst = float(gap)
            witness = {"sample": k}
    return DefectReport(check_id="lift.weak_bochner", tier="asymptotic", max_defect=worst, witness=witness, seed=seed, details={"K": K})


def export_generator_csv(cspace: ConfigSpace, path: str | Path) -> Path:
    """Lifted generator as sorted (row, col, value) coordinates."""
    coo = lifted_generator_matrix(cspace).tocoo()
    frame = pd.DataFrame({"row": coo.row, "col": coo.col, "value": coo.data}).sort_values(["row", "col"])
    return write_frame_csv(frame, path)
