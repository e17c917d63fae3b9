"""Theorem suites: gradient-estimate transfer between base and configuration
space, the mixed Poisson extension and the sector structure of the lifted dynamics."""
from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from core.base_space import BaseFunction, FiniteBaseSpace, be_defect, best_be_constant, semigroup_matrix, square_field
from core.config_space import ConfigSpace, check_mecke, mecke_mixture_gap, mixed_poisson_weights
from core.errors import InvalidInputError
from core.lift import check_selfadjointness, gamma_section, lifted_generator_matrix, lifted_semigroup_matrix
from core.models import DefectReport, LevyMixture
from core.transport import config_distance

logger = logging.getLogger(__name__)

BE_TOLERANCE = 1e-9


def config_be_defect(
    cspace: ConfigSpace,
    K: float,
    c: float,
    t_grid: Sequence[float],
    samples: Sequence[np.ndarray],
    weights: Optional[np.ndarray] = None,
) -> Tuple[float, dict]:
    """max over u, t, gamma of Gamma(T_t u) - c e^{-2Kt} T_t Gamma(u).

    With ``weights`` only configurations of positive weight count.
    """
    worst = -math.inf
    witness: dict = {}
    mask = np.ones(len(cspace), dtype=bool) if weights is None else weights > 0
    for t in t_grid:
        semigroup = lifted_semigroup_matrix(cspace, t)
        factor = c * math.exp(-2.0 * K * t)
        for k, u in enumerate(samples):
            lhs = gamma_section(cspace, semigroup @ u)
            rhs = factor * (semigroup @ gamma_section(cspace, u))
            gap = np.where(mask, lhs - rhs, -math.inf)
            i = int(np.argmax(gap))
            if gap[i] > worst:
                worst = float(gap[i])
                witness = {"sample": k, "t": float(t), "config": list(cspace.configs[i].occupation)}
    return worst, witness


def suite_be_transfer(
    base: FiniteBaseSpace,
    cspace: ConfigSpace,
    c: float,
    t_grid: Sequence[float],
    f_samples: Sequence[BaseFunction],
    u_samples: Sequence[np.ndarray],
    K: Optional[float] = None,
    seed: int = 7,
    tolerance: float = BE_TOLERANCE,
) -> Tuple[DefectReport, DefectReport]:
    """Forward (base constant holds on configurations) and backward (star functions
    recover the base inequality) directions of the gradient-estimate transfer."""
    base.require_irreducible()
    if K is None:
        K = best_be_constant(base, c, t_grid, f_samples, seed=seed).K_best
    if not math.isfinite(K):
        raise InvalidInputError("BE constant is not finite")
    worst, witness = config_be_defect(cspace, K, c, t_grid, u_samples)
    forward = DefectReport(
        check_id="be.forward",
        tier="exact",
        max_defect=max(worst, 0.0),
        tolerance=tolerance,
        witness=witness,
        seed=seed,
        details={"K": K, "c": c, "raw_defect": worst, "samples": len(u_samples)},
    )

    star_samples = [cspace.star(f) for f in f_samples]
    lifted, _ = config_be_defect(cspace, K, c, t_grid, star_samples)
    field_gap = max(float(np.abs(gamma_section(cspace, cspace.star(f)) - cspace.star(square_field(base, f, f))).max()) for f in f_samples)
    base_level = be_defect(base, K, c, t_grid, f_samples)
    singleton_gap = 0.0
    if cspace.n_max >= 1:
        # on one-particle configurations the lifted inequality is the base one
        singles = (cspace.totals == 1).astype(float)
        restricted, _ = config_be_defect(cspace, K, c, t_grid, star_samples, weights=singles)
        singleton_gap = abs(restricted - base_level)
    backward = DefectReport(
        check_id="be.backward",
        tier="exact",
        max_defect=max(lifted, 0.0) + field_gap + singleton_gap,
        tolerance=tolerance,
        seed=seed,
        details={"K": K, "c": c, "base_defect": base_level, "square_field_gap": field_gap, "singleton_gap": singleton_gap},
    )
    logger.info("BE transfer K=%.6f: forward %.3g backward %.3g", K, forward.max_defect, backward.max_defect)
    return forward, backward


def check_be_inflated(
    base: FiniteBaseSpace,
    cspace: ConfigSpace,
    K: float,
    c: float,
    t_grid: Sequence[float],
    f_samples: Sequence[BaseFunction],
    u_samples: Sequence[np.ndarray],
    inflation: float = 0.1,
    margin_factor: float = 0.9,
) -> DefectReport:
    """Negative control: the configuration inequality must break at K + inflation.

    The margin is ``margin_factor`` times the base-level violation on the same
    base samples; star functions of those samples must be among ``u_samples``.
    """
    inflated = K + inflation
    margin = margin_factor * max(be_defect(base, inflated, c, t_grid, f_samples), 0.0)
    worst, witness = config_be_defect(cspace, inflated, c, t_grid, u_samples)
    return DefectReport(
        check_id="be.inflated_K",
        tier="exact",
        max_defect=worst,
        negative_control=True,
        margin=margin,
        witness=witness,
        details={"K": K, "K_inflated": inflated},
    )


def check_tensor_be(
    base: FiniteBaseSpace,
    K: float,
    c: float,
    t_grid: Sequence[float],
    count: int = 16,
    seed: int = 7,
    tolerance: float = BE_TOLERANCE,
) -> DefectReport:
    """Two labeled particles: Gamma^(1)((T x T) U) <= c e^{-2Kt} (T x T) Gamma^(1)(U)."""
    rng = np.random.Generator(np.random.Philox(seed))
    q = base.generator

    def first_field(table: np.ndarray) -> np.ndarray:
        # 1/2 sum_z Q[x,z] (U[z,y] - U[x,y])^2
        diff = table[None, :, :] - table[:, None, :]
        return 0.5 * np.einsum("xz,xzy->xy", q, diff**2)

    worst = -math.inf
    witness: dict = {}
    for t in t_grid:
        h = semigroup_matrix(base, t)
        factor = c * math.exp(-2.0 * K * t)
        for k in range(count):
            table = rng.standard_normal((base.n, base.n))
            gap = first_field(h @ table @ h.T) - factor * (h @ first_field(table) @ h.T)
            if gap.max() > worst:
                worst = float(gap.max())
                witness = {"sample": k, "t": float(t)}
    return DefectReport(
        check_id="be.tensor",
        tier="exact",
        max_defect=max(worst, 0.0),
        tolerance=tolerance,
        witness=witness,
        seed=seed,
        details={"K": K, "raw_defect": worst},
    )


def suite_mixed_poisson(
    base: FiniteBaseSpace,
    cspace: ConfigSpace,
    levy: LevyMixture,
    K: float,
    c: float,
    t_grid: Sequence[float],
    u_samples: Sequence[np.ndarray],
    measure_space: Optional[ConfigSpace] = None,
    tolerance: float = BE_TOLERANCE,
) -> List[DefectReport]:
    """Gradient estimate under the mixture, self-adjointness in L2(mu), and Mecke
    (a negative control unless the mixture is a single atom)."""
    if not levy.atoms:
        raise InvalidInputError("empty mixture")
    mu = mixed_poisson_weights(cspace, levy)
    worst, witness = config_be_defect(cspace, K, c, t_grid, u_samples, weights=mu.weights)
    be = DefectReport(
        check_id="mixed.be",
        tier="exact",
        max_defect=max(worst, 0.0),
        tolerance=tolerance,
        witness=witness,
        details={"K": K, "atoms": [(a.s, a.w) for a in levy.atoms]},
    )
    adjoint = check_selfadjointness(cspace, mu).model_copy(update={"check_id": "mixed.selfadjointness"})
    return [be, adjoint, mecke_under_mixture(base, levy, measure_space or cspace)]


def scaled_mixture(base: FiniteBaseSpace, levy: LevyMixture, mass_cap: float = 3.0) -> LevyMixture:
    """Shrink every atom by one factor so that s * mX <= mass_cap for all atoms."""
    top = max(a.s for a in levy.atoms) * base.total_mass
    factor = min(1.0, mass_cap / top)
    return LevyMixture.from_pairs([(a.s * factor, a.w) for a in levy.atoms])


def mecke_under_mixture(base: FiniteBaseSpace, levy: LevyMixture, mspace: ConfigSpace, margin_factor: float = 0.9) -> DefectReport:
    """Mecke with u(gamma, x) = gamma X and the mean scaling on the right-hand side.

    Under a proper mixture the gap is mX^2 Var(s); a single atom must pass.
    """
    scaled = scaled_mixture(base, levy)
    mu = mixed_poisson_weights(mspace, scaled)

    def count_all(occ: np.ndarray, x: int) -> np.ndarray:
        return occ.sum(axis=1).astype(float)

    if scaled.is_degenerate:
        report = check_mecke(mspace, mu, count_all)
        return report.model_copy(update={"check_id": "mixed.mecke"})
    gap = mecke_mixture_gap(base, scaled)
    report = check_mecke(mspace, mu, count_all, s=scaled.mean, negative_control=True, margin=margin_factor * gap)
    details = dict(report.details)
    details.update({"analytic_gap": gap, "atoms": [(a.s, a.w) for a in scaled.atoms]})
    return report.model_copy(update={"check_id": "mixed.mecke", "details": details})


def suite_irreducibility(cspace: ConfigSpace, pair_limit: int = 64, dense_limit: int = 600) -> DefectReport:
    """Kernel of the lifted generator is spanned by the sector indicators.

    Reports the kernel dimension, the worst non-constancy of a kernel vector
    inside its sector and any finite cross-sector distance among tested pairs.
    Sectors above ``dense_limit`` count closed communicating classes instead of
    computing a dense null space.
    """
    cspace.base.require_irreducible()
    generator = lifted_generator_matrix(cspace)
    dimension = 0
    spread = 0.0
    per_sector: Dict[int, int] = {}
    for k, (a, b) in enumerate(cspace.sector_ranges):
        if b - a > dense_limit:
            classes, _ = connected_components(generator[a:b, a:b], directed=True, connection="strong")
            per_sector[k] = int(classes)
            dimension += classes
            continue
        kernel = scipy.linalg.null_space(generator[a:b, a:b].toarray(), rcond=1e-10)
        per_sector[k] = int(kernel.shape[1])
        dimension += kernel.shape[1]
        for v in kernel.T:
            spread = max(spread, float(v.max() - v.min()) / max(float(np.abs(v).max()), 1e-300))
    # cross-sector coupling inside the generator
    leak = 0.0
    coo = generator.tocoo()
    totals = cspace.totals
    if coo.nnz:
        leak = float(np.abs(coo.data[totals[coo.row] != totals[coo.col]]).max(initial=0.0))
    finite_cross = 0
    if cspace.base.metric is not None:
        tested = 0
        for k in range(cspace.n_max):
            for i in list(cspace.sector(k))[:4]:
                for j in list(cspace.sector(k + 1))[:4]:
                    if tested >= pair_limit:
                        break
                    tested += 1
                    if config_distance(cspace.base, cspace.configs[i], cspace.configs[j]).is_finite:
                        finite_cross += 1
    sectors = cspace.n_max + 1
    return DefectReport(
        check_id="structure.irreducibility",
        tier="exact",
        max_defect=float(abs(dimension - sectors)) + spread + leak + finite_cross,
        tolerance=1e-8,
        details={"kernel_dimension": dimension, "sectors": sectors, "per_sector": per_sector, "spread": spread, "cross_sector_rate": leak, "finite_cross_sector": finite_cross},
    )
