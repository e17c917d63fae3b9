# checks/exact/measure_checks.py
"""Measure battery on the enlarged enumeration from ``CheckContext.measure_space``."""
import math

import numpy as np
from scipy.stats import multinomial, poisson

from core.base_check import BaseCheck, CheckContext
from core.config_space import (
    check_independence,
    check_laplace,
    check_mecke,
    check_star_isometry,
    check_star_order,
    poisson_weights,
)
from core.models import DefectReport


def _nonlinear_u(occ: np.ndarray, x: int) -> np.ndarray:
    return (1.0 + x) / (1.0 + occ.sum(axis=1))


class PoissonWeights(BaseCheck):
    """Enumerated weights against Poisson(s mX) x multinomial(k, m / mX), and mass + tail = 1."""

    check_id = "measures.poisson_weights"
    suite = "measures"

    def run(self, ctx: CheckContext) -> DefectReport:
        mspace, s = ctx.measure_space()
        mu = poisson_weights(mspace, s)
        base = mspace.base
        lam = s * base.total_mass
        p = base.weights / base.total_mass
        worst = 0.0
        for k in range(mspace.n_max + 1):
            rows = mspace.sector(k)
            if k == 0:
                closed = np.array([math.exp(-lam)])
            else:
                closed = poisson.pmf(k, lam) * multinomial.pmf(mspace.occupations[rows.start : rows.stop], k, p)
            worst = max(worst, float(np.abs(mu.weights[rows.start : rows.stop] - closed).max(initial=0.0)))
        mass_gap = abs(mu.mass + mu.tail - 1.0)
        return DefectReport(
            check_id=self.check_id,
            tier=self.tier,
            max_defect=max(worst, mass_gap),
            tolerance=ctx.tolerance(self.check_id, 1e-12),
            details={"weights": worst, "mass_plus_tail": mass_gap, "n_max": mspace.n_max, "s": s},
        )


class Mecke(BaseCheck):
    check_id = "measures.mecke"
    suite = "measures"

    def run(self, ctx: CheckContext) -> DefectReport:
        mspace, s = ctx.measure_space()
        return check_mecke(mspace, poisson_weights(mspace, s), _nonlinear_u, seed=ctx.seed, tolerance=ctx.tolerance(self.check_id, 1e-10))


class MeckeMonteCarlo(BaseCheck):
    """Sampled Mecke residual within three standard errors; sample count shrinks on large bases."""

    check_id = "measures.mecke_montecarlo"
    suite = "measures"

    def run(self, ctx: CheckContext) -> DefectReport:
        mspace, s = ctx.measure_space()
        samples = min(ctx.lab.mecke_samples, max(10**4, 2 * 10**7 // mspace.base.n))
        return check_mecke(mspace, poisson_weights(mspace, s), _nonlinear_u, mode="montecarlo", samples=samples, seed=ctx.seed)


class Laplace(BaseCheck):
    check_id = "measures.laplace"
    suite = "measures"

    def run(self, ctx: CheckContext) -> DefectReport:
        mspace, s = ctx.measure_space()
        rng = np.random.Generator(np.random.Philox(ctx.seed))
        tol = ctx.tolerance(self.check_id, 1e-10)
        reports = []
        for k in range(4):
            f = rng.uniform(-math.log(2.0), math.log(2.0), mspace.base.n)
            report = check_laplace(mspace, s, f, tolerance=tol)
            reports.append(report.model_copy(update={"witness": {"sample": k}, "seed": ctx.seed}))
        return max(reports, key=lambda r: r.max_defect - r.tail_bound)


class StarIsometry(BaseCheck):
    check_id = "measures.star_isometry"
    suite = "measures"

    def run(self, ctx: CheckContext) -> DefectReport:
        mspace, s = ctx.measure_space()
        mu = poisson_weights(mspace, s)
        tol = ctx.tolerance(self.check_id, 1e-10)
        reports = [check_star_isometry(mspace, mu, f, tolerance=tol) for f in ctx.f_samples()]
        return max(reports, key=lambda r: r.max_defect - r.tail_bound)


class StarOrder(BaseCheck):
    check_id = "measures.star_order"
    suite = "measures"

    def run(self, ctx: CheckContext) -> DefectReport:
        rng = np.random.Generator(np.random.Philox(ctx.seed))
        worst = DefectReport(check_id=self.check_id, tier=self.tier, max_defect=0.0)
        for f in ctx.f_samples():
            g = f + rng.uniform(0.0, 1.0, ctx.base.n)
            report = check_star_order(ctx.cspace, f, g)
            if report.max_defect > worst.max_defect:
                worst = report
        return worst.model_copy(update={"tolerance": ctx.tolerance(self.check_id, 0.0)})


class Independence(BaseCheck):
    """Counts on the first half of the states and on the rest are independent Poisson variables."""

    check_id = "measures.independence"
    suite = "measures"

    def run(self, ctx: CheckContext) -> DefectReport:
        mspace, s = ctx.measure_space()
        half = max(mspace.base.n // 2, 1)
        A = list(range(half))
        B = list(range(half, mspace.base.n))
        return check_independence(mspace, poisson_weights(mspace, s), A, B, tolerance=ctx.tolerance(self.check_id, 1e-12))
