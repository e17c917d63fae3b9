# checks/exact/base_checks.py
"""Base-space batteries: sub-Markov property, the sampled gradient-estimate
constant against the exact one, and the two-particle tensorization step."""
from core.base_check import BaseCheck, CheckContext
from core.base_space import check_sub_markov_base
from core.models import DefectReport
from verify.suites import check_tensor_be


class BaseSubMarkov(BaseCheck):
    check_id = "base.sub_markov"
    suite = "base"

    def run(self, ctx: CheckContext) -> DefectReport:
        report = check_sub_markov_base(ctx.base, ctx.t_grid, ctx.config.sample_count, ctx.seed)
        return report.model_copy(update={"tolerance": ctx.tolerance(self.check_id, report.tolerance)})


class BEConstant(BaseCheck):
    """Bisection on the sampled functions never lands below the all-function constant."""

    check_id = "base.be_constant"
    suite = "base"

    def run(self, ctx: CheckContext) -> DefectReport:
        sampled = ctx.be_result()
        exact = ctx.exact_be()
        gap = max(exact.K_best - sampled.K_best - sampled.tolerance, 0.0)
        return DefectReport(
            check_id=self.check_id,
            tier=self.tier,
            max_defect=gap,
            tolerance=ctx.tolerance(self.check_id, 1e-9),
            witness=sampled.witness,
            details={"K_best": sampled.K_best, "K_exact": exact.K_best, "c": sampled.c, "defect_at_K_best": sampled.max_defect},
        )


class TensorBE(BaseCheck):
    check_id = "be.tensor"
    suite = "be"

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_tensor_be(
            ctx.base,
            ctx.K,
            ctx.config.c,
            ctx.t_grid,
            count=ctx.config.sample_count,
            seed=ctx.seed,
            tolerance=ctx.tolerance(self.check_id, 1e-9),
        )
