# checks/controls/negative_controls.py
"""Checks that must FAIL their underlying identity by a known margin."""
import math
from typing import Optional

from core.base_check import BaseCheck, CheckContext, Refusal
from core.models import DefectReport
from core.transport import dirac, wasserstein_config
from verify.suites import check_be_inflated, mecke_under_mixture


class BEInflated(BaseCheck):
    check_id = "be.inflated_K"
    suite = "be"
    negative_control = True

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_be_inflated(
            ctx.base,
            ctx.cspace,
            ctx.K,
            ctx.config.c,
            ctx.t_grid,
            ctx.f_samples(),
            ctx.be_functions(),
            inflation=ctx.lab.be_inflation,
            margin_factor=ctx.lab.be_margin_factor,
        )


class MeckeMixture(BaseCheck):
    check_id = "mixed.mecke"
    suite = "mixed"
    negative_control = True

    def run(self, ctx: CheckContext) -> DefectReport:
        mspace, _ = ctx.measure_space()
        return mecke_under_mixture(ctx.base, ctx.config.mixture, mspace, margin_factor=ctx.lab.be_margin_factor)


class CrossSectorTransport(BaseCheck):
    """Dirac masses with different particle numbers sit at infinite distance."""

    check_id = "transport.cross_sector"
    suite = "transport"
    negative_control = True
    needs_metric = True

    def refusal_reason(self, ctx: CheckContext) -> Optional[Refusal]:
        if ctx.cspace.n_max < 1:
            return "precondition", "needs configurations with at least one particle"
        return super().refusal_reason(ctx)

    def run(self, ctx: CheckContext) -> DefectReport:
        top = min(ctx.cspace.n_max, 2)
        gamma = ctx.cspace.configs[ctx.cspace.sector(top - 1).start]
        eta = ctx.cspace.configs[ctx.cspace.sector(top).start]
        plan = wasserstein_config(ctx.cspace, dirac(ctx.cspace, gamma), dirac(ctx.cspace, eta), limit=ctx.lab.ot_sector_limit)
        return DefectReport(
            check_id=self.check_id,
            tier=self.tier,
            max_defect=plan.distance,
            negative_control=True,
            margin=1.0,
            witness={"gamma": list(gamma.occupation), "eta": list(eta.occupation)},
            details={"infinite": math.isinf(plan.distance)},
        )
