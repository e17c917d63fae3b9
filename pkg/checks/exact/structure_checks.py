# checks/exact/structure_checks.py
"""Gradient-estimate transfer, its mixed-Poisson extension and the sector structure."""
from typing import List, Tuple

from core.base_check import BaseCheck, CheckContext
from core.models import DefectReport
from verify.suites import suite_be_transfer, suite_irreducibility, suite_mixed_poisson


def be_transfer(ctx: CheckContext) -> Tuple[DefectReport, DefectReport]:
    """Forward and backward reports, computed once per context."""
    return ctx.shared(
        "be_transfer",
        lambda: suite_be_transfer(
            ctx.base,
            ctx.cspace,
            ctx.config.c,
            ctx.t_grid,
            ctx.f_samples(),
            ctx.be_functions(),
            K=ctx.K,
            seed=ctx.seed,
            tolerance=ctx.tolerance("be.forward", 1e-9),
        ),
    )


def mixed_suite(ctx: CheckContext) -> List[DefectReport]:
    return ctx.shared(
        "mixed_suite",
        lambda: suite_mixed_poisson(
            ctx.base,
            ctx.cspace,
            ctx.config.mixture,
            ctx.K,
            ctx.config.c,
            ctx.t_grid,
            ctx.be_functions(),
            measure_space=ctx.measure_space()[0],
            tolerance=ctx.tolerance("mixed.be", 1e-9),
        ),
    )


def _pick(reports: List[DefectReport], check_id: str) -> DefectReport:
    return next(r for r in reports if r.check_id == check_id)


class Irreducibility(BaseCheck):
    check_id = "structure.irreducibility"
    suite = "structure"

    def run(self, ctx: CheckContext) -> DefectReport:
        report = suite_irreducibility(ctx.cspace)
        return report.model_copy(update={"tolerance": ctx.tolerance(self.check_id, report.tolerance)})


class BEForward(BaseCheck):
    check_id = "be.forward"
    suite = "be"

    def run(self, ctx: CheckContext) -> DefectReport:
        return be_transfer(ctx)[0]


class BEBackward(BaseCheck):
    check_id = "be.backward"
    suite = "be"

    def run(self, ctx: CheckContext) -> DefectReport:
        forward, backward = be_transfer(ctx)
        return backward.model_copy(update={"tolerance": ctx.tolerance(self.check_id, forward.tolerance)})


class MixedBE(BaseCheck):
    check_id = "mixed.be"
    suite = "mixed"

    def run(self, ctx: CheckContext) -> DefectReport:
        return _pick(mixed_suite(ctx), self.check_id)


class MixedSelfadjoint(BaseCheck):
    check_id = "mixed.selfadjointness"
    suite = "mixed"

    def run(self, ctx: CheckContext) -> DefectReport:
        report = _pick(mixed_suite(ctx), self.check_id)
        return report.model_copy(update={"tolerance": ctx.tolerance(self.check_id, report.tolerance)})
