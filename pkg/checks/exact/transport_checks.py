# checks/exact/transport_checks.py
from core.base_check import BaseCheck, CheckContext
from core.config_space import ConfigMeasure
from core.models import DefectReport
from core.transport import (
    check_distance_metric,
    check_entropy_dissipation,
    check_kwc,
    check_ot_assignment,
    dirac,
    same_sector_pairs,
)


class DistanceMetric(BaseCheck):
    check_id = "transport.distance_metric"
    suite = "transport"
    needs_metric = True

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_distance_metric(ctx.cspace, tolerance=ctx.tolerance(self.check_id, 1e-10))


class OTAssignment(BaseCheck):
    """Exact transport between Dirac measures reproduces the assignment distance,
    including one cross-sector pair where both are infinite."""

    check_id = "transport.ot_vs_assignment"
    suite = "transport"
    needs_metric = True
    needs_transport = True

    def run(self, ctx: CheckContext) -> DefectReport:
        pairs = same_sector_pairs(ctx.cspace, ctx.lab.kwc_pairs, seed=ctx.seed, max_total=ctx.lab.kwc_max_total)
        if ctx.cspace.n_max >= 1:
            pairs.append((ctx.cspace.configs[0], ctx.cspace.configs[1]))
        report = check_ot_assignment(ctx.cspace, pairs, tolerance=ctx.tolerance(self.check_id, 1e-9))
        return report.model_copy(update={"seed": ctx.seed, "details": {"pairs": len(pairs)}})


class KWC(BaseCheck):
    """Kernel Wasserstein contraction with c = 1 on low sectors."""

    check_id = "transport.kwc"
    suite = "kwc"
    needs_metric = True
    needs_transport = True

    def run(self, ctx: CheckContext) -> DefectReport:
        pairs = same_sector_pairs(ctx.cspace, ctx.lab.kwc_pairs, seed=ctx.seed, max_total=ctx.lab.kwc_max_total)
        report = check_kwc(
            ctx.cspace,
            lambda t: 1.0,
            ctx.t_grid,
            pairs,
            tolerance=ctx.tolerance(self.check_id, 1e-8),
            limit=ctx.lab.ot_sector_limit,
        )
        return report.model_copy(update={"seed": ctx.seed})


class EntropyDissipation(BaseCheck):
    """Entropy of an evolving mixture of a Dirac mass and the normalized Poisson measure."""

    check_id = "transport.entropy_dissipation"
    suite = "entropy"

    def run(self, ctx: CheckContext) -> DefectReport:
        ref = ctx.poisson()
        start = ctx.cspace.configs[1] if len(ctx.cspace) > 1 else ctx.cspace.configs[0]
        point = dirac(ctx.cspace, start)
        mu0 = ConfigMeasure(weights=0.5 * point.weights + 0.5 * ref.weights / ref.mass, kind="mixture_start")
        report = check_entropy_dissipation(ctx.cspace, mu0, ref, ctx.t_grid, tolerance=ctx.tolerance(self.check_id, 1e-8))
        return report.model_copy(update={"witness": {"start": list(start.occupation)}})
