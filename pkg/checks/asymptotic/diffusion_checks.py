# checks/asymptotic/diffusion_checks.py
"""Statements that need the chain rule. On a finite base they carry a defect
that shrinks under circle refinement; the value is reported, never judged."""
from typing import Optional

import numpy as np

from core.base_check import BaseCheck, CheckContext, Refusal
from core.base_space import check_log_harnack_base
from core.cylinder import CylinderFunction, check_cylinder_gamma, check_cylinder_generator_formula, power, var
from core.lift import check_weak_bochner, kernel_config_row
from core.models import DefectReport
from core.transport import check_entropy_cost, check_evi, check_log_harnack_config, dirac

# time at which the kernel row used as the EVI / entropy-cost target is taken
TARGET_TIME = 1.0


def _inner_function(ctx: CheckContext) -> np.ndarray:
    samples = ctx.f_samples()
    return samples[min(ctx.base.n, len(samples) - 1)]


class CylinderGenerator(BaseCheck):
    check_id = "lift.cylinder_generator"
    tier = "asymptotic"
    suite = "cylinder"

    def run(self, ctx: CheckContext) -> DefectReport:
        u = CylinderFunction.of([_inner_function(ctx)], power(var(0), 3))
        return check_cylinder_generator_formula(ctx.cspace, u)


class CylinderGamma(BaseCheck):
    check_id = "lift.cylinder_gamma"
    tier = "asymptotic"
    suite = "cylinder"

    def run(self, ctx: CheckContext) -> DefectReport:
        u = CylinderFunction.of([_inner_function(ctx)], power(var(0), 2))
        return check_cylinder_gamma(ctx.cspace, u)


class WeakBochner(BaseCheck):
    check_id = "lift.weak_bochner"
    tier = "asymptotic"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_weak_bochner(ctx.cspace, ctx.poisson(), ctx.K, ctx.config_samples(), seed=ctx.seed)


class LogHarnackBase(BaseCheck):
    check_id = "base.log_harnack"
    tier = "asymptotic"
    suite = "harnack"
    needs_metric = True

    def run(self, ctx: CheckContext) -> DefectReport:
        positive = [np.exp(f) for f in ctx.f_samples()]
        return check_log_harnack_base(ctx.base, ctx.K, ctx.t_grid, positive)


def config_log_harnack(ctx: CheckContext) -> DefectReport:
    return ctx.shared(
        "log_harnack_config",
        lambda: check_log_harnack_config(ctx.cspace, ctx.K, ctx.t_grid, ctx.positive_samples(), max_sector=ctx.lab.ot_sector_limit),
    )


class LogHarnackConfig(BaseCheck):
    check_id = "transport.log_harnack"
    tier = "asymptotic"
    suite = "harnack"
    needs_metric = True

    def run(self, ctx: CheckContext) -> DefectReport:
        return config_log_harnack(ctx)


class MixedLogHarnack(BaseCheck):
    """The configuration log-Harnack bound is pointwise, so it carries over to
    every configuration charged by the mixed Poisson measure."""

    check_id = "mixed.log_harnack"
    tier = "asymptotic"
    suite = "mixed"
    needs_metric = True

    def run(self, ctx: CheckContext) -> DefectReport:
        report = config_log_harnack(ctx)
        details = dict(report.details)
        details.update({"atoms": [(a.s, a.w) for a in ctx.config.mixture.atoms], "mixture_mass": ctx.mixture().mass})
        return report.model_copy(update={"check_id": self.check_id, "details": details})


class _OneParticleFlow(BaseCheck):
    """Curves started from a one-particle Dirac mass, compared with a kernel row."""

    tier = "asymptotic"
    suite = "transport"
    needs_metric = True
    needs_transport = True

    def refusal_reason(self, ctx: CheckContext) -> Optional[Refusal]:
        if ctx.cspace.n_max < 1:
            return "precondition", "needs configurations with at least one particle"
        return super().refusal_reason(ctx)

    def endpoints(self, ctx: CheckContext):
        start = ctx.cspace.configs[ctx.cspace.sector(1).start]
        other = ctx.cspace.configs[ctx.cspace.sector(1).stop - 1]
        return start, dirac(ctx.cspace, start), kernel_config_row(ctx.cspace, other, TARGET_TIME)


class EntropyCost(_OneParticleFlow):
    check_id = "transport.entropy_cost"

    def run(self, ctx: CheckContext) -> DefectReport:
        start, mu, nu = self.endpoints(ctx)
        report = check_entropy_cost(ctx.cspace, mu, nu, ctx.poisson(), ctx.K, ctx.t_grid, limit=ctx.lab.ot_sector_limit)
        return report.model_copy(update={"witness": {**report.witness, "start": list(start.occupation)}})


class EVI(_OneParticleFlow):
    check_id = "transport.evi"

    def run(self, ctx: CheckContext) -> DefectReport:
        start, mu, nu = self.endpoints(ctx)
        report = check_evi(ctx.cspace, mu, nu, ctx.poisson(), ctx.K, ctx.t_grid, limit=ctx.lab.ot_sector_limit)
        return report.model_copy(update={"witness": {"start": list(start.occupation)}})
