# checks/exact/lift_checks.py
"""Identities of the lifted calculus that hold for any Markov base."""
from typing import List

import numpy as np

from core.base_check import BaseCheck, CheckContext
from core.cylinder import CylinderFunction, affine, check_cylinder_gamma, check_cylinder_generator_formula
from core.lift import (
    check_carre_du_champ,
    check_exp_generator_formula,
    check_intertwining,
    check_kernel_identification,
    check_kernel_mass,
    check_kernel_permanent,
    check_lp_contraction,
    check_partial_submarkov,
    check_selfadjointness,
    check_semigroup_representation,
)
from core.models import DefectReport


def _worst(reports: List[DefectReport]) -> DefectReport:
    return max(reports, key=lambda r: r.max_defect)


class SemigroupRepresentation(BaseCheck):
    check_id = "lift.semigroup_representation"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        tol = ctx.tolerance(self.check_id, 1e-10)
        reports = []
        for k, e in enumerate(ctx.exp_cylinders()):
            for t in ctx.t_grid:
                r = check_semigroup_representation(ctx.cspace, e, t, tolerance=tol)
                reports.append(r.model_copy(update={"witness": {**r.witness, "cylinder": k}}))
        return _worst(reports)


class ExpGeneratorFormula(BaseCheck):
    check_id = "lift.exp_generator_formula"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        tol = ctx.tolerance(self.check_id, 1e-11)
        return _worst([check_exp_generator_formula(ctx.cspace, e, tolerance=tol) for e in ctx.exp_cylinders()])


class KernelIdentification(BaseCheck):
    check_id = "lift.kernel_identification"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_kernel_identification(ctx.cspace, ctx.t_grid, tolerance=ctx.tolerance(self.check_id, 1e-10))


class KernelMass(BaseCheck):
    check_id = "lift.kernel_mass"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_kernel_mass(ctx.cspace, ctx.t_grid, tolerance=ctx.tolerance(self.check_id, 1e-12))


class KernelPermanent(BaseCheck):
    check_id = "lift.kernel_permanent"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        tol = ctx.tolerance(self.check_id, 1e-12)
        return _worst([check_kernel_permanent(ctx.cspace, t, tolerance=tol) for t in ctx.t_grid[:2]])


class Intertwining(BaseCheck):
    check_id = "lift.intertwining"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_intertwining(ctx.cspace, ctx.f_samples(), ctx.t_grid, tolerance=ctx.tolerance(self.check_id, 1e-12))


class CarreDuChamp(BaseCheck):
    check_id = "lift.carre_du_champ"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_carre_du_champ(ctx.cspace, ctx.config_samples(), tolerance=ctx.tolerance(self.check_id, 1e-12))


class Selfadjointness(BaseCheck):
    check_id = "lift.selfadjointness"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_selfadjointness(ctx.cspace, ctx.poisson(), tolerance=ctx.tolerance(self.check_id, 1e-11))


class PartialSubMarkov(BaseCheck):
    check_id = "lift.partial_submarkov"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_partial_submarkov(ctx.cspace, ctx.t_grid, count=ctx.config.sample_count, seed=ctx.seed)


class LpContraction(BaseCheck):
    check_id = "lift.lp_contraction"
    suite = "lift"

    def run(self, ctx: CheckContext) -> DefectReport:
        return check_lp_contraction(
            ctx.cspace,
            ctx.poisson(),
            ctx.t_grid,
            ctx.config_samples(),
            tolerance=ctx.tolerance(self.check_id, 1e-12),
        )


class CylinderAffine(BaseCheck):
    """Affine outer functions need no chain rule: generator and square field are exact."""

    check_id = "lift.cylinder_affine"
    suite = "cylinder"

    def run(self, ctx: CheckContext) -> DefectReport:
        f_samples = ctx.f_samples()
        inner = [f_samples[-1], f_samples[0]] if len(f_samples) > 1 else [f_samples[0]]
        u = CylinderFunction.of(inner, affine(np.linspace(1.5, -0.5, len(inner)), offset=0.25))
        generator = check_cylinder_generator_formula(ctx.cspace, u)
        gamma = check_cylinder_gamma(ctx.cspace, u)
        return DefectReport(
            check_id=self.check_id,
            tier=self.tier,
            max_defect=max(generator.max_defect, gamma.max_defect),
            tolerance=ctx.tolerance(self.check_id, 1e-11),
            details={"generator": generator.max_defect, "square_field": gamma.max_defect},
        )
