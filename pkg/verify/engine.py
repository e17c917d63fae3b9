from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

from checks import CheckRegistry
from core.base_check import BaseCheck, CheckContext
from core.config_space import ConfigSpace
from core.errors import DeskScaleError, ReducibleBaseError
from core.models import ConvergenceStudy, DefectReport, ExperimentConfig, SuiteReport
from core.settings import LabDefaults, LabSettings, get_settings
from data import FixtureRegistry, default_registry
from verify import __version__
from verify.studies import run_all_studies

logger = logging.getLogger(__name__)

STUDY_SELECTOR = "studies"


class VerificationEngine:
    """Runs the selected checks of one experiment against one fixture."""

    def __init__(
        self,
        config: ExperimentConfig,
        registry: Optional[CheckRegistry] = None,
        fixtures: Optional[FixtureRegistry] = None,
        lab: Optional[LabDefaults] = None,
        settings: Optional[LabSettings] = None,
    ):
        self.config = config
        self.registry = registry or CheckRegistry().discover()
        self.fixtures = fixtures or default_registry()
        self.lab = lab or LabDefaults()
        self.settings = settings or get_settings()

    def build_context(self) -> CheckContext:
        base = self.fixtures.build(self.config.fixture)
        cspace = ConfigSpace(base, self.config.n_max, self.lab.max_configs)
        logger.info("%s: %d configurations up to %d particles", self.config.fixture.label, len(cspace), cspace.n_max)
        return CheckContext(self.config, base, cspace, self.lab)

    def selected_checks(self) -> List[BaseCheck]:
        selectors = [s for s in self.config.suites if s != STUDY_SELECTOR]
        return self.registry.select(selectors) if selectors else []

    def preflight(self, checks: Sequence[BaseCheck], ctx: CheckContext) -> None:
        """Refuse the whole run when exact transport would exceed desk scale."""
        largest = ctx.cspace.max_sector_size
        limit = self.lab.ot_sector_limit
        for check in checks:
            if check.needs_transport and largest > limit:
                raise DeskScaleError(
                    f"sector size {largest} exceeds OT desk-scale limit {limit} ({check.check_id}); lower n_max"
                )

    def run_check(self, check: BaseCheck, ctx: CheckContext) -> DefectReport:
        """Run one check. Unmet preconditions become refusals; anything else raised is an error."""
        stamp = {"fixture": ctx.fixture, "seed": ctx.seed}
        refusal = check.refusal_reason(ctx)
        if refusal is not None:
            code, reason = refusal
            return DefectReport.refusal(check.check_id, check.tier, reason, code=code, **stamp)
        try:
            report = check.run(ctx)
        except DeskScaleError as exc:
            check.logger.warning("%s refused: %s", check.check_id, exc)
            return DefectReport.refusal(check.check_id, check.tier, str(exc), code="desk_scale", **stamp)
        except ReducibleBaseError as exc:
            check.logger.warning("%s refused: %s", check.check_id, exc)
            return DefectReport.refusal(check.check_id, check.tier, str(exc), code="reducible_base", **stamp)
        except Exception as exc:
            check.logger.exception("%s raised", check.check_id)
            return DefectReport.crashed(check.check_id, check.tier, f"{type(exc).__name__}: {exc}", **stamp)
        report = report.model_copy(update={"check_id": check.check_id, "tier": check.tier, "fixture": ctx.fixture, "seed": ctx.seed})
        check.logger.info("%s: %s (defect %.3g)", check.check_id, report.status, report.max_defect)
        return report

    def run(self) -> SuiteReport:
        started = time.perf_counter()
        checks = self.selected_checks()
        ctx = self.build_context()
        self.preflight(checks, ctx)
        threads = max(self.config.threads, 1)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(lambda c: self.run_check(c, ctx), checks))
        studies: List[ConvergenceStudy] = []
        if STUDY_SELECTOR in self.config.suites:
            studies = run_all_studies(self.lab.studies)
        elapsed = time.perf_counter() - started
        logger.info("ran %d checks and %d studies in %.2fs", len(reports), len(studies), elapsed)
        return SuiteReport(
            config=self.config,
            fixture=ctx.fixture,
            version=__version__,
            seed=self.config.seed,
            reports=sorted(reports, key=lambda r: r.check_id),
            studies=studies,
            wall_clock=elapsed if self.settings.record_timing else None,
        )
