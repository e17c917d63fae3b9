# tests/test_engine.py
import json
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from checks import CheckRegistry
from core.base_check import BaseCheck, CheckContext
from core.base_space import build_two_state
from core.config_space import ConfigSpace
from core.errors import DeskScaleError
from core.models import DefectReport, ExperimentConfig
from core.settings import LabSettings
from verify.engine import VerificationEngine
from verify.report import canonical_json, report_payload

QUIET = LabSettings(record_timing=False)


class _BrokenCheck(BaseCheck):
    check_id = "broken.exact"
    suite = "broken"

    def run(self, ctx: CheckContext) -> DefectReport:
        raise FloatingPointError("solver diverged")


class _OversizedCheck(BaseCheck):
    check_id = "broken.oversized"
    suite = "broken"
    tier = "asymptotic"

    def run(self, ctx: CheckContext) -> DefectReport:
        raise DeskScaleError("sector too large")


def _run(**fields):
    config = ExperimentConfig(**{"fixture": "two_state", "n_max": 2, "sample_count": 4, **fields})
    return VerificationEngine(config, settings=QUIET).run()


@pytest.fixture(scope="module")
def full_run():
    return _run()


# ---------------------------------------------------------------------------
# Two-state acceptance run
# ---------------------------------------------------------------------------


def test_every_exact_check_passes(full_run):
    failing = [r.check_id for r in full_run.reports if r.passed is False]
    assert failing == []
    assert full_run.exact_passes >= 12


def test_nothing_refused_on_two_state(full_run):
    assert [r.check_id for r in full_run.reports if r.refused is not None] == []


def test_reports_are_sorted_and_stamped(full_run):
    ids = [r.check_id for r in full_run.reports]
    assert ids == sorted(ids)
    assert all(r.fixture == "two_state:rate=1.0" for r in full_run.reports)
    assert all(r.seed == 7 for r in full_run.reports)


def test_asymptotic_entries_carry_defects_only(full_run):
    asymptotic = [r for r in full_run.reports if r.tier == "asymptotic"]
    assert asymptotic
    assert all(r.passed is None for r in asymptotic)


def test_controls_detect_their_violation(full_run):
    controls = [r for r in full_run.reports if r.negative_control]
    assert {r.check_id for r in controls} == {"be.inflated_K", "mixed.mecke", "transport.cross_sector"}
    assert all(r.passed for r in controls)


def test_no_timing_by_default(full_run):
    assert full_run.wall_clock is None
    assert "wall_clock" not in report_payload(full_run)


# ---------------------------------------------------------------------------
# Determinism
# ---------------------------------------------------------------------------


def test_thread_count_does_not_change_results():
    single = _run(suites=["lift", "measures", "be"], threads=1)
    pooled = _run(suites=["lift", "measures", "be"], threads=4)
    left = json.loads(canonical_json(report_payload(single)))["reports"]
    right = json.loads(canonical_json(report_payload(pooled)))["reports"]
    assert left == right


def test_same_seed_same_bytes():
    first = canonical_json(report_payload(_run(suites=["be", "structure"])))
    second = canonical_json(report_payload(_run(suites=["be", "structure"])))
    assert first == second


def test_timing_when_requested():
    config = ExperimentConfig(fixture="two_state", n_max=1, suites=["structure"])
    report = VerificationEngine(config, settings=LabSettings(record_timing=True)).run()
    assert report.wall_clock is not None
    assert report.wall_clock >= 0.0


# ---------------------------------------------------------------------------
# Selection, preflight, refusals
# ---------------------------------------------------------------------------


def test_studies_selector_is_not_a_check():
    engine = VerificationEngine(ExperimentConfig(fixture="two_state", suites=["studies"]), settings=QUIET)
    assert engine.selected_checks() == []


def test_unknown_suite():
    engine = VerificationEngine(ExperimentConfig(fixture="two_state", suites=["bochner"]), settings=QUIET)
    with pytest.raises(ValueError):
        engine.run()


def test_preflight_refuses_oversized_transport():
    config = ExperimentConfig(fixture="circle:n=8", n_max=5, suites=["kwc"])
    with pytest.raises(DeskScaleError):
        VerificationEngine(config, settings=QUIET).run()


def test_preflight_ignores_checks_without_transport():
    config = ExperimentConfig(fixture="circle:n=8", n_max=5, suites=["structure"])
    engine = VerificationEngine(config, settings=QUIET)
    ctx = engine.build_context()
    engine.preflight(engine.selected_checks(), ctx)


def test_missing_metric_is_refused(tmp_path):
    path = tmp_path / "flat.json"
    path.write_text(json.dumps({"states": ["a", "b"], "m": [1, 1], "Q": [[-1, 1], [1, -1]]}))
    config = ExperimentConfig(fixture=f"custom:path={path}", n_max=1, suites=["transport.distance_metric", "structure"])
    report = VerificationEngine(config, settings=QUIET).run()
    by_id = {r.check_id: r for r in report.reports}
    assert by_id["transport.distance_metric"].status == "refused"
    assert "metric" in by_id["transport.distance_metric"].refused
    assert by_id["structure.irreducibility"].passed


def test_tolerance_override_is_applied():
    report = _run(suites=["lift.carre_du_champ"], tolerances={"lift.carre_du_champ": 0.5})
    assert report.reports[0].tolerance == 0.5


def test_missing_metric_carries_its_code(tmp_path):
    path = tmp_path / "flat.json"
    path.write_text(json.dumps({"states": ["a", "b"], "m": [1, 1], "Q": [[-1, 1], [1, -1]]}))
    config = ExperimentConfig(fixture=f"custom:path={path}", n_max=1, suites=["transport.distance_metric"])
    report = VerificationEngine(config, settings=QUIET).run()
    assert report.reports[0].refusal_code == "missing_metric"
    assert report.exact_failures == 0


# ---------------------------------------------------------------------------
# Checks that raise
# ---------------------------------------------------------------------------


def _broken_run():
    registry = CheckRegistry()
    registry.register(_BrokenCheck())
    registry.register(_OversizedCheck())
    config = ExperimentConfig(fixture="two_state", n_max=1, suites=["broken"])
    return VerificationEngine(config, registry=registry, settings=QUIET).run()


def test_raising_exact_check_is_a_failure():
    report = _broken_run()
    by_id = {r.check_id: r for r in report.reports}
    broken = by_id["broken.exact"]
    assert broken.status == "error"
    assert broken.passed is False
    assert "FloatingPointError" in broken.error
    assert report.exact_failures == 1


def test_desk_scale_inside_a_check_is_a_refusal():
    oversized = {r.check_id: r for r in _broken_run().reports}["broken.oversized"]
    assert oversized.status == "refused"
    assert oversized.refusal_code == "desk_scale"
    assert oversized.passed is None


# ---------------------------------------------------------------------------
# Shared context ingredients
# ---------------------------------------------------------------------------


def _context():
    config = ExperimentConfig(fixture="two_state", n_max=1)
    base = build_two_state(1.0)
    return CheckContext(config, base, ConfigSpace(base, 1))


def test_shared_value_builds_once_under_concurrency():
    ctx = _context()
    calls = []
    started = threading.Event()

    def build():
        calls.append(1)
        started.wait(timeout=1.0)
        return object()

    with ThreadPoolExecutor(max_workers=8) as pool:
        futures = [pool.submit(ctx.shared, "slow", build) for _ in range(8)]
        started.set()
        values = {id(f.result()) for f in futures}
    assert len(calls) == 1
    assert len(values) == 1


def test_slow_build_does_not_block_other_keys():
    ctx = _context()
    release = threading.Event()

    def slow():
        release.wait(timeout=5.0)
        return "slow"

    with ThreadPoolExecutor(max_workers=2) as pool:
        pending = pool.submit(ctx.shared, "slow", slow)
        assert ctx.shared("fast", lambda: "fast") == "fast"
        assert not pending.done()
        release.set()
        assert pending.result() == "slow"


def test_nested_builds_share_values():
    ctx = _context()
    inner = ctx.shared("outer", lambda: ctx.shared("inner", lambda: 3) + 1)
    assert inner == 4
    assert ctx.shared("inner", lambda: 0) == 3
