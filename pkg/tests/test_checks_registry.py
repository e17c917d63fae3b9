# tests/test_checks_registry.py
import pytest

from checks import CheckRegistry
from core.base_check import BaseCheck, CheckContext
from core.models import DefectReport


class _StubCheck(BaseCheck):
    check_id = "stub.check"
    suite = "stub"

    def run(self, ctx: CheckContext) -> DefectReport:
        return DefectReport(check_id=self.check_id, tier=self.tier, max_defect=0.0)


@pytest.fixture(scope="module")
def registry():
    return CheckRegistry().discover()


def test_discover_finds_every_check(registry):
    assert len(registry) == 41
    ids = [c.check_id for c in registry.get_all()]
    assert ids == sorted(ids)
    assert "transport.kwc" in ids
    assert "measures.mecke" in ids


def test_abstract_helpers_are_skipped(registry):
    assert all(not type(c).__name__.startswith("_") for c in registry.get_all())


def test_tiers(registry):
    asymptotic = {c.check_id for c in registry.get_by_tier("asymptotic")}
    assert asymptotic == {
        "base.log_harnack",
        "lift.cylinder_gamma",
        "lift.cylinder_generator",
        "lift.weak_bochner",
        "mixed.log_harnack",
        "transport.entropy_cost",
        "transport.evi",
        "transport.log_harnack",
    }
    assert len(registry.get_by_tier("exact")) == 33


def test_select_by_suite(registry):
    assert [c.check_id for c in registry.select(["kwc"])] == ["transport.kwc"]
    assert {c.check_id for c in registry.select(["be"])} == {"be.backward", "be.forward", "be.inflated_K", "be.tensor"}


def test_select_controls(registry):
    controls = {c.check_id for c in registry.select(["controls"])}
    assert controls == {"be.inflated_K", "mixed.mecke", "transport.cross_sector"}


def test_select_mixed_selectors_without_duplicates(registry):
    chosen = registry.select(["lift.kernel_mass", "lift", "exact"])
    ids = [c.check_id for c in chosen]
    assert len(ids) == len(set(ids))
    assert "lift.kernel_mass" in ids


def test_select_all(registry):
    assert len(registry.select(["all"])) == len(registry)


def test_unknown_selector(registry):
    with pytest.raises(ValueError, match="unknown suite or check"):
        registry.select(["lift", "bochner"])


def test_register_and_get():
    registry = CheckRegistry()
    registry.register(_StubCheck())
    assert registry.get("stub.check").suite == "stub"
    assert registry.get("missing") is None


def test_check_logger_is_namespaced():
    assert _StubCheck().logger.name == "checks.stub.check"
