# tests/test_studies.py
import math
from dataclasses import replace

import numpy as np
import pytest

from core.errors import InvalidInputError
from core.settings import StudyDefaults
from verify.studies import (
    STUDIES,
    ContinuumData,
    FourierFunction,
    circle_level,
    default_levels,
    fit_order,
    grid_state,
    run_convergence_study,
    study_to_frame,
)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def test_fourier_function_on_circle():
    g = FourierFunction(constant=1.0, cos=[2.0], sin=[0.0, 3.0])
    values = g.on_circle(4)
    # theta = 0, pi/2, pi, 3pi/2
    assert values == pytest.approx([3.0, 1.0, -1.0, 1.0], abs=1e-12)


def test_grid_state():
    assert grid_state(8, math.pi / 4) == 1
    assert grid_state(8, 2 * math.pi) == 0
    assert grid_state(16, 3 * math.pi / 4) == 6


def test_circle_level_uses_diffusive_rate():
    base = circle_level(16)
    assert base.generator[0, 1] == pytest.approx((16 / (2 * math.pi)) ** 2)


def test_fit_order_recovers_slope():
    levels = [8, 16, 32, 64]
    defects = [(2 * math.pi / n) ** 2 * 3.0 for n in levels]
    assert fit_order(levels, defects) == pytest.approx(2.0)


def test_fit_order_with_zero_defects():
    assert fit_order([8, 16, 32], [0.0, 0.0, 0.0]) == pytest.approx(0.0)


def test_continuum_data_needs_two_inner_functions():
    with pytest.raises(ValueError):
        ContinuumData(inner=[FourierFunction(constant=1.0)])


def test_default_levels():
    defaults = StudyDefaults(levels=[4, 8, 12], inequality_levels=[4, 6, 8])
    assert default_levels("cylinder_gamma", defaults) == [4, 8, 12]
    assert default_levels("evi", defaults) == [4, 6, 8]


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------


class TestConvergenceStudy:
    def test_registered_studies(self):
        assert set(STUDIES) == {"cylinder_generator", "cylinder_gamma", "cylinder_affine", "log_harnack", "entropy_cost", "evi"}

    def test_affine_is_exact_at_every_level(self):
        study = run_convergence_study("cylinder_affine", [6, 8, 10])
        assert study.mode == "exact"
        assert all(d <= 1e-11 for d in study.defects)
        assert study.passed

    def test_quadratic_gamma_converges(self):
        study = run_convergence_study("cylinder_gamma", [8, 16, 32])
        assert study.nonincreasing
        assert study.fitted_order >= 0.9
        assert study.passed

    def test_cubic_generator_defects_shrink(self):
        study = run_convergence_study("cylinder_generator", [8, 16, 32])
        assert study.defects[-1] < study.defects[0]
        assert study.floor == StudyDefaults().order_floor

    def test_inequality_study_keeps_signed_defects(self):
        study = run_convergence_study("log_harnack", [4, 6, 8])
        assert study.mode == "settle"
        assert len(study.defects) == 3
        assert study.details["excess"] == [max(d, 0.0) for d in study.defects]
        assert study.passed == (study.settling and study.defects[-1] <= study.exact_tolerance)

    def test_inequality_study_with_room_to_spare_still_needs_to_settle(self, monkeypatch):
        # every level holds with slack, but the slack keeps jumping around
        slack = {8: -0.5, 16: -0.1, 32: -0.6}
        spec = STUDIES["log_harnack"]
        monkeypatch.setitem(STUDIES, "log_harnack", replace(spec, defect=lambda n, data: slack[n]))
        study = run_convergence_study("log_harnack", [8, 16, 32])
        assert all(d < 0 for d in study.defects)
        assert not study.settling
        assert not study.passed

    def test_inequality_study_that_settles(self, monkeypatch):
        slack = {8: -0.5, 16: -0.3, 32: -0.25}
        spec = STUDIES["evi"]
        monkeypatch.setitem(STUDIES, "evi", replace(spec, defect=lambda n, data: slack[n]))
        study = run_convergence_study("evi", [8, 16, 32])
        assert study.passed
        assert study.fitted_order == pytest.approx(2.0)

    def test_unknown_study(self):
        with pytest.raises(InvalidInputError):
            run_convergence_study("bochner", [8, 16, 32])

    def test_levels_below_three(self):
        with pytest.raises(InvalidInputError):
            run_convergence_study("cylinder_affine", [2, 4, 8])

    def test_too_few_levels(self):
        with pytest.raises(ValueError):
            run_convergence_study("cylinder_affine", [6, 8])

    def test_frame(self):
        study = run_convergence_study("cylinder_affine", [6, 8, 10])
        frame = study_to_frame(study)
        assert list(frame.columns) == ["level", "defect"]
        assert np.array_equal(frame["level"].to_numpy(), [6, 8, 10])
