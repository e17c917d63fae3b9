# tests/test_cylinder.py
import numpy as np
import pytest
from pydantic import ValidationError

from core.base_space import build_circle, build_two_state
from core.config_space import ConfigSpace, Configuration
from core.cylinder import (
    Affine,
    CylinderFunction,
    add,
    affine,
    check_cylinder_gamma,
    check_cylinder_generator_formula,
    const,
    derivative_check,
    dump_expr,
    exp,
    log,
    mul,
    parse_expr,
    power,
    var,
)
from core.errors import InvalidInputError


@pytest.fixture
def circle():
    return ConfigSpace(build_circle(6, rate=2.0), 2)


# ---------------------------------------------------------------------------
# Outer expressions
# ---------------------------------------------------------------------------


class TestExpressions:
    def test_simplifying_constructors(self):
        assert mul(const(0.0), var(0)) == const(0.0)
        assert add(const(0.0), var(1)) == var(1)
        assert mul(const(1.0), var(0)) == var(0)

    def test_evaluate(self):
        e = add(mul(var(0), var(1)), exp(var(0)))
        x = np.array([[0.0, 2.0], [1.0, 3.0]])
        assert e.evaluate(x) == pytest.approx([1.0, 3.0 + np.e])

    def test_power_derivative(self):
        e = power(var(0), 3)
        assert e.derivative(0).evaluate(np.array([[2.0]])) == pytest.approx([12.0])

    def test_negative_power(self):
        with pytest.raises(InvalidInputError):
            power(var(0), -1)

    def test_log_of_nonpositive(self):
        with pytest.raises(InvalidInputError):
            log(var(0)).evaluate(np.array([[0.0]]))

    def test_unbound_variable(self):
        with pytest.raises(InvalidInputError):
            var(2).evaluate(np.zeros((1, 2)))

    def test_affine_derivatives(self):
        e = affine([2.0, -1.0], 0.5)
        assert e.derivative(1).evaluate(np.zeros((1, 2))) == pytest.approx([-1.0])
        assert e.derivative(3).evaluate(np.zeros((1, 2))) == pytest.approx([0.0])

    def test_json_document(self):
        e = add(log(add(var(0), const(2.0))), mul(var(1), exp(var(0))))
        again = parse_expr(dump_expr(e))
        x = np.array([[0.3, -1.2], [1.0, 0.5]])
        assert again.evaluate(x) == pytest.approx(e.evaluate(x))

    def test_unknown_node(self):
        with pytest.raises(ValidationError):
            parse_expr('{"op": "sin", "arg": {"op": "var", "index": 0}}')

    def test_symbolic_derivatives_match_differences(self):
        e = add(log(add(var(0), const(3.0))), mul(var(0), var(1), var(1)), exp(mul(const(0.5), var(1))))
        points = np.array([[0.2, 0.4], [1.0, -0.7], [2.5, 1.1]])
        assert derivative_check(e, points).passed


# ---------------------------------------------------------------------------
# Cylinder functions
# ---------------------------------------------------------------------------


class TestCylinderFunction:
    def test_arity_is_validated(self):
        with pytest.raises(ValidationError):
            CylinderFunction.of([np.ones(3)], var(1))

    def test_inner_functions_share_a_base(self):
        with pytest.raises(ValidationError):
            CylinderFunction(inner=[[1.0, 2.0], [1.0]], outer=var(0))

    def test_base_mismatch(self, circle):
        u = CylinderFunction.of([np.ones(4)], var(0))
        with pytest.raises(InvalidInputError):
            u.values(circle)

    def test_values(self):
        cspace = ConfigSpace(build_two_state(1.0), 3)
        u = CylinderFunction.of([np.array([1.0, 2.0])], power(var(0), 2))
        assert u.values(cspace)[cspace.position(Configuration((1, 1)))] == pytest.approx(9.0)

    def test_no_inner_functions(self, circle):
        u = CylinderFunction(inner=[], outer=const(2.5))
        assert np.all(u.values(circle) == 2.5)


class TestChainRule:
    def test_affine_generator_is_exact(self, circle):
        f = np.linspace(-1.0, 1.0, 6)
        g = np.cos(np.arange(6.0))
        u = CylinderFunction.of([f, g], affine([1.5, -0.5], 0.25))
        report = check_cylinder_generator_formula(circle, u)
        assert report.details["affine"]
        assert report.max_defect < 1e-11

    def test_quadratic_generator_is_exact(self, circle):
        f = np.sin(np.arange(6.0))
        u = CylinderFunction.of([f], power(var(0), 2))
        assert check_cylinder_generator_formula(circle, u).max_defect < 1e-10

    def test_cubic_generator_has_a_defect(self, circle):
        f = np.sin(np.arange(6.0))
        u = CylinderFunction.of([f], power(var(0), 3))
        report = check_cylinder_generator_formula(circle, u)
        assert report.max_defect > 1e-6
        assert report.status == "defect-only"

    def test_affine_gamma_is_exact(self, circle):
        u = CylinderFunction.of([np.linspace(0.0, 1.0, 6)], Affine(coeffs=[2.0], offset=-1.0))
        assert check_cylinder_gamma(circle, u).max_defect < 1e-11

    def test_quadratic_gamma_defect(self, circle):
        u = CylinderFunction.of([np.linspace(0.0, 1.0, 6)], power(var(0), 2))
        assert check_cylinder_gamma(circle, u).max_defect > 0.0
