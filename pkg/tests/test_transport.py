# tests/test_transport.py
import math

import numpy as np
import pandas as pd
import pytest
import scipy.sparse as sp

from core.base_space import FiniteBaseSpace, build_circle, build_two_state, continuum_rate
from core.config_space import ConfigMeasure, ConfigSpace, Configuration, poisson_weights
from core.errors import DeskScaleError, InvalidInputError
from core.lift import kernel_config_row
from core.transport import (
    TransportPlan,
    check_distance_metric,
    check_entropy_cost,
    check_entropy_dissipation,
    check_evi,
    check_kwc,
    check_ot_assignment,
    config_distance,
    dirac,
    entropy,
    fisher_information,
    flow,
    same_sector_pairs,
    step_sequence_settles,
    wasserstein_base,
    wasserstein_config,
)


@pytest.fixture
def two_state():
    return ConfigSpace(build_two_state(1.0), 2)


@pytest.fixture
def circle():
    return ConfigSpace(build_circle(5), 2)


# ---------------------------------------------------------------------------
# Configuration distance
# ---------------------------------------------------------------------------


class TestConfigDistance:
    def test_one_particle_moves(self):
        base = build_two_state(1.0)
        assert config_distance(base, Configuration((2, 0)), Configuration((1, 1))).value == pytest.approx(1.0)
        assert config_distance(base, Configuration((2, 0)), Configuration((0, 2))).value == pytest.approx(math.sqrt(2.0))

    def test_different_totals_are_infinitely_far(self):
        result = config_distance(build_two_state(1.0), Configuration((1, 0)), Configuration((1, 1)))
        assert math.isinf(result.value)
        assert not result.is_finite

    def test_empty_configurations(self):
        assert config_distance(build_two_state(1.0), Configuration((0, 0)), Configuration((0, 0))).value == 0.0

    def test_dirac_embedding_is_isometric(self):
        base = build_circle(8)
        gamma = Configuration.from_particles(8, [1])
        eta = Configuration.from_particles(8, [5])
        assert config_distance(base, gamma, eta).value == pytest.approx(base.metric[1, 5])

    def test_matching_is_reported(self):
        base = build_circle(6)
        result = config_distance(base, Configuration.from_particles(6, [0, 3]), Configuration.from_particles(6, [1, 3]))
        assert sorted(result.matching) == [(0, 1), (3, 3)]

    def test_metric_required(self):
        base = FiniteBaseSpace(states=["a", "b"], m=[1, 1], Q=[[-1, 1], [1, -1]])
        with pytest.raises(InvalidInputError):
            config_distance(base, Configuration((1, 0)), Configuration((0, 1)))

    def test_metric_axioms(self):
        report = check_distance_metric(ConfigSpace(build_circle(5), 3))
        assert report.passed
        assert report.details["sectors"] == [0, 1, 2, 3]


# ---------------------------------------------------------------------------
# Exact transport
# ---------------------------------------------------------------------------


class TestWasserstein:
    def test_base_diracs(self):
        plan = wasserstein_base(build_two_state(1.0), [1.0, 0.0], [0.0, 1.0])
        assert plan.cost == pytest.approx(1.0)
        assert plan.distance == pytest.approx(1.0)

    def test_base_unbalanced(self):
        with pytest.raises(InvalidInputError):
            wasserstein_base(build_two_state(1.0), [1.0, 0.0], [0.0, 0.5])

    def test_config_matches_assignment(self, circle):
        pairs = same_sector_pairs(circle, 6, seed=3)
        assert len(pairs) == 6
        assert all(g.total == e.total for g, e in pairs)
        assert check_ot_assignment(circle, pairs).passed

    def test_cross_sector_is_infinite(self, two_state):
        plan = wasserstein_config(two_state, dirac(two_state, Configuration((1, 0))), dirac(two_state, Configuration((1, 1))))
        assert plan.status == "infinite"
        assert math.isinf(plan.distance)

    def test_cross_sector_pair_agrees_with_assignment(self, two_state):
        report = check_ot_assignment(two_state, [(Configuration((1, 0)), Configuration((0, 2)))])
        assert report.max_defect == 0.0

    def test_split_mass_plan(self, two_state):
        mu = ConfigMeasure(weights=np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]))
        nu = ConfigMeasure(weights=np.array([0.0, 0.5, 0.5, 0.0, 0.0, 0.0]))
        plan = wasserstein_config(two_state, mu, nu)
        assert plan.cost == pytest.approx(0.5)
        assert plan.plan.sum() == pytest.approx(1.0)
        assert set(plan.to_frame().columns) == {"source", "target", "mass"}

    def test_sector_costs_add_up(self, two_state):
        mu = ConfigMeasure(weights=np.array([0.0, 0.5, 0.0, 0.5, 0.0, 0.0]))
        nu = ConfigMeasure(weights=np.array([0.0, 0.0, 0.5, 0.0, 0.0, 0.5]))
        plan = wasserstein_config(two_state, mu, nu)
        assert plan.sector_costs == pytest.approx({1: 0.5, 2: 1.0})
        assert plan.cost == pytest.approx(1.5)

    def test_desk_scale_guard(self, circle):
        gamma = Configuration.from_particles(5, [0, 1])
        eta = Configuration.from_particles(5, [2, 4])
        with pytest.raises(DeskScaleError):
            wasserstein_config(circle, dirac(circle, gamma), dirac(circle, eta), limit=10)

    def test_infinite_plan(self):
        plan = TransportPlan.infinite(4)
        assert plan.plan.shape == (4, 4)
        assert math.isinf(plan.distance)

    def test_plan_csv(self, two_state, tmp_path):
        mu = ConfigMeasure(weights=np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]))
        nu = ConfigMeasure(weights=np.array([0.0, 0.5, 0.5, 0.0, 0.0, 0.0]))
        labels = [c.label(two_state.base) for c in two_state.configs]
        path = wasserstein_config(two_state, mu, nu).to_csv(tmp_path / "plan.csv", labels=labels)
        frame = pd.read_csv(path).sort_values("target")
        assert frame["source"].tolist() == ["a", "a"]
        assert frame["target"].tolist() == ["a", "b"]
        assert frame["mass"].to_numpy() == pytest.approx([0.5, 0.5])

    def test_short_flow_against_a_kernel_row(self):
        # far sites of a short flow carry mass far below the LP feasibility tolerance
        cspace = ConfigSpace(build_circle(16, continuum_rate(16)), 2)
        gamma = Configuration.from_particles(16, [2])
        eta = Configuration.from_particles(16, [6])
        mu = flow(cspace, dirac(cspace, gamma), 0.02)
        plan = wasserstein_config(cspace, mu, kernel_config_row(cspace, eta, 0.25))
        assert plan.status == "optimal"
        assert math.isfinite(plan.cost)
        assert plan.plan.sum() == pytest.approx(1.0, abs=1e-9)


class TestKernelContraction:
    def test_two_state_contracts(self, two_state):
        pairs = same_sector_pairs(two_state, 4, seed=1)
        report = check_kwc(two_state, lambda t: 1.0, [0.1, 1.0], pairs)
        assert report.passed

    def test_exponential_rate_two_state(self, two_state):
        pairs = [(Configuration((1, 0)), Configuration((0, 1)))]
        report = check_kwc(two_state, lambda t: math.exp(-t), [0.5], pairs)
        assert report.details["raw_defect"] == pytest.approx(0.0, abs=1e-8)

    def test_singletons_match_base_transport(self):
        cspace = ConfigSpace(build_circle(8), 2)
        pairs = [(Configuration.from_particles(8, [0]), Configuration.from_particles(8, [3]))]
        report = check_kwc(cspace, lambda t: 1.0, [0.1, 0.5, 2.0], pairs)
        assert report.details["singleton_gap"] < 1e-9
        assert report.passed

    def test_pairs_must_share_a_sector(self, two_state):
        with pytest.raises(InvalidInputError):
            check_kwc(two_state, lambda t: 1.0, [0.1], [(Configuration((1, 0)), Configuration((1, 1)))])


# ---------------------------------------------------------------------------
# Entropy and Fisher information
# ---------------------------------------------------------------------------


class TestEntropy:
    def test_relative_to_itself(self, two_state):
        pi = poisson_weights(two_state, 1.0)
        assert entropy(pi, pi) == pytest.approx(0.0)

    def test_dirac(self, two_state):
        pi = poisson_weights(two_state, 1.0)
        assert entropy(dirac(two_state, Configuration((0, 0))), pi) == pytest.approx(2.0)

    def test_null_reference(self, two_state):
        ref = ConfigMeasure(weights=np.array([1.0, 0.0, 1.0, 1.0, 1.0, 1.0]))
        assert math.isinf(entropy(dirac(two_state, Configuration((1, 0))), ref))

    def test_constant_density_has_no_information(self, two_state):
        pi = poisson_weights(two_state, 1.0)
        assert fisher_information(two_state, np.ones(len(two_state)), pi) == pytest.approx((0.0, 0.0))

    def test_negative_density(self, two_state):
        with pytest.raises(InvalidInputError):
            fisher_information(two_state, -np.ones(len(two_state)), poisson_weights(two_state, 1.0))

    def test_flow_preserves_sector_masses(self, two_state):
        mu = dirac(two_state, Configuration((2, 0)))
        moved = flow(two_state, mu, 0.7)
        assert moved.sector_masses(two_state) == pytest.approx([0.0, 0.0, 1.0])

    def test_dissipation_identity(self, two_state):
        pi = poisson_weights(two_state, 1.0)
        start = dirac(two_state, two_state.configs[1])
        mu0 = ConfigMeasure(weights=0.5 * start.weights + 0.5 * pi.weights / pi.mass)
        report = check_entropy_dissipation(two_state, mu0, pi, [0.1, 0.5, 1.0])
        assert report.passed
        assert report.details["entropy_drop"] > 0

    def test_entropy_cost_refuses_infinite_distance(self, two_state):
        pi = poisson_weights(two_state, 1.0)
        report = check_entropy_cost(
            two_state, dirac(two_state, Configuration((1, 0))), dirac(two_state, Configuration((1, 1))), pi, 0.0, [0.5]
        )
        assert report.status == "refused"


# ---------------------------------------------------------------------------
# EVI difference quotients
# ---------------------------------------------------------------------------


def test_step_sequence_settles():
    assert step_sequence_settles([1.0, 0.5, 0.25])
    assert step_sequence_settles([0.3, 0.3, 0.3])
    assert not step_sequence_settles([1.0, 0.9, 1.3])
    assert not step_sequence_settles([1.0, math.nan, 0.5])
    assert not step_sequence_settles([1.0, 0.5])


def test_evi_reports_every_step(two_state):
    pi = poisson_weights(two_state, 1.0)
    mu0 = dirac(two_state, Configuration((1, 0)))
    nu = dirac(two_state, Configuration((0, 1)))
    report = check_evi(two_state, mu0, nu, ConfigMeasure(weights=pi.weights / pi.mass), 0.0, [0.5, 1.0])
    assert report.status == "defect-only"
    assert set(report.details["by_step"]) == {"0.01", "0.005", "0.0025"}
    assert all(len(v) == 2 for v in report.details["by_step"].values())
    assert isinstance(report.details["inconclusive"], bool)


def test_evi_flags_a_quotient_that_does_not_settle(two_state, monkeypatch):
    # a distance that jumps right after t makes the quotient grow as the step shrinks
    def jumping_distance(cspace, mu, nu, limit=None):
        cost = 1.0 if mu.params["t"] == 0.5 else 1.0 + 1e-6
        return TransportPlan(plan=sp.csr_matrix((len(cspace), len(cspace))), cost=cost)

    monkeypatch.setattr("core.transport.wasserstein_config", jumping_distance)
    pi = poisson_weights(two_state, 1.0)
    mu0 = dirac(two_state, Configuration((1, 0)))
    report = check_evi(two_state, mu0, mu0, ConfigMeasure(weights=pi.weights / pi.mass), 0.0, [0.5])
    assert report.details["inconclusive"]
    assert report.details["unsettled_t"] == [0.5]
