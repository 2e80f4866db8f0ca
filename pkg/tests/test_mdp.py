import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_mdp, random_policy, small_mdps
from oracles import brute_force_value, coverage_by_enumeration, rollout
from gaplcb.instances import (
    LowerBoundParams,
    NecessityParams,
    NEC_START,
    make_lower_bound_instance,
    make_necessity_instance,
    uniform_behavior,
)
from gaplcb.mdp import (
    NoPositiveGap,
    Policy,
    TabularMdp,
    ValidationError,
    coverage_coefficients,
    gap_min,
    greedy_policy,
    occupancy,
    optimal_values,
    policy_suboptimality,
    policy_values,
    single_policy_coverage,
    validate_mdp,
)


def two_state_chain():
    kernel = np.zeros((2, 2, 2, 2))
    kernel[:, :, 0, 0] = 1.0
    kernel[:, :, 1, 1] = 1.0
    rewards = np.array([[[0.0, 0.5], [1.0, 0.2]]] * 2)
    return TabularMdp(kernel, rewards, np.array([1.0, 0.0]))


class TestValidation:
    def test_valid_chain_has_empty_report(self):
        report = validate_mdp(two_state_chain())
        assert report.ok and report.violations == []

    def test_short_row_names_its_cell(self):
        m = two_state_chain()
        m.kernel[1, 0, 1] = [0.0, 0.9]
        report = validate_mdp(m)
        assert len(report.violations) == 1
        assert report.violations[0].index == (1, 0, 1)

    def test_negative_reward_depends_on_mode(self):
        m = two_state_chain()
        m.rewards[0, 1, 1] = -0.3
        assert not validate_mdp(m, "strict").ok
        assert validate_mdp(m, "relaxed").ok

    def test_bad_p0_and_negative_entries(self):
        m = two_state_chain()
        m.p0[:] = [0.7, 0.2]
        m.kernel[0, 0, 0] = [1.5, -0.5]
        whats = {v.what for v in validate_mdp(m).violations}
        assert len(whats) >= 2

    def test_optimal_values_rejects_invalid(self):
        m = two_state_chain()
        m.kernel[0, 0, 0] = [0.5, 0.4]
        with pytest.raises(ValidationError):
            optimal_values(m)


def necessity_cells(mdp):
    """The start state at step 0 and every state at step 1; nothing else is reachable."""
    return [(0, NEC_START)] + [(1, s) for s in range(mdp.S)]


class TestOptimalValues:
    def test_single_state_two_steps(self, two_action_loop):
        vt = optimal_values(two_action_loop)
        assert vt.V[0, 0] == 2.0
        assert vt.Q[0, 0, 1] == 1.0
        assert np.all(vt.V[-1] == 0.0)

    def test_necessity_instance_value_is_half(self):
        mdp, _ = make_necessity_instance(NecessityParams(10, 0.1))
        vstar = float(mdp.p0 @ optimal_values(mdp).V[0])
        assert vstar == pytest.approx(brute_force_value(mdp, necessity_cells(mdp)), abs=1e-12)
        assert vstar == pytest.approx(0.5, abs=1e-12)

    def test_horizon_one_q_is_reward(self):
        m = random_mdp(3, 4, 3, 1)
        np.testing.assert_array_equal(optimal_values(m).Q[0], m.rewards[0])


class TestPolicyValues:
    def test_greedy_policy_attains_optimum(self):
        m = random_mdp(5, 3, 2, 4)
        vt = optimal_values(m)
        np.testing.assert_allclose(policy_values(m, greedy_policy(vt.Q)).V, vt.V, atol=1e-12)

    def test_uniform_policy_single_state(self, two_action_loop):
        # the four action sequences are equally likely
        returns = [sum(1.0 if a == 0 else 0.0 for a in seq) for seq in itertools.product(range(2), repeat=2)]
        mu = uniform_behavior(two_action_loop)
        assert policy_values(two_action_loop, mu).V[0, 0] == pytest.approx(np.mean(returns))
        assert np.mean(returns) == 1.0

    def test_horizon_one_deterministic(self):
        m = random_mdp(8, 2, 2, 1)
        pi = Policy.deterministic([[1, 1]])
        np.testing.assert_array_equal(policy_values(m, pi).V[0], m.rewards[0, :, 1])

    def test_dimension_mismatch(self):
        m = random_mdp(1, 2, 2, 3)
        with pytest.raises(ValidationError):
            policy_values(m, Policy.deterministic(np.zeros((2, 2), dtype=int)))


class TestOccupancy:
    def test_deterministic_chain_is_point_mass(self):
        m = two_state_chain()
        d = occupancy(m, Policy.deterministic([[1, 1], [0, 0]])).d
        assert d[0, 0, 1] == 1.0 and d[1, 1, 0] == 1.0
        assert np.count_nonzero(d) == 2

    def test_lower_bound_true_state_occupancy(self):
        p = LowerBoundParams.random(3, 2, 4, 0.2, 0.3, 11)
        mdp, _ = make_lower_bound_instance(p)
        d = occupancy(mdp, uniform_behavior(mdp)).d
        for h in range(p.H + 1):
            expect = p.lam / p.S * (1 - 1 / p.H) ** h / p.A
            np.testing.assert_allclose(d[h, :p.S, :], expect, rtol=1e-12)

    def test_levels_sum_to_one(self):
        m = random_mdp(2, 4, 3, 5)
        d = occupancy(m, random_policy(2, 5, 4, 3)).d
        np.testing.assert_allclose(d.sum(axis=(1, 2)), 1.0, atol=1e-12)


class TestGapMin:
    @pytest.mark.parametrize("phi_seed", [0, 1, 2])
    def test_lower_bound_family(self, phi_seed):
        mdp, _ = make_lower_bound_instance(LowerBoundParams.random(3, 2, 4, 0.2, 0.3, phi_seed))
        assert gap_min(mdp)[0] == pytest.approx(0.2, abs=1e-12)

    def test_necessity_instance(self):
        mdp, _ = make_necessity_instance(NecessityParams(10, 0.1))
        assert gap_min(mdp)[0] == pytest.approx(0.1, abs=1e-12)

    def test_identical_actions_have_no_gap(self):
        m = random_mdp(4, 3, 2, 3)
        m.kernel[:, :, 1] = m.kernel[:, :, 0]
        m.rewards[:, :, 1] = m.rewards[:, :, 0]
        with pytest.raises(NoPositiveGap):
            gap_min(m)

    def test_tolerance_classifies_small_gaps_as_zero(self, two_action_loop):
        two_action_loop.rewards[1, 0, 1] = 1.0 - 1e-12
        g, table = gap_min(two_action_loop)
        assert g == pytest.approx(1.0)
        assert table[1, 0, 1] == pytest.approx(1e-12, abs=1e-15)


class TestCoverage:
    def test_single_state_per_level(self, two_action_loop):
        cov = coverage_coefficients(two_action_loop, uniform_behavior(two_action_loop))
        assert cov.C_star == 2.0
        assert cov.P_unif == 0.5

    def test_random_instance_matches_enumeration(self):
        m = random_mdp(17, 3, 2, 2)
        mu = random_policy(17, 2, 3, 2)
        cov = coverage_coefficients(m, mu)
        P, C, _ = coverage_by_enumeration(m, mu.table)
        assert cov.P_unif == pytest.approx(P, rel=1e-12)
        assert cov.C_star == pytest.approx(C, rel=1e-12)

    def test_lower_bound_uniform_behavior_values(self):
        # the enumeration oracle fixes what C* and P are on this family
        p = LowerBoundParams.random(3, 2, 4, 0.2, 0.3, 5)
        mdp, _ = make_lower_bound_instance(p)
        mu = uniform_behavior(mdp)
        cov = coverage_coefficients(mdp, mu)
        assert cov.P_unif == pytest.approx(p.lam / p.S * (1 - 1 / p.H) ** p.H / p.A, rel=1e-12)
        assert cov.C_star > p.A

    def test_paper_behavior_leaves_good_state_action_uncovered(self):
        mdp, mu = make_lower_bound_instance(LowerBoundParams.random(3, 2, 4, 0.2, 0.3, 5))
        cov = coverage_coefficients(mdp, mu)
        assert cov.C_star == math.inf and cov.P_unif == 0.0

    def test_state_marginal_flag(self, two_action_loop):
        cov = coverage_coefficients(two_action_loop, uniform_behavior(two_action_loop), state_marginal=True)
        assert cov.C_star == 1.0

    def test_single_policy_coverage(self):
        mdp, mu = make_necessity_instance(NecessityParams(10, 0.1))
        route = np.zeros((2, mdp.S), dtype=int)
        assert single_policy_coverage(mdp, mu, Policy.deterministic(route)) == pytest.approx(1 / 11)


class TestSuboptimality:
    def test_optimal_policy_has_zero(self):
        m = random_mdp(9, 3, 3, 3)
        assert policy_suboptimality(m, greedy_policy(optimal_values(m).Q)) == pytest.approx(0.0, abs=1e-12)

    def test_necessity_wrong_at_last_state(self):
        k, tau = 10, 0.1
        mdp, _ = make_necessity_instance(NecessityParams(k, tau))
        actions = np.zeros((2, mdp.S), dtype=int)
        actions[0, NEC_START] = 1
        ret, _ = rollout(mdp.kernel.tolist(), mdp.rewards.tolist(), mdp.p0.tolist(), actions.tolist())
        brute = brute_force_value(mdp, necessity_cells(mdp)) - ret
        got = policy_suboptimality(mdp, Policy.deterministic(actions))
        assert got == pytest.approx(brute, abs=1e-12)
        assert got == pytest.approx(tau / k, abs=1e-12)

    def test_worst_policy_single_state(self, two_action_loop):
        assert policy_suboptimality(two_action_loop, Policy.deterministic([[1], [1]])) == 2.0


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(small_mdps())
    def test_dp_matches_exhaustive_enumeration(self, m):
        assert float(m.p0 @ optimal_values(m).V[0]) == pytest.approx(brute_force_value(m), abs=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(small_mdps(), st.integers(0, 2**31))
    def test_bellman_residuals(self, m, seed):
        vt = optimal_values(m)
        H = m.H
        for h in range(H):
            np.testing.assert_allclose(vt.Q[h], m.rewards[h] + m.kernel[h] @ vt.V[h + 1], atol=1e-10)
        pi = random_policy(seed, H, m.S, m.A)
        pv = policy_values(m, pi)
        for h in range(H):
            np.testing.assert_allclose(pv.Q[h], m.rewards[h] + m.kernel[h] @ pv.V[h + 1], atol=1e-10)
            np.testing.assert_allclose(pv.V[h], (pi.table[h] * pv.Q[h]).sum(-1), atol=1e-10)
        assert np.all(pv.V <= vt.V + 1e-10)
        assert policy_suboptimality(m, pi) >= -1e-10

    @settings(max_examples=40, deadline=None)
    @given(small_mdps(), st.integers(0, 2**31))
    def test_occupancy_flow(self, m, seed):
        pi = random_policy(seed, m.H, m.S, m.A)
        d = occupancy(m, pi).d
        np.testing.assert_allclose(d.sum(axis=(1, 2)), 1.0, atol=1e-10)
        for h in range(m.H - 1):
            np.testing.assert_allclose(np.einsum("sa,sat->t", d[h], m.kernel[h]), d[h + 1].sum(-1), atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(small_mdps(ties=True), st.integers(0, 2**31))
    def test_coverage_matches_enumeration(self, m, seed):
        try:
            gap_min(m)
        except NoPositiveGap:
            return
        mu = random_policy(seed, m.H, m.S, m.A)
        P, C, count = coverage_by_enumeration(m, mu.table)
        cov = coverage_coefficients(m, mu)
        assert cov.P_unif == pytest.approx(P, rel=1e-12)
        assert cov.C_star == pytest.approx(C, rel=1e-12)
        assert cov.C_star >= 1.0 - 1e-12 and cov.P_unif <= 1.0

    @settings(max_examples=30, deadline=None)
    @given(small_mdps(), st.floats(0.1, 10.0))
    def test_reward_scaling(self, m, c):
        try:
            base = coverage_coefficients(m, uniform_behavior(m))
        except NoPositiveGap:
            return
        scaled = m.with_rewards(m.rewards * c)
        cov = coverage_coefficients(scaled, uniform_behavior(scaled))
        assert cov.gap_min == pytest.approx(c * base.gap_min, rel=1e-9)
        np.testing.assert_allclose(optimal_values(scaled).Q, c * optimal_values(m).Q, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(cov.optimal_action_sets, base.optimal_action_sets)
        assert cov.C_star == pytest.approx(base.C_star, rel=1e-12)
        assert cov.P_unif == pytest.approx(base.P_unif, rel=1e-12)
