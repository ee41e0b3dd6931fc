import numpy as np
import pytest

from jflow import checks
from jflow import problems as P
from jflow.energy import ExtendedFunctional, QuadraticTerm
from jflow.flow import resolvent
from jflow.hilbert import ConvexSetOracle, box, positive_cone, power, threshold_excess
from jflow.pairs import JEllipticPair, JMap
from jflow.hilbert import WeightedSpace

FAST = dict(samples=12, T=0.4, tau=0.05, dynamic_samples=3)


def full_space():
    return ConvexSetOracle("full-space", lambda u: u)


def coupling_quad_pair():
    # E = 0.5 (x1 + x2)^2: convex but meets/joins can raise it
    Q = np.ones((2, 2))
    E = ExtendedFunctional([QuadraticTerm(Q)], 2)
    return JEllipticPair(E, JMap(np.eye(2)), WeightedSpace(np.ones(2)))


def test_invariance_positive_cone_robin(robin_small):
    rep = checks.check_invariance(robin_small, positive_cone(), seed=0, resolvent_samples=4, **FAST)
    assert rep.passed
    assert rep.max_violation <= rep.tolerance


def test_invariance_full_space_trivial(robin_small):
    rep = checks.check_invariance(robin_small, full_space(), seed=1, resolvent_samples=2, **FAST)
    assert rep.passed
    assert rep.max_violation <= 1e-12


def test_invariance_violated_for_far_box():
    # flow decays toward zero, so a set pinned below -1 cannot be invariant
    pair = P.build_dirichlet(P.chain(5, 0.5), 2.0)
    wall = box(np.full(3, -100.0), np.full(3, -1.0))
    rep = checks.check_invariance(pair, wall, seed=2, resolvent_samples=3, **FAST)
    assert not rep.passed
    assert rep.witness is not None


def test_relative_invariance_c1_full_reduces(robin_small):
    rep = checks.check_relative_invariance(robin_small, full_space(), positive_cone(), seed=3, **FAST)
    base = checks.check_invariance(robin_small, positive_cone(), seed=3, resolvent_samples=0, **FAST)
    assert rep.passed == base.passed


def test_relative_invariance_box_and_cone(robin_small):
    c1 = box(np.full(9, -1.0), np.full(9, 1.0))
    rep = checks.check_relative_invariance(robin_small, c1, positive_cone(), seed=4, **FAST)
    assert rep.passed


def test_relative_invariance_precondition_violated(robin_small):
    c1 = box(np.full(9, 0.5), np.full(9, 1.0))
    c2 = box(np.full(9, -2.0), np.full(9, 0.0))  # projecting into c2 exits c1
    with pytest.raises(ValueError, match="precondition"):
        checks.check_relative_invariance(robin_small, c1, c2, seed=5, **FAST)


def test_relative_invariance_misaligned_set():
    pair = P.build_dirichlet(P.chain(5, 0.5), 2.0)
    c2 = box(np.full(3, 0.5), np.full(3, 100.0))  # flow decays below the floor
    rep = checks.check_relative_invariance(pair, full_space(), c2, seed=6, **FAST)
    assert not rep.passed


def test_comparison_diagonal_is_order_preservation(robin_small):
    rep = checks.check_comparison(robin_small, robin_small, seed=7, **FAST)
    assert rep.passed


def test_comparison_dirichlet_dominated_by_coupled(coupled_small):
    # same data space: inner 4 nodes of a 10-chain at the same spacing;
    # the crossed inequality interleaves zero extensions with the free
    # ones only when all data share the sign, hence the cone
    dirichlet = P.build_dirichlet(P.chain(6, 0.2), 2.0)
    rep = checks.check_comparison(dirichlet, coupled_small, C=positive_cone(), seed=8, **FAST)
    assert rep.passed


def test_comparison_informative_failure():
    rep = checks.check_comparison(coupling_quad_pair(), coupling_quad_pair(), seed=9, **FAST)
    assert not rep.passed
    assert rep.max_violation > rep.tolerance


def test_order_preserving_linear_heat(robin_small):
    rep = checks.check_order_preserving(robin_small, seed=10, **FAST)
    assert rep.passed


def test_order_preserving_p3(robin_small_p3):
    rep = checks.check_order_preserving(robin_small_p3, seed=11, **FAST)
    assert rep.passed


def test_order_preserving_crafted_failure():
    rep = checks.check_order_preserving(coupling_quad_pair(), seed=12, **FAST)
    assert not rep.passed
    assert rep.witness is not None


def test_domination_coupled_over_dirichlet(coupled_small):
    dirichlet = P.build_dirichlet(P.chain(6, 0.2), 2.0)
    rep = checks.check_domination(dirichlet, coupled_small, seed=13, hypothesis_samples=5, **FAST)
    assert rep.passed


def test_domination_self_for_positive_flow(robin_small):
    rep = checks.check_domination(robin_small, robin_small, seed=14, hypothesis_samples=5, **FAST)
    assert rep.passed


def test_domination_dirichlet_by_neumann():
    h = 0.25
    dirichlet = P.build_dirichlet(P.chain(6, h), 2.0)  # 4 interior nodes
    neumann = P.build_neumann(P.chain(4, h), 2.0)  # 4 nodes, same weights
    rep = checks.check_domination(dirichlet, neumann, seed=15, hypothesis_samples=5, **FAST)
    assert rep.passed


def test_domination_hypothesis_failure_is_error(robin_small):
    n = robin_small.space.dim
    bad = JEllipticPair(
        ExtendedFunctional([QuadraticTerm(np.ones((n, n)))], n), JMap(np.eye(n)), robin_small.space
    )
    with pytest.raises(ValueError, match="hypothesis"):
        checks.check_domination(robin_small, bad, seed=16, hypothesis_samples=5, **FAST)


def test_linf_alpha_exceeding_gap_is_equality(robin_small):
    rng = np.random.default_rng(17)
    u1 = checks.sample_states(robin_small, 1, rng)[0]
    u2 = checks.sample_states(robin_small, 1, rng)[0]
    alpha = 2.0 * float(np.max(np.abs(u1 - u2))) + 1.0
    mid = 0.5 * (u1 + u2)
    v1 = np.minimum(np.maximum(u1, mid - alpha / 2), mid + alpha / 2)
    v2 = np.maximum(np.minimum(u2, mid + alpha / 2), mid - alpha / 2)
    assert np.array_equal(v1, u1) and np.array_equal(v2, u2)


def test_linf_contractivity_robin(robin_small_p3):
    rep = checks.check_linf_contractivity(robin_small_p3, seed=18, **FAST)
    assert rep.passed


def test_linf_contractivity_dtn(dtn_chain16):
    rep = checks.check_linf_contractivity(dtn_chain16, seed=19, **FAST)
    assert rep.passed


def test_complete_contractivity_square_gauge(robin_small):
    rep = checks.check_complete_contractivity(robin_small, psi_family=[power(2.0)], samples=3, T=0.4, tau=0.05, seed=20)
    assert rep.passed


def test_complete_contractivity_huge_threshold(robin_small):
    rep = checks.check_complete_contractivity(
        robin_small, psi_family=[threshold_excess(1e6)], samples=2, T=0.2, tau=0.05, seed=21
    )
    assert rep.passed
    assert rep.max_violation <= 0.0


def test_complete_contractivity_full_family(robin_small):
    rep = checks.check_complete_contractivity(robin_small, samples=3, T=0.4, tau=0.05, seed=22)
    assert rep.passed


def make_op_pairs(pair, count, lam=0.2, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        g = rng.normal(size=pair.space.dim)
        r = resolvent(pair, lam, g)
        out.append((r.u, r.f))
    return out


def test_psi_accretive_h_norm_squared(robin_small):
    pairs = make_op_pairs(robin_small, 6, seed=23)
    psi = lambda w: float(np.sum(robin_small.space.weights * w * w))
    rep = checks.check_psi_accretive(robin_small, psi, pairs, seed=23, T=0.3, tau=0.05, psi_name="h-square")
    assert rep.passed and rep.details["crosscheck_agrees"]


def test_psi_accretive_l1_robin(robin_small):
    pairs = make_op_pairs(robin_small, 6, seed=24)
    rep = checks.check_psi_accretive(
        robin_small, checks.l1_functional(robin_small.space), pairs, seed=24, T=0.3, tau=0.05, psi_name="l1"
    )
    assert rep.passed and rep.details["crosscheck_agrees"]


def test_psi_accretive_crafted_failure():
    pair = coupling_quad_pair()
    psi = checks.l1_functional(pair.space)
    crafted = [(np.array([1.0, 0.0]), np.array([-1.0, 0.0])), (np.zeros(2), np.zeros(2))]
    rep = checks.check_psi_accretive(pair, psi, crafted, verify_tol=None, seed=25, T=0.2, tau=0.05)
    assert not rep.details["accretive_passed"]


def test_psi_accretive_rejects_unverified_pairs(robin_small):
    bogus = [(np.ones(robin_small.space.dim), 50.0 * np.ones(robin_small.space.dim))]
    with pytest.raises(ValueError, match="membership"):
        checks.check_psi_accretive(robin_small, checks.l1_functional(robin_small.space), bogus, verify_tol=1e-6)


def test_interpolation_consistency_robin(robin_small):
    rep = checks.check_interpolation_consistency(robin_small, samples=6, T=0.3, tau=0.05, seed=26)
    assert rep.passed
    assert all(rep.details["verdicts"].values())


def test_interpolation_consistency_mutation_flagged(robin_small):
    rep = checks.check_interpolation_consistency(
        robin_small, override_verdicts={"order": True, "l1": True, "linf": True, "complete": False}
    )
    assert not rep.passed
    rep_ok = checks.check_interpolation_consistency(
        robin_small, override_verdicts={"order": True, "l1": False, "linf": True, "complete": False}
    )
    assert rep_ok.passed


def test_reports_are_deterministic(robin_small):
    a = checks.check_order_preserving(robin_small, seed=41, **FAST)
    b = checks.check_order_preserving(robin_small, seed=41, **FAST)
    assert a.to_dict() == b.to_dict()


def test_report_invariant_passed_iff_within_tolerance(robin_small):
    rep = checks.check_invariance(robin_small, positive_cone(), seed=42, resolvent_samples=2, **FAST)
    assert rep.passed == (rep.max_violation <= rep.tolerance)
