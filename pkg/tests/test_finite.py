import itertools
import json
import math

import numpy as np
import pytest
from conftest import markov_source, random_markov

from narate import DegenerateSupportError, DistortionSpec, FiniteMarkovSource, ReproductionPolicy
from narate.finite import (
    MarginalReproduction,
    binary_hamming_rdf,
    blahut_arimoto,
    directed_information,
    evaluate_policy,
    fixed_point_solve,
    joint_law,
    parametric_rate,
    rd_curve,
    reproduction_marginals,
    self_consistency_residual,
    sweep,
    tilt_kernel,
)


def bsc(eps):
    return np.array([[1 - eps, eps], [eps, 1 - eps]])


def per_step_bsc(eps, n):
    return ReproductionPolicy.from_markov(
        [np.broadcast_to(bsc(eps), (2,) * i + (2, 2)) for i in range(n + 1)], 2, 2
    )


def random_policy(rng, n, nx=2, ny=2):
    kernels = [rng.dirichlet(np.ones(ny), size=(ny,) * i + (nx,) * (i + 1)) for i in range(n + 1)]
    return ReproductionPolicy(tuple(kernels), nx, ny)


def enumerate_di_n1(source, policy):
    """I(X0;Y0) + I(X0,X1;Y1|Y0) from the 16 joint entries, by explicit loops."""
    P = {}
    for x0, x1, y0, y1 in itertools.product(range(2), repeat=4):
        px = source.initial_pmf[x0] * source.transition_at(1)[x0, x1]
        P[x0, x1, y0, y1] = px * policy.prob(0, (), (x0,), y0) * policy.prob(1, (y0,), (x0, x1), y1)

    def marg(keep):
        out = {}
        for k, v in P.items():
            key = tuple(k[j] for j in keep)
            out[key] = out.get(key, 0.0) + v
        return out

    p_x0y0, p_x0, p_y0 = marg((0, 2)), marg((0,)), marg((2,))
    i0 = sum(v * math.log(v / (p_x0[(a,)] * p_y0[(b,)])) for (a, b), v in p_x0y0.items() if v > 0)
    p_xxyy = P
    p_xxy0 = marg((0, 1, 2))
    p_y0y1 = marg((2, 3))
    i1 = 0.0
    for (a, b, c, d), v in p_xxyy.items():
        if v > 0:
            i1 += v * math.log(v * p_y0[(c,)] / (p_xxy0[(a, b, c)] * p_y0y1[(c, d)]))
    return i0 + i1


def test_di_zero_for_source_independent_policy():
    rng = np.random.default_rng(0)
    src = random_markov(rng, 2)
    pmfs = [rng.dirichlet(np.ones(2), size=(2,) * i) for i in range(3)]
    di = directed_information(src, ReproductionPolicy.independent(pmfs, 2))
    assert abs(di.value) < 1e-12 and abs(di.kl_form) < 1e-12


def test_di_identity_copy_is_ln2():
    src = FiniteMarkovSource.iid([0.5, 0.5], 0)
    pol = ReproductionPolicy((np.eye(2),), 2, 2)
    assert abs(directed_information(src, pol).value - math.log(2)) < 1e-14


def test_di_matches_enumeration_oracle():
    src = markov_source(0.3, 1)
    pol = per_step_bsc(0.1, 1)
    di = directed_information(src, pol)
    assert abs(di.value - enumerate_di_n1(src, pol)) < 1e-13
    assert di.gap < 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_di_two_forms_agree(seed):
    rng = np.random.default_rng(seed)
    n = seed % 3
    src = random_markov(rng, n, nx=2 + seed % 2)
    pol = random_policy(rng, n, nx=src.alphabet_size, ny=2)
    di = directed_information(src, pol)
    assert di.gap < 1e-10
    if n == 1 and src.alphabet_size == 2:
        assert abs(di.value - enumerate_di_n1(src, pol)) < 1e-12


def test_joint_recovers_source_law():
    rng = np.random.default_rng(4)
    src = random_markov(rng, 2)
    J = joint_law(src, random_policy(rng, 2))
    assert abs(J.table.sum() - 1) < 1e-12
    assert np.max(np.abs(J.source_marginal() - src.joint())) < 1e-15


def test_tilt_s_zero_returns_marginals():
    rng = np.random.default_rng(5)
    src = random_markov(rng, 1)
    marg = reproduction_marginals(src, random_policy(rng, 1))
    pol = tilt_kernel(marg, src, DistortionSpec.hamming(2), 0.0)
    for i, k in enumerate(pol.kernels):
        m = marg.pmfs[i]
        assert np.allclose(k, m.reshape(m.shape[:-1] + (1,) * (i + 1) + m.shape[-1:]), atol=1e-15)


def test_tilt_by_hand():
    src = FiniteMarkovSource.iid([0.5, 0.5], 0)
    pol = tilt_kernel(MarginalReproduction.uniform(2, 0), src, DistortionSpec.hamming(2), -1.0)
    want = 1 / (1 + math.exp(-1))
    assert abs(pol.kernels[0][0, 0] - want) < 1e-15
    assert abs(want - 0.7311) < 1e-4


def test_tilt_concentrates_for_large_slope():
    src = markov_source(0.3, 2)
    pol = tilt_kernel(MarginalReproduction.uniform(2, 2), src, DistortionSpec.hamming(2), -50.0)
    for i in range(3):
        for yh, xh in pol.histories(i):
            assert abs(pol.prob(i, yh, xh, xh[-1]) - 1) < 1e-10


def test_tilt_markov_form():
    src = markov_source(0.2, 2)
    pol = tilt_kernel(MarginalReproduction.uniform(2, 2), src, DistortionSpec.hamming(2), -1.5)
    k = pol.kernels[2]  # axes (y0, y1, x0, x1, x2, y2)
    for x0, x1 in itertools.product(range(2), repeat=2):
        assert np.array_equal(k[:, :, x0, x1], k[:, :, 0, 0])
    assert not np.array_equal(k[:, :, 0, 0, 0], k[:, :, 0, 0, 1])


def test_tilt_degenerate_support():
    src = FiniteMarkovSource.iid([0.5, 0.5], 0)
    marg = MarginalReproduction((np.zeros(2),), (np.ones(()),))
    with pytest.raises(DegenerateSupportError):
        tilt_kernel(marg, src, DistortionSpec.hamming(2), -1.0)


def test_solver_s_zero():
    src = markov_source(0.3, 2)
    pol, point, rep = fixed_point_solve(src, DistortionSpec.hamming(2), 0.0)
    assert rep.iterations == 1 and rep.converged
    assert point.rate == 0.0
    assert abs(point.distortion - 0.5) < 1e-12
    assert np.allclose(pol.kernels[1], 0.5)


@pytest.mark.parametrize("s", [-0.5, -1.0, -2.5, -6.0])
def test_solver_matches_blahut_arimoto_at_n0(s):
    src = FiniteMarkovSource.iid([0.5, 0.5], 0)
    rho = DistortionSpec.hamming(2)
    _, point, rep = fixed_point_solve(src, rho, s)
    r, d = blahut_arimoto([0.5, 0.5], rho.matrix(2), s)
    assert rep.converged
    assert abs(point.rate - r) < 1e-8 and abs(point.distortion - d) < 1e-8


def test_solver_nonuniform_table_against_blahut_arimoto():
    rho = DistortionSpec("single_letter_table", [[0.0, 1.0, 0.4], [1.0, 0.0, 0.4], [0.7, 0.7, 0.0]])
    src = FiniteMarkovSource.iid([0.5, 0.3, 0.2], 0)
    _, point, _ = fixed_point_solve(src, rho, -3.0)
    r, d = blahut_arimoto(src.initial_pmf, rho.matrix(3), -3.0)
    assert abs(point.rate - r) < 1e-8 and abs(point.distortion - d) < 1e-8


@pytest.mark.parametrize("n", [0, 1, 2])
def test_plain_tilt_solver_is_self_consistent(n):
    src = markov_source(0.3, n)
    rho = DistortionSpec.hamming(2)
    pol, _, _ = fixed_point_solve(src, rho, -2.0, future_cost=False)
    assert self_consistency_residual(pol, src, rho, -2.0) < 1e-8


@pytest.mark.parametrize("n", [0, 1, 2])
def test_default_solver_satisfies_exact_stationarity(n):
    src = markov_source(0.3, n)
    rho = DistortionSpec.hamming(2)
    pol, _, _ = fixed_point_solve(src, rho, -2.0)
    assert self_consistency_residual(pol, src, rho, -2.0, future_cost=True) < 1e-8


def test_forms_coincide_without_memory():
    rho = DistortionSpec.hamming(2)
    for src in (FiniteMarkovSource.iid([0.3, 0.7], 2), markov_source(0.3, 0)):
        pol, _, _ = fixed_point_solve(src, rho, -2.0)
        assert self_consistency_residual(pol, src, rho, -2.0) < 1e-8


def test_plain_tilt_is_not_optimal_for_markov_memory():
    src = markov_source(0.3, 1)
    rho = DistortionSpec.hamming(2)
    _, exact, _ = fixed_point_solve(src, rho, -2.0)
    pol_plain, plain, _ = fixed_point_solve(src, rho, -2.0, future_cost=False)
    assert exact.lagrangian < plain.lagrangian - 1e-3
    # plain-tilt fixed points fail the exact stationarity condition
    assert self_consistency_residual(pol_plain, src, rho, -2.0, future_cost=True) > 1e-3


@pytest.mark.parametrize("future_cost", [False, True])
def test_parametric_rate_equals_directed_information(future_cost):
    src = markov_source(0.25, 2)
    rho = DistortionSpec.hamming(2)
    pol, point, _ = fixed_point_solve(src, rho, -1.7, future_cost=future_cost)
    assert abs(parametric_rate(pol, src, rho, -1.7, future_cost=future_cost) - point.rate) < 1e-9


def test_nonanticipation_random_permutations():
    rng = np.random.default_rng(11)
    src = random_markov(rng, 3)
    rho = DistortionSpec.hamming(2)
    pol, _, _ = fixed_point_solve(src, rho, -1.3)
    for _ in range(200):
        i = int(rng.integers(0, 3))
        yh = tuple(rng.integers(0, 2, i))
        xh = tuple(rng.integers(0, 2, i + 1))
        y = int(rng.integers(0, 2))
        tails = [tuple(rng.integers(0, 2, 3 - i)) for _ in range(2)]
        assert pol.prob(i, yh, xh + tails[0], y) == pol.prob(i, yh, xh + tails[1], y)


def test_policy_round_trip_after_solve():
    src = markov_source(0.3, 1)
    pol, _, _ = fixed_point_solve(src, DistortionSpec.hamming(2), -1.0)
    back = ReproductionPolicy.from_dict(json.loads(json.dumps(pol.to_dict())))
    assert all(np.array_equal(a, b) for a, b in zip(pol.kernels, back.kernels))


def test_evaluate_policy_bsc():
    src = markov_source(0.3, 1)
    point = evaluate_policy(src, per_step_bsc(0.1, 1), DistortionSpec.hamming(2), -1.0)
    assert abs(point.distortion - 0.1) < 1e-14


def test_rd_curve_single_zero():
    src = FiniteMarkovSource.iid([0.5, 0.5], 0)
    pts = rd_curve(src, DistortionSpec.hamming(2), [0.0])
    assert len(pts) == 1 and pts[0].rate == 0.0 and abs(pts[0].distortion - 0.5) < 1e-12


def test_rd_curve_closed_form():
    src = FiniteMarkovSource.iid([0.5, 0.5], 0)
    pts = rd_curve(src, DistortionSpec.hamming(2), np.linspace(0, -6, 20))
    for p in pts:
        assert abs(p.rate - binary_hamming_rdf(p.distortion)) < 1e-3
    for a, b in zip(pts, pts[1:]):
        assert b.distortion <= a.distortion and b.rate >= a.rate


def test_rd_curve_markov_monotone():
    src = markov_source(0.2, 2)
    pts = rd_curve(src, DistortionSpec.hamming(2), np.linspace(-0.2, -5, 12))
    for a, b in zip(pts, pts[1:]):
        assert b.distortion <= a.distortion + 1e-9 and b.rate >= a.rate - 1e-9


def test_sweep_grid_validation():
    src = FiniteMarkovSource.iid([0.5, 0.5], 0)
    rho = DistortionSpec.hamming(2)
    with pytest.raises(ValueError):
        sweep(src, rho, [-2.0, -1.0])
    with pytest.raises(ValueError):
        sweep(src, rho, [0.5])
    with pytest.raises(ValueError):
        sweep(src, rho, [])


def test_nonconvergence_reported():
    src = markov_source(0.3, 2)
    _, _, rep = fixed_point_solve(src, DistortionSpec.hamming(2), -0.3, max_iter=3)
    assert not rep.converged and rep.iterations == 3


def test_damping_reaches_same_point():
    src = markov_source(0.3, 1)
    rho = DistortionSpec.hamming(2)
    _, a, _ = fixed_point_solve(src, rho, -2.0)
    _, b, _ = fixed_point_solve(src, rho, -2.0, damping=0.5, max_iter=50000)
    assert abs(a.rate - b.rate) < 1e-8 and abs(a.distortion - b.distortion) < 1e-8
