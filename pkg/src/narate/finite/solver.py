"""Sequential Blahut-Arimoto for the nonanticipative rate distortion function.

Kernels are handled internally in a compact Markov form with axes
``(y_0..y_{i-1}, x_i, y_i)``: for a single-letter distortion every tilt
depends on the source prefix only through ``x_i``.  Public results are
expanded to full :class:`ReproductionPolicy` objects.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..errors import DegenerateSupportError, DimensionError, NarateError
from ..model import (
    DERIVED_TOL,
    DistortionSpec,
    FiniteMarkovSource,
    RateDistortionPoint,
    ReproductionPolicy,
    check_capacity,
)
from .joint import (
    MarginalReproduction,
    directed_information,
    expected_distortion,
    joint_law,
    marginals_from_joint,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    final_change: float
    rate: float
    distortion: float
    s: float
    converged: bool


def reproduction_alphabet(source: FiniteMarkovSource, rho: DistortionSpec):
    if rho.kind == "single_letter_table":
        if rho.table.shape[0] != source.alphabet_size:
            raise DimensionError(
                f"distortion table has {rho.table.shape[0]} rows, source alphabet is {source.alphabet_size}"
            )
        return rho.table.shape[1]
    return source.alphabet_size


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def _compact_tilt(pmfs, source, rho_matrix, s, future_cost):
    """Tilted kernels in compact form, plus their per-step log-normalizers.

    Without ``future_cost`` each step is ``exp(s rho) P(y_i|y^{i-1})``
    normalized over ``y_i``.  With it, step ``i`` is further weighted by
    ``exp(-g_i)``, where ``g_i(y^i, x_i)`` is minus the expected
    log-normalizer of step ``i+1`` given ``x_i``; this is the stationarity
    condition of the Lagrangian over causal kernels.
    """
    n = len(pmfs) - 1
    kernels = [None] * (n + 1)
    log_norms = [None] * (n + 1)
    g = None
    for i in range(n, -1, -1):
        m = pmfs[i]
        # axes (y_0..y_{i-1}, x_i, y_i)
        logits = s * rho_matrix + _log(m)[..., None, :]
        if g is not None:
            logits = logits - g
        logz = logsumexp(logits, axis=-1)
        if np.any(~np.isfinite(logz)):
            bad = np.argwhere(~np.isfinite(logz))[0]
            hist = tuple(int(v) for v in bad)
            raise DegenerateSupportError(
                f"tilted kernel at step {i} has an empty support for history (y^{{i-1}}, x_i) = {hist}",
                history=hist,
            )
        kernels[i] = np.exp(logits - logz[..., None])
        log_norms[i] = logz
        if future_cost and i > 0:
            T = source.transition_at(i)
            # logz axes (y_0..y_{i-1}, x_i); contract x_i against P(x_i | x_{i-1})
            expected = np.tensordot(logz, T, axes=([i], [1]))
            # now (y_0..y_{i-1}, x_{i-1}); put y_{i-1} last
            g = -np.swapaxes(expected, -1, -2)
        else:
            g = None
    return kernels, log_norms


def _forward(kernels, source):
    """Reproduction marginals and ``P(y^{i-1}, x_i)`` from compact kernels."""
    n = len(kernels) - 1
    ny = kernels[0].shape[-1]
    alpha = source.initial_pmf.copy()
    pmfs, mass, alphas = [], [], []
    for i in range(n + 1):
        alphas.append(alpha)
        k = kernels[i]
        joint_i = alpha[..., None] * k  # (y^{i-1}, x_i, y_i)
        py = joint_i.sum(axis=-2)  # (y^{i-1}, y_i)
        hist = py.sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = py / hist[..., None]
        cond = np.where(hist[..., None] > 0, cond, 1.0 / ny)
        pmfs.append(cond)
        mass.append(hist)
        if i < n:
            T = source.transition_at(i + 1)
            nxt = np.tensordot(joint_i, T, axes=([i], [0]))  # (y^{i-1}, y_i, x_{i+1})
            alpha = nxt
    return MarginalReproduction(tuple(pmfs), tuple(mass)), alphas


def _compact_from_policy(policy):
    """Compact kernels of a policy whose steps depend on the source only through ``x_i``."""
    out = []
    for i, k in enumerate(policy.kernels):
        idx = (slice(None),) * i + (0,) * i + (slice(None), slice(None))
        compact = k[idx]
        expanded = compact.reshape(compact.shape[:i] + (1,) * i + compact.shape[i:])
        if not np.array_equal(np.broadcast_to(expanded, k.shape), k):
            raise ValueError(f"kernel {i} depends on x^{{i-1}}; no compact form exists")
        out.append(np.array(compact))
    return out


def tilt_kernel(
    marginals: MarginalReproduction,
    source: FiniteMarkovSource,
    rho: DistortionSpec,
    s: float,
    future_cost: bool = False,
) -> ReproductionPolicy:
    """Exponentially tilt reproduction marginals into a causal policy.

    ``P(y_i | y^{i-1}, x^i) = exp(s rho(x_i, y_i)) P(y_i | y^{i-1}) / Z``.
    The result depends on the source prefix only through ``x_i``.
    ``future_cost=True`` adds the backward correction described in
    :func:`fixed_point_solve`.
    """
    if s > 0:
        raise ValueError(f"s must be <= 0, got {s}")
    ny = reproduction_alphabet(source, rho)
    if marginals.horizon != source.horizon or marginals.alphabet_size != ny:
        raise DimensionError("marginals do not match the source horizon or reproduction alphabet")
    rho_matrix = rho.matrix(source.alphabet_size, ny)
    kernels, _ = _compact_tilt(marginals.pmfs, source, rho_matrix, s, future_cost)
    return ReproductionPolicy.from_markov(kernels, source.alphabet_size, ny)


def evaluate_policy(source, policy, rho, s=0.0):
    """Exact per-symbol ``RateDistortionPoint`` of an arbitrary causal policy."""
    joint = joint_law(source, policy)
    di = directed_information(source, policy).value
    ed = expected_distortion(joint, rho.matrix(source.alphabet_size, policy.alphabet_size_y))
    n1 = source.horizon + 1
    return RateDistortionPoint(s, di / n1, ed / n1, source.horizon, lagrangian=di - s * ed)


def fixed_point_solve(
    source: FiniteMarkovSource,
    rho: DistortionSpec,
    s: float,
    tol: float = 1e-10,
    max_iter: int = 10000,
    damping: float = 1.0,
    future_cost: bool = True,
    init: MarginalReproduction | None = None,
):
    """Alternate tilting and marginal recomputation to a self-consistent policy.

    Each sweep (a) tilts the current reproduction marginals into kernels and
    (b) recomputes ``P(y_i | y^{i-1})`` from the joint law those kernels
    induce.  Iteration stops when the sup-norm kernel change over histories
    of positive probability falls below ``tol``.

    With ``future_cost=True`` (default) step (a) includes the backward term
    ``g_i``; the pair of steps is then an alternating minimization of a
    jointly convex divergence and its limit minimizes the Lagrangian
    ``I(X^n -> Y^n) - s E d``.  ``future_cost=False`` tilts by the
    marginals alone; for i.i.d. sources or ``n = 0`` both coincide, for
    Markov sources with ``n >= 1`` the plain tilt stops at a different point.

    Returns ``(policy, point, report)`` with per-symbol rate (nats) and
    distortion evaluated exactly on the final policy.
    """
    if s > 0:
        raise ValueError(f"s must be <= 0, got {s}")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    nx = source.alphabet_size
    ny = reproduction_alphabet(source, rho)
    n = source.horizon
    check_capacity(nx, ny, n)
    rho_matrix = rho.matrix(nx, ny)

    marg = init if init is not None else MarginalReproduction.uniform(ny, n)
    if marg.horizon != n or marg.alphabet_size != ny:
        raise DimensionError("initial marginals do not match the instance")
    # the s = 0 tilt of the starting marginals is the reference for the first change
    prev = [np.broadcast_to(m[..., None, :], m.shape[:-1] + (nx, ny)) for m in marg.pmfs]
    pmfs = marg.pmfs
    change = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        kernels, _ = _compact_tilt(pmfs, source, rho_matrix, s, future_cost)
        if damping < 1.0:
            kernels = [damping * k + (1 - damping) * p for k, p in zip(kernels, prev)]
        new_marg, alphas = _forward(kernels, source)
        change = 0.0
        for i, (k, p) in enumerate(zip(kernels, prev)):
            # histories (y^{i-1}, x_i) of zero probability are left out
            live = np.broadcast_to((alphas[i] > 0)[..., None], k.shape)
            if np.any(live):
                change = max(change, float(np.max(np.abs(k - p)[live])))
        prev = kernels
        pmfs = new_marg.pmfs
        if change < tol:
            converged = True
            break
    if not converged:
        logger.warning("fixed_point_solve: no convergence after %d iterations (s=%g, change=%.3g)", it, s, change)

    policy = ReproductionPolicy.from_markov(prev, nx, ny)
    point = evaluate_policy(source, policy, rho, s)
    report = SolverReport(it, change, point.rate, point.distortion, s, converged)
    return policy, point, report


def self_consistency_residual(policy, source, rho, s, future_cost=False):
    """Sup-norm gap between a policy and the tilt of its own marginals.

    Only histories ``y^{i-1}`` of positive probability are compared.
    ``future_cost=False`` checks the plain exponential-tilt form.
    """
    joint = joint_law(source, policy)
    marg = marginals_from_joint(joint)
    retilted = tilt_kernel(marg, source, rho, s, future_cost=future_cost)
    worst = 0.0
    for i, (a, b) in enumerate(zip(policy.kernels, retilted.kernels)):
        mass = marg.history_mass[i]
        live = mass.reshape(mass.shape + (1,) * (a.ndim - i)) > 0
        diff = np.abs(a - b)
        diff = np.where(live, diff, 0.0)
        worst = max(worst, float(diff.max()))
    return worst


def parametric_rate(policy, source, rho, s, future_cost=False):
    """Per-symbol rate (nats) from the log-normalizers of the tilt.

    With ``future_cost=False`` this is ``(s E d - sum_i E log Z_i) / (n+1)``,
    where ``Z_i`` normalizes the plain tilt of the policy's own marginals.
    With ``future_cost=True`` the backward terms telescope and only the
    step-0 normalizer remains: ``(s E d - E log Z_0) / (n+1)``.  Either
    expression equals the directed information of a policy that is a fixed
    point of the corresponding tilt.
    """
    nx = source.alphabet_size
    ny = policy.alphabet_size_y
    rho_matrix = rho.matrix(nx, ny)
    joint = joint_law(source, policy)
    marg = marginals_from_joint(joint)
    compact = _compact_from_policy(policy)
    _, alphas = _forward(compact, source)
    _, log_norms = _compact_tilt(marg.pmfs, source, rho_matrix, s, future_cost)
    ed = expected_distortion(joint, rho_matrix)
    steps = [0] if future_cost else range(source.horizon + 1)
    expected_log_z = sum(float(np.sum(alphas[i] * log_norms[i])) for i in steps)
    return (s * ed - expected_log_z) / (source.horizon + 1)


def sweep(source, rho, s_grid, warm_start=True, **solver_kw):
    """Run :func:`fixed_point_solve` along ``s_grid``; returns ``(point, report)`` pairs."""
    s_grid = [float(s) for s in s_grid]
    if not s_grid:
        raise ValueError("s_grid is empty")
    if any(s > 0 for s in s_grid):
        raise ValueError("every s must be <= 0")
    if any(b > a for a, b in zip(s_grid, s_grid[1:])):
        raise ValueError("s_grid must be sorted descending (toward -inf)")
    out = []
    init = None
    for s in s_grid:
        policy, point, report = fixed_point_solve(source, rho, s, init=init, **solver_kw)
        if not report.converged:
            logger.warning("rd sweep: point s=%g did not converge", s)
        if warm_start:
            init = marginals_from_joint(joint_law(source, policy))
        out.append((point, report))
    _check_monotone([p for p, r in out if r.converged])
    return out


def _check_monotone(points):
    for a, b in zip(points, points[1:]):
        if b.distortion > a.distortion + DERIVED_TOL or b.rate < a.rate - DERIVED_TOL:
            raise NarateError(
                f"rate-distortion trace is not monotone between s={a.s} and s={b.s}: "
                f"(D, R) went from ({a.distortion}, {a.rate}) to ({b.distortion}, {b.rate})"
            )


def rd_curve(source, rho, s_grid, warm_start=True, **solver_kw):
    """Lagrangian trace of the nonanticipative RDF, one point per ``s``."""
    return [p for p, _ in sweep(source, rho, s_grid, warm_start=warm_start, **solver_kw)]
