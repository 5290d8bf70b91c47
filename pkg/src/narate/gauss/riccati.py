"""Infinite-horizon fixed point, finite-horizon gain schedules and source-channel matching."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..errors import ConvergenceError, InfeasibleDistortionError
from ..model import StateSpaceModel, validate_model
from ..waterfill import allocate, rate_of
from .design import diagonalize, design_gains, filter_gain


@dataclass(frozen=True, eq=False)
class StepDesign:
    t: int
    sigma: np.ndarray
    Lambda: np.ndarray
    gains: object
    channel: object
    saturated: bool

    @property
    def trace_T(self):
        return float(np.trace(self.gains.T))


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    sigma: np.ndarray
    Lambda: np.ndarray
    allocation: object
    gains: object
    channel: object
    power: float
    rate: float
    iterations: int
    residual: float
    D: float
    Q: float

    @property
    def eigenvalues(self):
        return self.allocation.eigenvalues

    @property
    def deltas(self):
        return self.allocation.deltas


def _design_step(model, sigma, D, Q, decoder, channel, clip):
    Lambda = model.C @ sigma @ model.C.T + model.G @ model.G.T
    Lambda = 0.5 * (Lambda + Lambda.T)
    _, lam = diagonalize(Lambda)
    total = float(lam.sum())
    saturated = D >= total
    if D > total * (1 + 1e-12) and not clip:
        raise InfeasibleDistortionError(
            f"distortion {D} exceeds the innovation variance {total}", (0.0, total)
        )
    alloc = allocate(lam, min(D, total))
    gains, chan = design_gains(Lambda, alloc, Q, decoder=decoder, channel=channel)
    return Lambda, gains, chan, saturated


def riccati_map(model, sigma, D, Q, decoder="mmse", channel="parallel"):
    """One pass of ``Sigma -> Lambda -> allocation -> gains -> Sigma_next``."""
    Lambda, gains, chan, saturated = _design_step(model, sigma, D, Q, decoder, channel, clip=True)
    _, _, sigma_next = filter_gain(model, sigma, gains)
    return sigma_next, Lambda, gains, chan, saturated


def riccati_infinite(model: StateSpaceModel, D, Q, tol=1e-9, max_iter=100_000, decoder="mmse", channel="parallel"):
    """Iterate the coupled covariance / design recursion to its fixed point.

    Starting from ``x0_cov``, each pass recomputes the innovation covariance,
    water-fills ``D`` over its eigenvalues, designs gains and propagates the
    modified Kalman covariance.  While ``D`` exceeds the innovation variance
    nothing is transmitted.  At convergence ``D`` must lie in
    ``(0, tr Lambda_inf]``.

    Returns a :class:`RiccatiSolution` with steady power
    ``P = Q sum_i (lambda_i / delta_i - 1)`` and rate
    ``(1/2) sum_i ln(lambda_i / delta_i)`` nats per symbol.
    """
    diagnostics = [d for d in validate_model(model, infinite_horizon=True) if "x0_cov" not in d]
    if diagnostics:
        raise ValueError("model unsuitable for the infinite-horizon realization: " + "; ".join(diagnostics))
    if not D > 0:
        raise InfeasibleDistortionError(f"distortion must be positive, got {D}")
    sigma = np.array(model.x0_cov, dtype=float)
    converged = False
    it = 0
    for it in range(1, int(max_iter) + 1):
        sigma_next = riccati_map(model, sigma, D, Q, decoder, channel)[0]
        if not np.all(np.isfinite(sigma_next)):
            raise ConvergenceError(f"covariance diverged after {it} iterations")
        step = float(np.max(np.abs(sigma_next - sigma)))
        sigma = sigma_next
        if step < 1e-2 * tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} iterations")
    sigma_next, Lambda, gains, chan, saturated = riccati_map(model, sigma, D, Q, decoder, channel)
    residual = float(np.max(np.abs(sigma_next - sigma)))
    total = float(np.trace(Lambda))
    if saturated and D > total * (1 + 1e-12):
        raise InfeasibleDistortionError(
            f"distortion {D} exceeds the steady innovation variance {total}; feasible range is (0, {total}]",
            (0.0, total),
        )
    alloc = gains.allocation
    return RiccatiSolution(sigma, Lambda, alloc, gains, chan, chan.power, rate_of(alloc), it, residual, float(D), float(Q))


def gain_schedule(model: StateSpaceModel, D, Q, horizon, decoder="mmse", channel="parallel"):
    """Per-step designs for ``t = 0..horizon-1`` starting from ``Sigma_0 = x0_cov``.

    Raises :class:`InfeasibleDistortionError` if ``D`` exceeds the innovation
    variance at some step.
    """
    sigma = np.array(model.x0_cov, dtype=float)
    steps = []
    for t in range(int(horizon)):
        try:
            Lambda, gains, chan, saturated = _design_step(model, sigma, D, Q, decoder, channel, clip=False)
        except InfeasibleDistortionError as exc:
            raise InfeasibleDistortionError(f"step {t}: {exc}", exc.feasible_range) from exc
        steps.append(StepDesign(t, sigma, Lambda, gains, chan, saturated))
        _, _, sigma = filter_gain(model, sigma, gains)
    return steps


def finite_horizon_rate(schedule):
    """Average rate (nats per symbol) of a finite-horizon schedule."""
    if not schedule:
        return 0.0
    return float(np.mean([rate_of(s.gains.allocation) for s in schedule]))


@dataclass(frozen=True)
class MatchingReport:
    p: int
    rate: float
    capacity: float
    component_capacities: tuple
    capacity_sum: float
    residual: float
    scalar_gap: float

    def holds(self, tol=1e-8):
        return self.residual <= tol


def matching_check(sol: RiccatiSolution) -> MatchingReport:
    """Compare the steady rate with the capacity of the channel that carries it.

    For ``p = 1``: ``(1/2) ln(lambda/delta)`` against ``(1/2) ln(1 + P/Q)``.
    For ``p > 1`` the rate is compared with the summed capacities of the
    parallel sub-channels; the single-channel value ``(1/2) ln(1 + P/Q)`` is
    reported with its gap to the rate.
    """
    Q = sol.Q
    comp = tuple(0.5 * math.log1p(pw / Q) for pw in sol.channel.component_powers)
    cap_sum = float(sum(comp))
    scalar = 0.5 * math.log1p(sol.power / Q)
    p = len(comp)
    reference = scalar if p == 1 else cap_sum
    return MatchingReport(p, sol.rate, scalar, comp, cap_sum, abs(sol.rate - reference), scalar - sol.rate)


def open_loop_covariance(model: StateSpaceModel):
    """Stationary state covariance with no transmission (requires a stable ``A``)."""
    if np.max(np.abs(np.linalg.eigvals(model.A))) >= 1:
        raise ValueError("open-loop covariance needs a stable A")
    return linalg.solve_discrete_lyapunov(model.A, model.B @ model.B.T)


def distortion_for_power(model: StateSpaceModel, power, Q, rtol=1e-10, **kw):
    """Steady distortion achieved with total transmit power ``power`` (bisection on ``D``)."""
    if power < 0:
        raise ValueError("power must be nonnegative")

    def p_of(D):
        try:
            return riccati_infinite(model, D, Q, **kw).power
        except InfeasibleDistortionError:
            return 0.0

    hi = float(np.trace(model.C @ model.x0_cov @ model.C.T + model.G @ model.G.T))
    while p_of(hi) > power:
        hi *= 2.0
        if hi > 1e12:
            raise ConvergenceError("could not bracket the distortion for the requested power")
    lo = hi
    while p_of(lo) <= power:
        lo *= 0.5
        if lo < 1e-15:
            return lo
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if p_of(mid) > power:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return hi
