"""Reverse water-filling of a distortion budget over variance components."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleDistortionError

SUM_TOL = 1e-12
MAX_BISECTION = 200


@dataclass(frozen=True, eq=False)
class WaterfillAllocation:
    eigenvalues: np.ndarray
    water_level: float
    deltas: np.ndarray
    total_distortion: float

    @property
    def active(self):
        """Mask of components that carry information (``delta < lambda``)."""
        return self.deltas < self.eigenvalues

    def to_dict(self):
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "xi": self.water_level,
            "deltas": self.deltas.tolist(),
            "distortion": self.total_distortion,
        }


def _filled(level, lam):
    return sum(min(level, l) for l in lam)


def allocate(eigenvalues, D) -> WaterfillAllocation:
    """Split ``D`` as ``delta_i = min(xi, lambda_i)`` with ``sum(delta) = D``.

    The water level is bracketed in ``[0, max(lambda)]`` and bisected on the
    monotone map ``xi -> sum(min(xi, lambda_i))``; once the saturated set is
    known the level is recomputed in closed form so the sum is exact to
    rounding.
    """
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    if lam.size == 0 or np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        raise ValueError("eigenvalues must be finite and strictly positive")
    D = float(D)
    total = float(lam.sum())
    if not D > 0:
        raise InfeasibleDistortionError(f"distortion must be positive, got {D}", (0.0, total))
    if D > total * (1 + SUM_TOL):
        raise InfeasibleDistortionError(
            f"distortion {D} exceeds the total variance {total}", (0.0, total)
        )
    if D >= total:
        lam.setflags(write=False)
        deltas = lam.copy()
        deltas.setflags(write=False)
        return WaterfillAllocation(lam, float(lam.max()), deltas, total)

    values = lam.tolist()
    lo, hi = 0.0, max(values)
    scale = max(D, 1.0) * SUM_TOL
    for _ in range(MAX_BISECTION):
        mid = 0.5 * (lo + hi)
        f = _filled(mid, values)
        if abs(f - D) <= scale:
            lo = hi = mid
            break
        if f < D:
            lo = mid
        else:
            hi = mid
    xi = 0.5 * (lo + hi)
    # closed-form level on the unsaturated set
    for _ in range(lam.size):
        sat = lam < xi
        refined = (D - float(lam[sat].sum())) / int(np.count_nonzero(~sat))
        if np.array_equal(sat, lam < refined):
            xi = refined
            break
        xi = refined
    deltas = np.minimum(xi, lam)
    lam.setflags(write=False)
    deltas.setflags(write=False)
    return WaterfillAllocation(lam, float(xi), deltas, D)


def rate_of(alloc: WaterfillAllocation) -> float:
    """Rate in nats per symbol, ``(1/2) sum_i ln(lambda_i / delta_i)``."""
    return 0.5 * float(np.sum(np.log(alloc.eigenvalues / alloc.deltas)))


def rate_curve(eigenvalues, distortions):
    """Rates (nats) of the reverse water-filling solution along a grid of ``D``."""
    return np.array([rate_of(allocate(eigenvalues, d)) for d in distortions])


def nats_to_bits(x):
    return x / math.log(2)
