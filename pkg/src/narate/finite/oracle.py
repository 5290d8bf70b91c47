"""Independent reference solvers used to check :mod:`narate.finite.solver`.

``oracle_minimize`` never uses the tilted-kernel form: it runs entropic
mirror descent directly on the Lagrangian over *full-history* kernels
``P(y_i | y^{i-1}, x^i)``, with gradients read off the enumerated joint law.
Because the directed information is convex in the causal kernel, every
restart should land on the same optimal value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import DistortionSpec, FiniteMarkovSource, RateDistortionPoint, ReproductionPolicy, check_capacity
from .solver import reproduction_alphabet

_FLOOR = 1e-300


@dataclass(frozen=True)
class OracleResult:
    point: RateDistortionPoint
    objectives: tuple
    iterations: int
    policy: ReproductionPolicy

    @property
    def spread(self):
        """Max minus min of the Lagrangian over restarts."""
        return max(self.objectives) - min(self.objectives)


def _expand(k, i, n):
    """Kernel with axes (R, x_0..x_i, y_0..y_i) -> broadcastable (R, x^n, y^n)."""
    R = k.shape[0]
    nx = k.shape[1]
    ny = k.shape[-1]
    pad = (1,) * (n - i)
    return k.reshape((R,) + (nx,) * (i + 1) + pad + (ny,) * (i + 1) + pad)


def _future_axes(i, n):
    """Axes of x_{i+1..n} and y_{i+1..n} in the (R, x^n, y^n) layout."""
    n1 = n + 1
    return tuple(range(2 + i, 1 + n1)) + tuple(range(2 + n1 + i, 1 + 2 * n1))


def _evaluate(kernels, px, rho_matrix, s, n):
    """Joint law, per-step log-ratio tensors and objective pieces for each restart."""
    R = kernels[0].shape[0]
    n1 = n + 1
    J = px[None].reshape((1,) + px.shape + (1,) * n1)
    for i, k in enumerate(kernels):
        J = J * _expand(k, i, n)
    x_axes = tuple(range(1, 1 + n1))
    Py = J.sum(axis=x_axes)  # (R, y^n)
    live = J > 0
    rate_terms = []
    dist_terms = []
    for i, k in enumerate(kernels):
        pyi = Py.sum(axis=tuple(range(2 + i, 1 + n1)))  # (R, y^i)
        hist = pyi.sum(axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            pbar = pyi / hist
            pad = (1,) * (n - i)
            pbar_full = pbar.reshape((R,) + (1,) * n1 + pbar.shape[1:] + pad)
            log_ratio = np.log(_expand(k, i, n)) - np.log(pbar_full)
        rho_full = rho_matrix.reshape((1,) * (1 + i) + (rho_matrix.shape[0],) + (1,) * (n - i) + (1,) * i + (rho_matrix.shape[1],) + (1,) * (n - i))
        rate_terms.append(np.where(live, log_ratio, 0.0))
        dist_terms.append(np.broadcast_to(rho_full, J.shape))
    return J, rate_terms, dist_terms


def oracle_minimize(
    source: FiniteMarkovSource,
    rho: DistortionSpec,
    s: float,
    restarts: int = 16,
    seed: int = 0,
    step: float = 1.0,
    tol: float = 1e-13,
    max_iter: int = 50000,
) -> OracleResult:
    """Minimize ``I(X^n -> Y^n) - s E d`` by mirror descent with random restarts.

    Each kernel row takes the multiplicative step
    ``K <- K exp(-step * w) / normalizer``, where ``w`` is the gradient of the
    Lagrangian divided by the probability of the row's history (a per-row
    step size in the entropic geometry).  Restarts are drawn from a flat
    Dirichlet and advanced together as one batch.
    """
    if s > 0:
        raise ValueError(f"s must be <= 0, got {s}")
    nx = source.alphabet_size
    ny = reproduction_alphabet(source, rho)
    n = source.horizon
    check_capacity(nx, ny, n)
    rho_matrix = rho.matrix(nx, ny)
    px = source.joint()
    rng = np.random.default_rng(seed)
    R = int(restarts)
    kernels = [rng.dirichlet(np.ones(ny), size=(R,) + (nx,) * (i + 1) + (ny,) * i) for i in range(n + 1)]

    it = 0
    for it in range(1, max_iter + 1):
        J, rate_terms, dist_terms = _evaluate(kernels, px, rho_matrix, s, n)
        cost = [r - s * d for r, d in zip(rate_terms, dist_terms)]
        suffix = np.zeros_like(J)
        new_kernels = [None] * (n + 1)
        change = 0.0
        for i in range(n, -1, -1):
            suffix = suffix + cost[i]
            fut = _future_axes(i, n)
            weight = J.sum(axis=fut) if fut else J
            acc = (J * suffix).sum(axis=fut) if fut else J * suffix
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(weight > 0, acc / weight, 0.0)
            # w has axes (R, x^i, y^i); the kernel row is indexed by (x^i, y^{i-1})
            k = kernels[i] * np.exp(-step * (w - w.max(axis=-1, keepdims=True)))
            k = np.maximum(k, _FLOOR)
            k /= k.sum(axis=-1, keepdims=True)
            row_live = weight.sum(axis=-1, keepdims=True) > 0
            k = np.where(row_live, k, kernels[i])
            change = max(change, float(np.max(np.abs(k - kernels[i]))))
            new_kernels[i] = k
        kernels = new_kernels
        if change < tol:
            break

    J, rate_terms, dist_terms = _evaluate(kernels, px, rho_matrix, s, n)
    axes = tuple(range(1, J.ndim))
    rates = sum((J * r).sum(axis=axes) for r in rate_terms)
    dists = sum((J * d).sum(axis=axes) for d in dist_terms)
    objectives = rates - s * dists
    best = int(np.argmin(objectives))
    n1 = n + 1
    point = RateDistortionPoint(
        s, float(rates[best]) / n1, float(dists[best]) / n1, n, lagrangian=float(objectives[best])
    )
    policy = _to_policy([k[best] for k in kernels], nx, ny)
    return OracleResult(point, tuple(float(v) for v in objectives), it, policy)


def _to_policy(kernels, nx, ny):
    """Reorder (x^i, y^{i-1}, y_i) axes into the policy layout (y^{i-1}, x^i, y_i)."""
    out = []
    for i, k in enumerate(kernels):
        order = tuple(range(i + 1, 2 * i + 1)) + tuple(range(i + 1)) + (2 * i + 1,)
        k = np.transpose(k, order)
        out.append(k / k.sum(axis=-1, keepdims=True))
    return ReproductionPolicy(tuple(out), nx, ny)


def blahut_arimoto(p_x, dist, s, tol=1e-14, max_iter=100000):
    """Classical single-letter Blahut-Arimoto at slope ``s <= 0``.

    Returns ``(rate_nats, distortion)``.
    """
    p_x = np.asarray(p_x, dtype=float)
    dist = np.asarray(dist, dtype=float)
    q = np.full(dist.shape[1], 1.0 / dist.shape[1])
    A = np.exp(s * dist)
    for _ in range(max_iter):
        cond = A * q
        cond /= cond.sum(axis=1, keepdims=True)
        q_new = p_x @ cond
        if np.max(np.abs(q_new - q)) < tol:
            q = q_new
            break
        q = q_new
    cond = A * q
    cond /= cond.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(cond > 0, cond * np.log(cond / q), 0.0)
    rate = float(p_x @ terms.sum(axis=1))
    distortion = float(p_x @ (cond * dist).sum(axis=1))
    return rate, distortion


def binary_entropy(p):
    """Binary entropy in nats."""
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def binary_hamming_rdf(D):
    """``ln 2 - h_b(D)`` for a uniform bit under Hamming distortion (nats)."""
    if D >= 0.5:
        return 0.0
    return math.log(2) - binary_entropy(D)
