"""One step of the encoder / AGN channel / decoder / filter loop.

Shapes follow the model: state ``m``, observation ``p``.  The encoder
whitens the innovation ``K = Y - C xhat`` with an orthogonal ``E`` so that
``Gamma = E K`` has independent components of variance ``lambda_i``; each
active component is scaled onto its own AGN sub-channel and estimated back
by a scalar MMSE gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, NarateError, NumericalError
from ..model import StateSpaceModel
from ..waterfill import WaterfillAllocation, allocate

EIG_TOL = 1e-10
TRACE_TOL = 1e-8
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class FilterState:
    """Predictor ``xhat = E[X_t | past reproductions]`` and its error covariance."""

    x_hat: np.ndarray
    sigma: np.ndarray
    M: np.ndarray = None

    @classmethod
    def initial(cls, model: StateSpaceModel):
        return cls(model.x0_mean.copy(), model.x0_cov.copy())


@dataclass(frozen=True)
class ChannelSpec:
    Q: float
    power: float
    alphas: tuple
    component_powers: tuple


@dataclass(frozen=True, eq=False)
class GainSet:
    """Encoder/decoder gains for one time step.

    ``encoder`` and ``decoder`` hold the per-component scalings applied
    before and after the channel.  ``H`` is the end-to-end gain on
    ``Gamma`` and ``noise_cov`` the covariance of the decoded channel noise,
    both in the whitened coordinates.  ``channel`` is ``"parallel"`` (one
    sub-channel per component) or ``"scalar"`` (one shared channel, ``p = 1``).
    """

    E: np.ndarray
    eigenvalues: np.ndarray
    encoder: np.ndarray
    decoder: np.ndarray
    H: np.ndarray
    noise_cov: np.ndarray
    Lambda: np.ndarray
    Q: float
    channel: str = "parallel"
    allocation: WaterfillAllocation = None

    @property
    def T(self):
        """Error covariance of ``Gamma - Gamma~``; its trace is the distortion."""
        I = np.eye(self.H.shape[0])
        return (I - self.H) @ np.diag(self.eigenvalues) @ (I - self.H).T + self.noise_cov

    @property
    def F(self):
        """End-to-end gain on the innovation, ``E' H E``."""
        return self.E.T @ self.H @ self.E

    @classmethod
    def perfect(cls, Lambda, h=None):
        """Noiseless channel (``Q = 0``) with diagonal end-to-end gain ``diag(h)`` (identity by default).

        Each component is sent with unit encoder gain and scaled by ``h_i``
        at the decoder.
        """
        E, lam = diagonalize(Lambda)
        p = lam.size
        h = np.ones(p) if h is None else np.asarray(h, dtype=float).ravel()
        if h.shape != (p,):
            raise DimensionError(f"gain vector has {h.size} entries for {p} components")
        return cls(E, lam, np.ones(p), h.copy(), np.diag(h), np.zeros((p, p)), np.asarray(Lambda, dtype=float), 0.0, "parallel")


def diagonalize(Lambda):
    """Orthogonal ``E`` with ``E Lambda E'`` diagonal, eigenvalues descending.

    Each eigenvector (row of ``E``) has its first nonzero entry positive.
    """
    Lambda = np.asarray(Lambda, dtype=float)
    sym = 0.5 * (Lambda + Lambda.T)
    lam, V = np.linalg.eigh(sym)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    E = V[:, order].T.copy()
    for row in E:
        nz = np.flatnonzero(np.abs(row) > 1e-14)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return E, lam


def innovation_step(model: StateSpaceModel, filt: FilterState, y_t):
    """Innovation ``K = y - C xhat`` and its covariance ``C Sigma C' + G G'``."""
    y_t = np.asarray(y_t, dtype=float)
    K = y_t - model.C @ filt.x_hat
    Lambda = model.C @ filt.sigma @ model.C.T + model.G @ model.G.T
    return K, 0.5 * (Lambda + Lambda.T)


def design_gains(Lambda, alloc: WaterfillAllocation, Q, decoder="mmse", channel="parallel"):
    """Encoder/decoder gains realizing a water-filling allocation over an AGN channel.

    Active component ``i`` gets power ``alpha_i P = Q (lambda_i / delta_i - 1)``,
    encoder ``sqrt(alpha_i P / lambda_i)`` and decoder
    ``sqrt(alpha_i P lambda_i) / (alpha_i P + Q)``, so its reconstruction
    error is ``lambda_i Q / (alpha_i P + Q) = delta_i``.  Components with
    ``delta_i = lambda_i`` are not transmitted.

    ``decoder="unnormalized"`` drops the ``1 / (alpha_i P + Q)`` factor; the
    trace identity then fails and is not enforced.
    """
    if not Q > 0:
        raise ValueError(f"channel noise variance must be positive, got {Q}")
    if decoder not in ("mmse", "unnormalized"):
        raise ValueError(f"unknown decoder {decoder!r}")
    if channel not in ("parallel", "scalar"):
        raise ValueError(f"unknown channel mode {channel!r}")
    Lambda = np.asarray(Lambda, dtype=float)
    E, lam = diagonalize(Lambda)
    p = lam.size
    if channel == "scalar" and p != 1:
        raise DimensionError("the single scalar channel realizes the allocation only for p = 1")
    if alloc.eigenvalues.shape != (p,) or np.max(np.abs(alloc.eigenvalues - lam)) > EIG_TOL * max(1.0, lam[0]):
        raise ValueError("allocation was not computed from the eigenvalues of Lambda (descending)")
    delta = alloc.deltas
    active = delta < lam
    comp_power = np.where(active, Q * (lam / delta - 1.0), 0.0)
    enc = np.where(active, np.sqrt(comp_power / lam), 0.0)
    dec = np.sqrt(comp_power * lam)
    if decoder == "mmse":
        dec = dec / (comp_power + Q)
    dec = np.where(active, dec, 0.0)
    if channel == "parallel":
        H = np.diag(dec * enc)
        noise_cov = np.diag(dec**2) * Q
    else:
        H = np.outer(dec, enc)
        noise_cov = np.outer(dec, dec) * Q
    gains = GainSet(E, lam, enc, dec, H, noise_cov, Lambda, float(Q), channel, alloc)
    if decoder == "mmse":
        gap = abs(float(np.trace(gains.T)) - alloc.total_distortion)
        if gap > TRACE_TOL * max(1.0, alloc.total_distortion):
            raise NarateError(f"designed error covariance trace misses D by {gap:.3g}")
    total = float(comp_power.sum())
    alphas = tuple(comp_power / total) if total > 0 else tuple(np.full(p, 1.0 / p))
    return gains, ChannelSpec(float(Q), total, alphas, tuple(comp_power))


def design_for(Lambda, D, Q, **kw):
    """Diagonalize, water-fill ``D`` and design gains in one call."""
    _, lam = diagonalize(Lambda)
    return design_gains(Lambda, allocate(lam, D), Q, **kw)


def encode(gains: GainSet, K):
    """Whitened innovation ``Gamma = E K`` and channel input(s)."""
    gamma = gains.E @ np.asarray(K, dtype=float)
    if gains.channel == "scalar":
        return gamma, np.array([gains.encoder @ gamma])
    return gamma, gains.encoder * gamma


def channel_step(a_t, Q, rng_seed=None):
    """AGN channel ``b = a + z`` with ``z ~ N(0, Q)``; ``Q = 0`` is noiseless.

    ``rng_seed`` is an int seed or a ``numpy.random.Generator``.
    """
    if Q < 0:
        raise ValueError("noise variance must be nonnegative")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    a = np.asarray(a_t, dtype=float)
    z = rng.standard_normal(a.shape)
    b = a + np.sqrt(Q) * z
    return float(b) if b.ndim == 0 else b


def decode_step(gains: GainSet, b, filt: FilterState, model: StateSpaceModel):
    """Pre-decoder and reconstruction: ``K~ = E' Gamma~`` and ``Y~ = K~ + C xhat``."""
    b = np.asarray(b, dtype=float)
    if gains.channel == "scalar":
        gamma_tilde = gains.decoder * float(b.ravel()[0])
    else:
        gamma_tilde = gains.decoder * b
    k_tilde = gains.E.T @ gamma_tilde
    return k_tilde, k_tilde + model.C @ filt.x_hat


def filter_gain(model: StateSpaceModel, sigma, gains: GainSet):
    """Predictor gain ``L``, innovation-mix covariance ``M`` and next covariance.

    ``M`` can be singular when some components are not transmitted; it is
    inverted on the range of the end-to-end gain, which is where the
    reproduction carries information.
    """
    A, C, G = model.A, model.C, model.G
    F = gains.F
    FC = F @ C
    M = FC @ sigma @ FC.T + F @ G @ G.T @ F.T + gains.E.T @ gains.noise_cov @ gains.E
    M = 0.5 * (M + M.T)
    U, sv, _ = np.linalg.svd(F)
    rank = int(np.count_nonzero(sv > EIG_TOL * max(1.0, sv[0] if sv.size else 0.0)))
    m = A.shape[0]
    if rank == 0:
        L = np.zeros((m, C.shape[0]))
    else:
        V = U[:, :rank]
        Ma = V.T @ M @ V
        cond = np.linalg.cond(Ma)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise NumericalError(f"innovation-mix covariance is singular (condition number {cond:.3g})", cond)
        L = A @ sigma @ FC.T @ V @ np.linalg.solve(Ma, V.T)
    sigma_next = A @ sigma @ A.T - L @ FC @ sigma @ A.T + model.B @ model.B.T
    sigma_next = 0.5 * (sigma_next + sigma_next.T)
    return L, M, sigma_next


def kalman_update(model: StateSpaceModel, filt: FilterState, gains: GainSet, y_tilde):
    """Advance the modified Kalman predictor by one step."""
    L, M, sigma_next = filter_gain(model, filt.sigma, gains)
    resid = np.asarray(y_tilde, dtype=float) - model.C @ filt.x_hat
    x_next = model.A @ filt.x_hat + L @ resid
    return FilterState(x_next, sigma_next, M)
