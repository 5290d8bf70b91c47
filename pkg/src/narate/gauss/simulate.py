"""Monte-Carlo run of the full source / encoder / channel / decoder / filter loop."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..model import StateSpaceModel
from .design import filter_gain
from .riccati import gain_schedule, riccati_infinite

_CHUNK_FLOATS = 4_000_000


@dataclass(frozen=True, eq=False)
class RealizationTrace:
    """Per-step signals of one trial; every array has ``horizon`` rows."""

    x: np.ndarray
    y: np.ndarray
    k: np.ndarray
    gamma: np.ndarray
    a: np.ndarray
    b: np.ndarray
    gamma_tilde: np.ndarray
    k_tilde: np.ndarray
    y_tilde: np.ndarray
    x_hat: np.ndarray

    def __len__(self):
        return self.x.shape[0]

    def columns(self):
        """Flat named columns ``t, x, y, k, gamma, a, b, ytilde`` (vector signals get ``_1.._d`` suffixes)."""
        cols = {"t": np.arange(len(self))}
        for name, arr in (("x", self.x), ("y", self.y), ("k", self.k), ("gamma", self.gamma),
                          ("a", self.a), ("b", self.b), ("ytilde", self.y_tilde)):
            if arr.shape[1] == 1:
                cols[name] = arr[:, 0]
            else:
                for j in range(arr.shape[1]):
                    cols[f"{name}_{j + 1}"] = arr[:, j]
        return cols


@dataclass(frozen=True, eq=False)
class SimulationResult:
    trial_distortion: np.ndarray
    trial_symbols: int
    mean_distortion: float
    std_error: float
    target: float
    lag1_autocorrelation: np.ndarray
    reproduction_lag1: np.ndarray
    empirical_power: float
    design_power: float
    trace: RealizationTrace = None

    @property
    def n_symbols(self):
        return self.trial_distortion.size * self.trial_symbols

    @property
    def z_score(self):
        return (self.mean_distortion - self.target) / self.std_error if self.std_error > 0 else 0.0


def trial_rng(seed, trial):
    """Independent generator for one trial, derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(trial),)))


def innovation_lag1(model: StateSpaceModel, sol):
    """Predicted steady lag-1 autocorrelation of each component of ``Gamma``.

    ``Gamma_t = E K_t`` is white only when the channel is noiseless: the
    predictor is driven by the reproductions, so ``K_{t+1}`` keeps the part
    of ``K_t`` the channel noise hid.  With ``e`` the prediction error,
    ``Cov(K_{t+1}, K_t) = C [(A - L F C) Sigma C' - L F G G']``.  The
    reproduction innovation ``Y~ - C xhat`` is white.
    """
    gains = sol.gains
    L, _, _ = filter_gain(model, sol.sigma, gains)
    A, C, G = model.A, model.C, model.G
    F = gains.F
    cross = C @ ((A - L @ F @ C) @ sol.sigma @ C.T - L @ F @ G @ G.T)
    rotated = gains.E @ cross @ gains.E.T
    return np.diag(rotated) / gains.eigenvalues


class _Plan:
    """Gains for every step: either one steady design or a finite-horizon schedule."""

    def __init__(self, model, D, Q, horizon, steady_state, decoder):
        self.steady = steady_state
        if steady_state:
            sol = riccati_infinite(model, D, Q, decoder=decoder)
            L, _, _ = filter_gain(model, sol.sigma, sol.gains)
            self.designs = [(sol.gains, L, sol.channel.power)]
            self.init_cov = sol.sigma
        else:
            sched = gain_schedule(model, D, Q, horizon, decoder=decoder)
            self.designs = [(st.gains, filter_gain(model, st.sigma, st.gains)[0], st.channel.power) for st in sched]
            self.init_cov = model.x0_cov
        self.n_channels = 1 if self.designs[0][0].channel == "scalar" else model.obs_dim

    def at(self, t):
        return self.designs[0] if self.steady else self.designs[t]


def _run_chunk(model, plan, Q, horizon, seed, trials, keep_trace):
    m, k, p = model.state_dim, model.noise_dim, model.obs_dim
    c = plan.n_channels
    R = len(trials)
    x0 = np.empty((R, m))
    W = np.empty((R, horizon, k))
    V = np.empty((R, horizon, p))
    Z = np.empty((R, horizon, c))
    for r, trial in enumerate(trials):
        rng = trial_rng(seed, trial)
        x0[r] = rng.standard_normal(m)
        W[r] = rng.standard_normal((horizon, k))
        V[r] = rng.standard_normal((horizon, p))
        Z[r] = rng.standard_normal((horizon, c))

    root = np.linalg.cholesky(plan.init_cov + 1e-300 * np.eye(m)) if np.any(plan.init_cov) else np.zeros((m, m))
    x_hat = np.broadcast_to(model.x0_mean, (R, m)).copy()
    x = x_hat + x0 @ root.T
    A, B, C, G = model.A, model.B, model.C, model.G
    sq_err = np.zeros(R)
    power = 0.0
    white = np.zeros((2, 2, p))
    prev = None
    sqrtQ = math.sqrt(Q)
    rec = {name: [] for name in ("x", "y", "k", "gamma", "a", "b", "gamma_tilde", "k_tilde", "y_tilde", "x_hat")} if keep_trace else None

    for t in range(horizon):
        gains, L, _ = plan.at(t)
        y = x @ C.T + V[:, t] @ G.T
        pred = x_hat @ C.T
        innov = y - pred
        gamma = innov @ gains.E.T
        if gains.channel == "scalar":
            a = gamma @ gains.encoder[:, None]
            b = a + sqrtQ * Z[:, t]
            gamma_tilde = b * gains.decoder[None, :]
        else:
            a = gamma * gains.encoder
            b = a + sqrtQ * Z[:, t]
            gamma_tilde = b * gains.decoder
        k_tilde = gamma_tilde @ gains.E
        y_tilde = k_tilde + pred
        err = y - y_tilde
        sq_err += np.einsum("ij,ij->i", err, err)
        power += float(np.sum(a * a))
        cur = (gamma, gamma_tilde)
        if prev is not None:
            for j in range(2):
                white[j, 0] += np.sum(cur[j] * prev[j], axis=0)
                white[j, 1] += np.sum(prev[j] * prev[j], axis=0)
        prev = cur
        if keep_trace:
            for name, val in (("x", x), ("y", y), ("k", innov), ("gamma", gamma), ("a", a), ("b", b),
                              ("gamma_tilde", gamma_tilde), ("k_tilde", k_tilde), ("y_tilde", y_tilde), ("x_hat", x_hat)):
                rec[name].append(np.array(val[0]))
        x_hat = x_hat @ A.T + (y_tilde - pred) @ L.T
        x = x @ A.T + W[:, t] @ B.T

    trace = None
    if keep_trace:
        trace = RealizationTrace(**{name: np.array(vals).reshape(horizon, -1) for name, vals in rec.items()})
    return sq_err / horizon, power, white, trace


def simulate(
    model: StateSpaceModel,
    D,
    Q,
    horizon,
    n_trials,
    seed=0,
    steady_state=True,
    keep_trace=False,
    decoder="mmse",
    threads=1,
) -> SimulationResult:
    """Run ``n_trials`` independent realizations of ``horizon`` steps each.

    Steady-state mode freezes the gains at the Riccati fixed point and starts
    the estimation error from its stationary law, so every step is
    stationary.  Otherwise gains follow the finite-horizon schedule from
    ``x0_cov``.  Trial ``i`` draws all its noise from its own stream
    (``SeedSequence(seed, spawn_key=(i,))``) in a fixed order, so results do
    not depend on chunking or thread count.

    The standard error is taken across per-trial means; with a single trial
    it is reported as ``nan``.
    """
    horizon = int(horizon)
    n_trials = int(n_trials)
    if horizon < 1 or n_trials < 1:
        raise ValueError("horizon and n_trials must be at least 1")
    plan = _Plan(model, D, Q, horizon, steady_state, decoder)
    per_trial = _CHUNK_FLOATS // max(1, horizon * (model.noise_dim + model.obs_dim + plan.n_channels))
    chunk = max(1, min(n_trials, per_trial))
    batches = [list(range(i, min(i + chunk, n_trials))) for i in range(0, n_trials, chunk)]

    def work(idx):
        return _run_chunk(model, plan, Q, horizon, seed, batches[idx], keep_trace and idx == 0)

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(len(batches))))
    else:
        results = [work(i) for i in range(len(batches))]

    dist = np.concatenate([r[0] for r in results])
    power = sum(r[1] for r in results) / (n_trials * horizon)
    white = sum(r[2] for r in results)
    with np.errstate(invalid="ignore", divide="ignore"):
        lag1 = np.where(white[:, 1] > 0, white[:, 0] / white[:, 1], 0.0)
    mean = float(dist.mean())
    se = float(dist.std(ddof=1) / math.sqrt(n_trials)) if n_trials > 1 else math.nan
    design_power = float(np.mean([d[2] for d in plan.designs]))
    return SimulationResult(dist, horizon, mean, se, float(D), lag1[0], lag1[1], float(power), design_power, results[0][3])
