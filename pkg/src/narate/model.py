"""Domain types shared by the finite-alphabet and Gaussian solvers.

All containers are immutable after construction: array fields are copied to
float64 and flagged read-only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DimensionError, InvalidDistributionError

PROB_TOL = 1e-12
DERIVED_TOL = 1e-9
MAX_HORIZON = 6
MAX_ALPHABET_Y = 8
MAX_TABLE_ENTRIES = 1 << 22


def _frozen(a, ndim=None, name="array"):
    arr = np.array(a, dtype=float)
    if ndim is not None:
        if arr.ndim == 0 and ndim >= 1:
            arr = arr.reshape((1,) * ndim)
        elif arr.ndim == 1 and ndim == 2:
            arr = arr.reshape(1, -1)
        if arr.ndim != ndim:
            raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_pmf(arr, axis=-1, name="table"):
    if not np.all(np.isfinite(arr)):
        raise InvalidDistributionError(f"{name} contains non-finite entries")
    if np.any(arr < 0):
        raise InvalidDistributionError(f"{name} has negative entries")
    sums = arr.sum(axis=axis)
    if np.any(np.abs(sums - 1.0) > PROB_TOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise InvalidDistributionError(f"{name} rows do not sum to 1 (max deviation {worst:.3g})")


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Partially observed linear Gauss-Markov source.

    ``X[t+1] = A X[t] + B W[t]`` and ``Y[t] = C X[t] + G V[t]`` with unit
    white noises ``W``, ``V`` and ``X[0] ~ N(x0_mean, x0_cov)``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    G: np.ndarray
    x0_mean: np.ndarray = None
    x0_cov: np.ndarray = None

    def __post_init__(self):
        A = _frozen(self.A, 2, "A")
        B = _frozen(self.B, 2, "B")
        C = _frozen(self.C, 2, "C")
        G = _frozen(self.G, 2, "G")
        m = A.shape[0]
        if A.shape != (m, m):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != m:
            raise DimensionError(f"(A, B) mismatch: A is {A.shape}, B is {B.shape}")
        if C.shape[1] != m:
            raise DimensionError(f"(C, A) mismatch: C is {C.shape}, A is {A.shape}")
        p = C.shape[0]
        if G.shape != (p, p):
            raise DimensionError(f"(G, C) mismatch: G is {G.shape}, C is {C.shape}")
        mean = np.zeros(m) if self.x0_mean is None else self.x0_mean
        cov = np.eye(m) if self.x0_cov is None else self.x0_cov
        mean = _frozen(np.ravel(mean), 1, "x0_mean")
        cov = _frozen(cov, 2, "x0_cov")
        if mean.shape != (m,):
            raise DimensionError(f"(x0_mean, A) mismatch: x0_mean has {mean.shape[0]} entries, A is {A.shape}")
        if cov.shape != (m, m):
            raise DimensionError(f"(x0_cov, A) mismatch: x0_cov is {cov.shape}, A is {A.shape}")
        for name, val in zip("ABCG", (A, B, C, G)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "x0_mean", mean)
        object.__setattr__(self, "x0_cov", cov)

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def noise_dim(self):
        return self.B.shape[1]

    @property
    def obs_dim(self):
        return self.C.shape[0]

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in ("A", "B", "C", "G") if k not in d]
        if missing:
            raise KeyError(f"state-space model is missing keys {missing}")
        return cls(d["A"], d["B"], d["C"], d["G"], d.get("x0_mean"), d.get("x0_cov"))

    def to_dict(self):
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "G": self.G.tolist(),
            "x0_mean": self.x0_mean.tolist(),
            "x0_cov": self.x0_cov.tolist(),
        }


def _pbh_defects(A, M, observe):
    """Unstable/marginal eigenvalues of A failing the PBH rank test against M."""
    m = A.shape[0]
    bad = []
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - 1e-12:
            continue
        shifted = A - lam * np.eye(m)
        pencil = np.vstack([shifted, M]) if observe else np.hstack([shifted, M])
        if np.linalg.matrix_rank(pencil, tol=1e-9) < m:
            bad.append(complex(lam))
    return bad


def validate_model(model: StateSpaceModel, infinite_horizon=True):
    """Return a list of invariant violations (empty when the model is valid).

    Dimension mismatches are caught when the model is constructed and raise
    :class:`DimensionError` there.  Detectability of ``(C, A)`` and
    stabilizability of ``(A, sqrt(B B'))`` are only tested when
    ``infinite_horizon`` is set.
    """
    diagnostics = []
    cov = model.x0_cov
    if not np.allclose(cov, cov.T, atol=1e-12):
        diagnostics.append("x0_cov not symmetric")
    sym = 0.5 * (cov + cov.T)
    if np.min(np.linalg.eigvalsh(sym)) < -1e-12:
        diagnostics.append("x0_cov not positive semidefinite")
    if abs(np.linalg.det(model.G)) <= 1e-12:
        diagnostics.append("G singular")
    if infinite_horizon:
        bad = _pbh_defects(model.A, model.C, observe=True)
        if bad:
            diagnostics.append(f"undetectable pair (C, A): unobservable modes {bad}")
        # range(sqrt(BB')) == range(B), so B itself serves in the PBH pencil
        bad = _pbh_defects(model.A, model.B, observe=False)
        if bad:
            diagnostics.append(f"unstabilizable pair (A, sqrt(BB')): uncontrollable modes {bad}")
    return diagnostics


@dataclass(frozen=True, eq=False)
class FiniteMarkovSource:
    """First-order Markov (or i.i.d.) source on ``{0, ..., nx-1}``.

    ``transition`` is either one row-stochastic ``(nx, nx)`` table used at
    every step, or a stack of ``horizon`` tables where ``transition[i-1]``
    holds ``P(x_i | x_{i-1})``.
    """

    initial_pmf: np.ndarray
    transition: np.ndarray
    horizon: int

    def __post_init__(self):
        p0 = _frozen(np.ravel(self.initial_pmf), 1, "initial_pmf")
        T = np.array(self.transition, dtype=float)
        nx = p0.shape[0]
        n = int(self.horizon)
        if n < 0:
            raise ValueError("horizon must be nonnegative")
        if T.ndim == 2:
            if T.shape != (nx, nx):
                raise DimensionError(f"transition must be ({nx}, {nx}), got {T.shape}")
        elif T.ndim == 3:
            if T.shape[1:] != (nx, nx) or T.shape[0] != n:
                raise DimensionError(f"per-step transition must be ({n}, {nx}, {nx}), got {T.shape}")
        else:
            raise DimensionError(f"transition must be 2- or 3-dimensional, got {T.shape}")
        _check_pmf(p0, name="initial_pmf")
        _check_pmf(T, name="transition")
        T.setflags(write=False)
        object.__setattr__(self, "initial_pmf", p0)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "horizon", n)

    @property
    def alphabet_size(self):
        return self.initial_pmf.shape[0]

    def transition_at(self, i):
        """``P(x_i | x_{i-1})`` as an ``(nx, nx)`` table, for ``1 <= i <= horizon``."""
        if not 1 <= i <= self.horizon:
            raise IndexError(f"step {i} outside 1..{self.horizon}")
        return self.transition if self.transition.ndim == 2 else self.transition[i - 1]

    def joint(self):
        """Full law ``P(x_0, ..., x_n)`` as a tensor with ``n+1`` axes."""
        P = self.initial_pmf
        for i in range(1, self.horizon + 1):
            P = P[..., None] * self.transition_at(i)[(None,) * (i - 1)]
        return P

    @classmethod
    def iid(cls, pmf, horizon):
        pmf = np.ravel(np.asarray(pmf, dtype=float))
        return cls(pmf, np.tile(pmf, (pmf.size, 1)), horizon)

    @classmethod
    def from_dict(cls, d):
        return cls(d["initial_pmf"], d["transition"], d.get("horizon", 0))

    def to_dict(self):
        return {
            "initial_pmf": self.initial_pmf.tolist(),
            "transition": self.transition.tolist(),
            "horizon": self.horizon,
        }


@dataclass(frozen=True, eq=False)
class DistortionSpec:
    """Single-letter distortion, summed along the sequence.

    ``kind`` is ``"single_letter_table"`` (finite alphabets, ``table[x, y]``)
    or ``"squared_error"`` (``||x - y||^2``; on finite alphabets the symbol
    index is used as its value).
    """

    kind: str
    table: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("single_letter_table", "squared_error"):
            raise ValueError(f"unknown distortion kind {self.kind!r}")
        if self.kind == "single_letter_table":
            if self.table is None:
                raise ValueError("single_letter_table distortion requires a table")
            t = _frozen(self.table, 2, "distortion table")
            if not np.all(np.isfinite(t)) or np.any(t < 0):
                raise ValueError("distortion table entries must be finite and nonnegative")
            object.__setattr__(self, "table", t)
        elif self.table is not None:
            raise ValueError("squared_error distortion takes no table")

    @classmethod
    def hamming(cls, nx, ny=None):
        ny = nx if ny is None else ny
        return cls("single_letter_table", 1.0 - np.eye(nx, ny))

    @classmethod
    def squared_error(cls):
        return cls("squared_error")

    def matrix(self, nx, ny=None):
        """The ``(nx, ny)`` table of per-letter distortions."""
        ny = nx if ny is None else ny
        if self.kind == "squared_error":
            x = np.arange(nx, dtype=float)[:, None]
            y = np.arange(ny, dtype=float)[None, :]
            return (x - y) ** 2
        if self.table.shape != (nx, ny):
            raise DimensionError(f"distortion table is {self.table.shape}, alphabets need ({nx}, {ny})")
        return self.table

    def rho(self, x, y):
        if self.kind == "squared_error":
            diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
            return float(np.sum(diff * diff))
        return float(self.table[int(x), int(y)])

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, str):
            d = {"kind": d}
        kind = d["kind"]
        if kind == "hamming":
            size = d.get("size")
            if size is None:
                raise ValueError("hamming distortion needs 'size' outside a solver context")
            return cls.hamming(int(size))
        return cls(kind, d.get("table"))

    def to_dict(self):
        d = {"kind": self.kind}
        if self.table is not None:
            d["table"] = self.table.tolist()
        return d


def evaluate_distortion(spec: DistortionSpec, x_seq, y_seq):
    """Total distortion ``sum_i rho(x_i, y_i)``; divide by the length for a per-symbol value."""
    if len(x_seq) != len(y_seq):
        raise DimensionError(f"sequence lengths differ: {len(x_seq)} vs {len(y_seq)}")
    return float(sum(spec.rho(x, y) for x, y in zip(x_seq, y_seq)))


def check_capacity(nx, ny, horizon):
    if horizon > MAX_HORIZON:
        raise CapacityError(f"horizon {horizon} exceeds the cap of {MAX_HORIZON}")
    if ny > MAX_ALPHABET_Y:
        raise CapacityError(f"reproduction alphabet {ny} exceeds the cap of {MAX_ALPHABET_Y}")
    entries = (nx * ny) ** (horizon + 1)
    if entries > MAX_TABLE_ENTRIES:
        raise CapacityError(f"joint table would need {entries} entries (cap {MAX_TABLE_ENTRIES})")


@dataclass(frozen=True, eq=False)
class ReproductionPolicy:
    """Causal reproduction kernels ``P(y_i | y^{i-1}, x^i)`` for ``i = 0..n``.

    ``kernels[i]`` has axes ``(y_0..y_{i-1}, x_0..x_i, y_i)``: the leading
    ``i`` axes walk the reproduction-history tree, the next ``i+1`` index the
    source prefix and the last one is the conditional pmf.  No axis refers to
    a source symbol after ``x_i``.
    """

    kernels: tuple
    alphabet_size_x: int
    alphabet_size_y: int

    def __post_init__(self):
        nx, ny = int(self.alphabet_size_x), int(self.alphabet_size_y)
        n = len(self.kernels) - 1
        if n < 0:
            raise ValueError("a policy needs at least one step")
        check_capacity(nx, ny, n)
        frozen = []
        for i, k in enumerate(self.kernels):
            arr = np.array(k, dtype=float)
            want = (ny,) * i + (nx,) * (i + 1) + (ny,)
            if arr.shape != want:
                raise DimensionError(f"kernel {i} has shape {arr.shape}, expected {want}")
            _check_pmf(arr, name=f"kernel {i}")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "kernels", tuple(frozen))
        object.__setattr__(self, "alphabet_size_x", nx)
        object.__setattr__(self, "alphabet_size_y", ny)

    @property
    def horizon(self):
        return len(self.kernels) - 1

    def prob(self, i, y_hist, x_seq, y):
        """``P(y_i = y | y^{i-1}, x^i)``; ``x_seq`` may be longer than ``i+1``, the tail is ignored."""
        y_hist = tuple(int(v) for v in y_hist)
        if len(y_hist) != i:
            raise DimensionError(f"step {i} needs {i} past reproductions, got {len(y_hist)}")
        x_prefix = tuple(int(v) for v in x_seq[: i + 1])
        if len(x_prefix) != i + 1:
            raise DimensionError(f"step {i} needs {i + 1} source symbols")
        return float(self.kernels[i][y_hist + x_prefix + (int(y),)])

    @classmethod
    def from_markov(cls, markov_kernels, nx, ny):
        """Build from kernels with axes ``(y_0..y_{i-1}, x_i, y_i)`` (no dependence on ``x^{i-1}``)."""
        full = []
        for i, k in enumerate(markov_kernels):
            k = np.asarray(k, dtype=float)
            expanded = k.reshape(k.shape[:i] + (1,) * i + k.shape[i:])
            full.append(np.broadcast_to(expanded, (ny,) * i + (nx,) * (i + 1) + (ny,)))
        return cls(tuple(full), nx, ny)

    @classmethod
    def independent(cls, pmfs, nx):
        """Policy that ignores the source: step ``i`` draws from ``pmfs[i]`` (shape ``(ny,)*i + (ny,)``)."""
        pmfs = [np.asarray(p, dtype=float) for p in pmfs]
        ny = pmfs[0].shape[-1]
        full = []
        for i, p in enumerate(pmfs):
            expanded = p.reshape(p.shape[:i] + (1,) * (i + 1) + (ny,))
            full.append(np.broadcast_to(expanded, (ny,) * i + (nx,) * (i + 1) + (ny,)))
        return cls(tuple(full), nx, ny)

    def to_dict(self):
        return {
            "alphabet_size_x": self.alphabet_size_x,
            "alphabet_size_y": self.alphabet_size_y,
            "kernels": [k.tolist() for k in self.kernels],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["kernels"]), d["alphabet_size_x"], d["alphabet_size_y"])

    def histories(self, i):
        """Iterate over ``(y^{i-1}, x^i)`` index pairs of step ``i``."""
        ny, nx = self.alphabet_size_y, self.alphabet_size_x
        for yh in itertools.product(range(ny), repeat=i):
            for xh in itertools.product(range(nx), repeat=i + 1):
                yield yh, xh


@dataclass(frozen=True)
class RateDistortionPoint:
    """One point of the Lagrangian trace; rate in nats and distortion per source symbol."""

    s: float
    rate: float
    distortion: float
    horizon: int = 0
    lagrangian: float = field(default=math.nan, compare=False)

    def __post_init__(self):
        if self.s > 0:
            raise ValueError(f"Lagrange multiplier must be <= 0, got {self.s}")
        if self.rate < -DERIVED_TOL:
            raise ValueError(f"rate must be nonnegative, got {self.rate}")
        if self.distortion < -DERIVED_TOL:
            raise ValueError(f"distortion must be nonnegative, got {self.distortion}")
        if self.rate > DERIVED_TOL and self.s == 0:
            raise ValueError("a positive rate requires s < 0")
        object.__setattr__(self, "rate", max(float(self.rate), 0.0))
        object.__setattr__(self, "distortion", max(float(self.distortion), 0.0))

    @property
    def rate_bits(self):
        return self.rate / math.log(2)
