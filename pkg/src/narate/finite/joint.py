"""Exact enumeration of the joint law induced by a source and a causal policy."""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from ..model import FiniteMarkovSource, ReproductionPolicy, check_capacity

_X = string.ascii_lowercase[:13]
_Y = string.ascii_uppercase[:13]


def _kernel_subscripts(i):
    """einsum subscripts of kernel ``i`` in (y-history, x-prefix, y_i) axis order."""
    return _Y[:i] + _X[: i + 1] + _Y[i]


@dataclass(frozen=True, eq=False)
class JointLaw:
    """``P(x^n, y^n)`` stored with axes ``(x_0..x_n, y_0..y_n)``."""

    table: np.ndarray
    horizon: int

    @property
    def n_axes(self):
        return self.horizon + 1

    def prefix(self, i):
        """Marginal ``P(x^i, y^i)`` with axes ``(x_0..x_i, y_0..y_i)``."""
        n1 = self.n_axes
        drop = tuple(range(i + 1, n1)) + tuple(range(n1 + i + 1, 2 * n1))
        return self.table.sum(axis=drop)

    def source_marginal(self):
        n1 = self.n_axes
        return self.table.sum(axis=tuple(range(n1, 2 * n1)))

    def reproduction_marginal(self):
        return self.table.sum(axis=tuple(range(self.n_axes)))


@dataclass(frozen=True, eq=False)
class MarginalReproduction:
    """Per-step ``P(y_i | y^{i-1})``; ``pmfs[i]`` has axes ``(y_0..y_{i-1}, y_i)``.

    ``history_mass[i]`` is ``P(y^{i-1})``; rows with zero mass hold a uniform
    pmf and never influence rate or distortion.
    """

    pmfs: tuple
    history_mass: tuple

    @property
    def horizon(self):
        return len(self.pmfs) - 1

    @property
    def alphabet_size(self):
        return self.pmfs[0].shape[-1]

    @classmethod
    def uniform(cls, ny, horizon):
        pmfs = tuple(np.full((ny,) * (i + 1), 1.0 / ny) for i in range(horizon + 1))
        mass = tuple(np.full((ny,) * i, float(ny) ** -i) for i in range(horizon + 1))
        return cls(pmfs, mass)


def joint_law(source: FiniteMarkovSource, policy: ReproductionPolicy) -> JointLaw:
    """``P_{X^n} (x) P(y_i | y^{i-1}, x^i)`` composed over all steps."""
    n = source.horizon
    if policy.horizon != n:
        raise DimensionError(f"policy horizon {policy.horizon} != source horizon {n}")
    if policy.alphabet_size_x != source.alphabet_size:
        raise DimensionError("policy and source disagree on the source alphabet")
    check_capacity(source.alphabet_size, policy.alphabet_size_y, n)
    operands = [source.joint()]
    subs = [_X[: n + 1]]
    for i, k in enumerate(policy.kernels):
        operands.append(k)
        subs.append(_kernel_subscripts(i))
    spec = ",".join(subs) + "->" + _X[: n + 1] + _Y[: n + 1]
    return JointLaw(np.einsum(spec, *operands), n)


def marginals_from_joint(joint: JointLaw) -> MarginalReproduction:
    py = joint.reproduction_marginal()
    pmfs, mass = [], []
    for i in range(joint.n_axes):
        pyi = py.sum(axis=tuple(range(i + 1, joint.n_axes)))
        hist = pyi.sum(axis=-1)
        ny = pyi.shape[-1]
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = pyi / hist[..., None]
        cond = np.where(hist[..., None] > 0, cond, 1.0 / ny)
        pmfs.append(cond)
        mass.append(hist)
    return MarginalReproduction(tuple(pmfs), tuple(mass))


def reproduction_marginals(source, policy) -> MarginalReproduction:
    return marginals_from_joint(joint_law(source, policy))


def _entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


@dataclass(frozen=True)
class DirectedInformation:
    """Directed information in nats, evaluated two ways.

    ``sum_form`` adds the conditional mutual informations
    ``I(X^i; Y_i | Y^{i-1})``; ``kl_form`` is the divergence between the
    joint law and the product of its two marginals.  They agree whenever the
    source does not depend on past reproductions, which holds by
    construction here.
    """

    sum_form: float
    kl_form: float
    per_step: tuple

    @property
    def value(self):
        return self.sum_form

    @property
    def gap(self):
        return abs(self.sum_form - self.kl_form)


def directed_information(source: FiniteMarkovSource, policy: ReproductionPolicy) -> DirectedInformation:
    joint = joint_law(source, policy)
    n1 = joint.n_axes
    per_step = []
    for i in range(n1):
        pxy = joint.prefix(i)
        x_axes = tuple(range(i + 1))
        h_xy = _entropy(pxy)
        h_x_yhist = _entropy(pxy.sum(axis=-1))
        py = pxy.sum(axis=x_axes)
        h_y = _entropy(py)
        h_yhist = _entropy(py.sum(axis=-1)) if i > 0 else 0.0
        # I(X^i; Y_i | Y^{i-1}) = H(X^i, Y^{i-1}) + H(Y^i) - H(Y^{i-1}) - H(X^i, Y^i)
        per_step.append(h_x_yhist + h_y - h_yhist - h_xy)

    J = joint.table
    px = joint.source_marginal()
    py = joint.reproduction_marginal()
    prod = px.reshape(px.shape + (1,) * n1) * py.reshape((1,) * n1 + py.shape)
    mask = J > 0
    kl = float(np.sum(J[mask] * np.log(J[mask] / prod[mask])))
    total = float(sum(per_step))
    return DirectedInformation(max(total, 0.0), max(kl, 0.0), tuple(per_step))


def expected_distortion(joint: JointLaw, rho_matrix) -> float:
    """``E sum_i rho(X_i, Y_i)`` under the joint law (not divided by ``n+1``)."""
    rho_matrix = np.asarray(rho_matrix, dtype=float)
    n1 = joint.n_axes
    total = 0.0
    for i in range(n1):
        keep = (i, n1 + i)
        drop = tuple(a for a in range(2 * n1) if a not in keep)
        pair = joint.table.sum(axis=drop)
        total += float(np.sum(pair * rho_matrix))
    return total
