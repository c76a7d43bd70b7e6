"""Loss criteria with values, gradients, and assumption metadata.

Four criteria are provided, all differentiable and convex in the
prediction:

* ``squared``          l(q, y) = ||q - y||^2
* ``squared_margin``   l(q, y) = (1 - y q)^2              (d_y = 1)
* ``cross_entropy``    l(q, y) = -sum_k y_k log softmax(q)_k
* ``smoothed_hinge``   l(q, y) = max(0, 1 - y q)^p, p >= 2 (d_y = 1)

Each criterion exposes a plain-numpy value/gradient pair and a tape
builder, so objectives and verification oracles never share a code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Var, vdot_const, vitem, vlogsumexp, vrelu, vsum
from .errors import DimensionError, InvalidTarget

KINDS = ("squared", "squared_margin", "cross_entropy", "smoothed_hinge")


@dataclass(frozen=True)
class AssumptionFlags:
    """Which loss assumptions the criterion satisfies.

    ``differentiable_convex``: the map q -> l(q, y) is differentiable and
    convex for every target.  ``grad_zero_implies_min``: a vanishing
    gradient certifies a global minimum of q -> l(q, y); for cross entropy
    this holds for realizable (soft) targets, where the infimum is used in
    grid comparisons.
    """

    differentiable_convex: bool
    grad_zero_implies_min: bool


@dataclass(frozen=True)
class LossCriterion:
    kind: str
    d_y: int = 1
    p: int = 3  # smoothed-hinge exponent

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidTarget(f"unknown loss kind {self.kind!r}")
        if self.d_y < 1:
            raise DimensionError("d_y must be at least 1")
        if self.kind in ("squared_margin", "smoothed_hinge") and self.d_y != 1:
            raise DimensionError(f"{self.kind} requires d_y = 1")
        if self.kind == "smoothed_hinge":
            if not isinstance(self.p, int) or self.p < 2:
                raise InvalidTarget("smoothed hinge requires integer p >= 2")


def assumption_report(c: LossCriterion) -> AssumptionFlags:
    return AssumptionFlags(differentiable_convex=True, grad_zero_implies_min=True)


def _check_q(c: LossCriterion, q) -> np.ndarray:
    arr = np.asarray(q, dtype=np.float64).reshape(-1)
    if arr.shape[0] != c.d_y:
        raise DimensionError(f"prediction has dim {arr.shape[0]}, loss expects {c.d_y}")
    return arr


def _check_target(c: LossCriterion, y) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64).reshape(-1)
    if c.kind == "squared":
        if arr.shape[0] != c.d_y:
            raise DimensionError(f"target has dim {arr.shape[0]}, loss expects {c.d_y}")
    elif c.kind in ("squared_margin", "smoothed_hinge"):
        if arr.shape[0] != 1:
            raise DimensionError("margin losses take a scalar target")
    else:  # cross entropy: probability vector
        if arr.shape[0] != c.d_y:
            raise DimensionError(f"target has dim {arr.shape[0]}, loss expects {c.d_y}")
        if np.any(arr < -1e-12) or abs(float(np.sum(arr)) - 1.0) > 1e-9:
            raise InvalidTarget("cross entropy target must be a probability vector")
    return arr


def loss_value(c: LossCriterion, q, y) -> float:
    q = _check_q(c, q)
    y = _check_target(c, y)
    if c.kind == "squared":
        d = q - y
        return float(np.dot(d, d))
    if c.kind == "squared_margin":
        return float((1.0 - y[0] * q[0]) ** 2)
    if c.kind == "smoothed_hinge":
        return float(max(0.0, 1.0 - y[0] * q[0]) ** c.p)
    # cross entropy through softmax: logsumexp(q) - y . q
    m = float(np.max(q))
    lse = m + float(np.log(np.sum(np.exp(q - m))))
    return lse - float(np.dot(y, q))


def loss_gradient(c: LossCriterion, q, y) -> np.ndarray:
    q = _check_q(c, q)
    y = _check_target(c, y)
    if c.kind == "squared":
        return 2.0 * (q - y)
    if c.kind == "squared_margin":
        return np.array([-2.0 * y[0] * (1.0 - y[0] * q[0])])
    if c.kind == "smoothed_hinge":
        margin = max(0.0, 1.0 - y[0] * q[0])
        return np.array([-c.p * y[0] * margin ** (c.p - 1)])
    m = float(np.max(q))
    e = np.exp(q - m)
    return e / float(np.sum(e)) - y


def loss_term_scalar(c: LossCriterion, q: Var, y: float) -> Var:
    """Scalar-node variant of :func:`loss_term` for d_y = 1 criteria."""
    if c.kind == "squared":
        d = q - y
        return d * d
    if c.kind == "squared_margin":
        m = 1.0 - q * y
        return m * m
    if c.kind == "smoothed_hinge":
        return vrelu(1.0 - q * y) ** c.p
    raise DimensionError("cross entropy has no scalar fast path")


def loss_term(c: LossCriterion, q: Var, y) -> Var:
    """Record l(q, y) on the tape; ``q`` is a 1-D node of length d_y."""
    y = _check_target(c, y)
    if c.kind == "squared":
        d = q - np.asarray(y)
        return vsum(d * d)
    if c.kind == "squared_margin":
        margin = 1.0 - vitem(q, 0) * float(y[0])
        return margin * margin
    if c.kind == "smoothed_hinge":
        return vrelu(1.0 - vitem(q, 0) * float(y[0])) ** c.p
    return vlogsumexp(q) - vdot_const(q, y)
