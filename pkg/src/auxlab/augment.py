"""Objective constructions: the standard objective, the added exponential
neurons, and the augmented objective with its norm regularizer.

The augmented objective adds one neuron per output unit,

    g(x; a, b, W)_k = a_k exp(w_k . x + b_k),

to the network output and penalizes lambda * ||a||^2.  The packed
parameter order is (theta | a | b | vec W), W column-major, so trajectories
serialize stably.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import (
    GradientProgram,
    Layout,
    ParamVector,
    ParamView,
    Var,
    exp_clamp,
    vdot_const,
    vexp,
    vitem,
    vmatvec_const,
    vsum,
)
from .criteria import LossCriterion, loss_term, loss_term_scalar, loss_value
from .errors import DataError, DimensionError, ExponentOverflow
from .verdict import OracleVerdict

DUPLICATE_INPUT_TOL = 1e-12


class Reduction(enum.Enum):
    MEAN = "mean"
    SUM = "sum"


@dataclass(frozen=True)
class AuxParams:
    """Added-neuron parameters: a, b in R^{d_y}, W in R^{d_x x d_y}, lambda > 0."""

    a: np.ndarray
    b: np.ndarray
    w: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=np.float64).reshape(-1))
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim == 1:
            w = w.reshape(-1, 1)
        object.__setattr__(self, "w", w)
        if self.lam <= 0.0:
            raise DimensionError("lambda must be positive")
        d_y = self.a.shape[0]
        if self.b.shape[0] != d_y or self.w.shape[1] != d_y:
            raise DimensionError("aux parameter dimensions disagree")

    @property
    def d_y(self) -> int:
        return self.a.shape[0]

    @property
    def d_x(self) -> int:
        return self.w.shape[0]


def g_eval(aux: AuxParams, x) -> np.ndarray:
    """Neuron outputs a_k exp(w_k . x + b_k) for every output unit."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != aux.d_x:
        raise DimensionError("input dimension does not match aux parameters")
    exponents = aux.w.T @ x + aux.b
    if np.any(exponents > exp_clamp()):
        raise ExponentOverflow("neuron exponent exceeds clamp")
    return aux.a * np.exp(exponents)


@dataclass(frozen=True)
class Dataset:
    """Training samples plus the partition of indices by identical input."""

    inputs: np.ndarray  # (m, d_x)
    targets: np.ndarray  # (m, d_t)
    groups: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        t = np.asarray(self.targets, dtype=np.float64)
        if t.ndim == 1:
            t = t.reshape(-1, 1)
        if x.shape[0] != t.shape[0] or x.shape[0] < 1:
            raise DimensionError("inputs and targets must align and be non-empty")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "groups", _partition(x))

    @property
    def m(self) -> int:
        return self.inputs.shape[0]

    @property
    def d_x(self) -> int:
        return self.inputs.shape[1]

    @property
    def representatives(self) -> np.ndarray:
        return self.inputs[[g[0] for g in self.groups]]

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        """Load `x1..xdx,y1..ydy` rows of 64-bit decimal text."""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read dataset {path}: {exc}") from exc
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise DataError(f"dataset {path} is empty")
        header = [h.strip() for h in lines[0].split(",")]
        xs = [h for h in header if h.startswith("x")]
        ys = [h for h in header if h.startswith("y")]
        if not xs or not ys or len(xs) + len(ys) != len(header):
            raise DataError(f"dataset {path} header must be x1..xdx,y1..ydy")
        rows = []
        for ln in lines[1:]:
            vals = [float(v) for v in ln.split(",")]
            if len(vals) != len(header):
                raise DataError(f"dataset {path} has a ragged row")
            rows.append(vals)
        arr = np.asarray(rows, dtype=np.float64)
        return cls(arr[:, : len(xs)], arr[:, len(xs) :])

    def to_csv(self, path) -> None:
        d_x, d_t = self.inputs.shape[1], self.targets.shape[1]
        header = [f"x{i+1}" for i in range(d_x)] + [f"y{i+1}" for i in range(d_t)]
        lines = [",".join(header)]
        for xi, yi in zip(self.inputs, self.targets):
            lines.append(",".join(repr(float(v)) for v in list(xi) + list(yi)))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _partition(x: np.ndarray) -> tuple[tuple[int, ...], ...]:
    groups: list[list[int]] = []
    reps: list[np.ndarray] = []
    for i, xi in enumerate(x):
        for j, r in enumerate(reps):
            if np.all(np.abs(xi - r) <= DUPLICATE_INPUT_TOL):
                groups[j].append(i)
                break
        else:
            reps.append(xi)
            groups.append([i])
    return tuple(tuple(g) for g in groups)


# ---------------------------------------------------------------------------
# layouts


def theta_layout(d_theta: int) -> Layout:
    return Layout([("theta", d_theta)])


def augmented_layout(d_theta: int, d_x: int, d_y: int) -> Layout:
    return Layout([("theta", d_theta), ("a", d_y), ("b", d_y), ("W", d_x * d_y)])


def pack_augmented(theta, aux: AuxParams) -> ParamVector:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    return ParamVector(
        np.concatenate([theta, aux.a, aux.b, aux.w.reshape(-1, order="F")]),
        augmented_layout(theta.shape[0], aux.d_x, aux.d_y),
    )


def unpack_aux(p: ParamVector, d_x: int, d_y: int, lam: float) -> AuxParams:
    return AuxParams(
        p.segment("a"), p.segment("b"), p.matrix("W", d_x, d_y), lam
    )


def _reduce(terms: Var, m: int, reduction: Reduction) -> Var:
    return terms / m if reduction is Reduction.MEAN else terms


# ---------------------------------------------------------------------------
# objective builders


def original_objective(
    model, criterion: LossCriterion, data: Dataset, reduction: Reduction = Reduction.MEAN
) -> GradientProgram:
    """L(theta): reduction over samples of l(f(x_i; theta), y_i)."""
    _check_dims(model, criterion, data)
    scalar = criterion.d_y == 1 and criterion.kind != "cross_entropy"

    def build(params: ParamView) -> Var:
        theta = params.vector("theta")
        total: Var | None = None
        for xi, yi in zip(data.inputs, data.targets):
            if scalar:
                term = loss_term_scalar(
                    criterion, _output_scalar(model, theta, xi), float(yi[0])
                )
            else:
                term = loss_term(criterion, model.output_nodes(theta, xi), yi)
            total = term if total is None else total + term
        return _reduce(total, data.m, reduction)

    return GradientProgram(
        theta_layout(model.n_params),
        build,
        name="L",
        metadata={"reduction": reduction.value},
    )


def augmented_objective(
    model,
    criterion: LossCriterion,
    data: Dataset,
    lam: float,
    reduction: Reduction = Reduction.MEAN,
) -> GradientProgram:
    """L~(theta, a, b, W) = reduction of l(f + g, y) + lambda ||a||^2."""
    if lam <= 0.0:
        raise DimensionError("lambda must be positive")
    _check_dims(model, criterion, data)
    d_x, d_y = data.d_x, criterion.d_y
    scalar = d_y == 1 and criterion.kind != "cross_entropy"

    def build(params: ParamView) -> Var:
        theta = params.vector("theta")
        total: Var | None = None
        for xi, yi in zip(data.inputs, data.targets):
            if scalar:
                q = _output_scalar(model, theta, xi) + _g_scalar(params, xi)
                term = loss_term_scalar(criterion, q, float(yi[0]))
            else:
                q = model.output_nodes(theta, xi) + _g_nodes(params, xi, d_y)
                term = loss_term(criterion, q, yi)
            total = term if total is None else total + term
        total = _reduce(total, data.m, reduction)
        return total + _reg_term(params, d_y, lam, scalar)

    return GradientProgram(
        augmented_layout(model.n_params, d_x, d_y),
        build,
        name="L~",
        metadata={"lambda": lam, "reduction": reduction.value},
    )


def augmented_objective_fixed_theta(
    model_outputs: np.ndarray,
    criterion: LossCriterion,
    data: Dataset,
    lam: float,
    reduction: Reduction = Reduction.MEAN,
) -> GradientProgram:
    """L~ restricted to (a, b, W), with the network outputs held fixed.

    ``model_outputs`` is the (m, d_y) array of f(x_i; theta) values; the
    analytic fixtures fix these directly.
    """
    if lam <= 0.0:
        raise DimensionError("lambda must be positive")
    outputs = np.asarray(model_outputs, dtype=np.float64)
    if outputs.ndim == 1:
        outputs = outputs.reshape(-1, 1)
    if outputs.shape != (data.m, criterion.d_y):
        raise DimensionError("model outputs must be (m, d_y)")
    d_x, d_y = data.d_x, criterion.d_y
    scalar = d_y == 1 and criterion.kind != "cross_entropy"

    def build(params: ParamView) -> Var:
        total: Var | None = None
        for xi, yi, fi in zip(data.inputs, data.targets, outputs):
            if scalar:
                q = _g_scalar(params, xi) + float(fi[0])
                term = loss_term_scalar(criterion, q, float(yi[0]))
            else:
                q = _g_nodes(params, xi, d_y) + fi
                term = loss_term(criterion, q, yi)
            total = term if total is None else total + term
        total = _reduce(total, data.m, reduction)
        return total + _reg_term(params, d_y, lam, scalar)

    layout = Layout([("a", d_y), ("b", d_y), ("W", d_x * d_y)])
    return GradientProgram(
        layout, build, name="L~|theta", metadata={"lambda": lam, "reduction": reduction.value}
    )


def _output_scalar(model, theta: Var, x) -> Var:
    if hasattr(model, "output_scalar"):
        return model.output_scalar(theta, x)
    return vitem(model.output_nodes(theta, x), 0)


def _g_nodes(params: ParamView, x, d_y: int) -> Var:
    """Record g(x; a, b, W) as a 1-D node of length d_y."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    a = params.vector("a")
    b = params.vector("b")
    w = params.matrix("W", x.shape[0], d_y)
    # w_k . x for all k at once: W^T x
    wx = vmatvec_const(_transpose(w), x)
    return a * vexp(wx + b)


def _g_scalar(params: ParamView, x) -> Var:
    """Scalar-node neuron output for d_y = 1."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    a = params.scalar("a")
    b = params.scalar("b")
    if x.shape[0] == 1:
        wx = params.scalar("W") * float(x[0])
    else:
        wx = vdot_const(params.vector("W"), x)
    return a * vexp(wx + b)


def _transpose(m: Var) -> Var:
    return m.tape.record(m.value.T, (m.idx,), (lambda g: np.asarray(g).T,))


def _reg_term(params: ParamView, d_y: int, lam: float, scalar: bool = False) -> Var:
    if scalar:
        a = params.scalar("a")
        return a * a * lam
    a = params.vector("a")
    return vsum(a * a) * lam


def _check_dims(model, criterion: LossCriterion, data: Dataset) -> None:
    if model.d_y != criterion.d_y:
        raise DimensionError("model output dim does not match loss dim")
    if data.d_x != model.d_x:
        raise DimensionError("dataset input dim does not match model")
    expected_t = criterion.d_y if criterion.kind in ("squared", "cross_entropy") else 1
    if data.targets.shape[1] != expected_t:
        raise DimensionError("dataset target dim does not match loss")


# plain-numpy evaluation used by oracles -------------------------------------


def original_value(model, criterion, data: Dataset, theta, reduction=Reduction.MEAN) -> float:
    total = 0.0
    for xi, yi in zip(data.inputs, data.targets):
        total += loss_value(criterion, model.forward(theta, xi), yi)
    return total / data.m if reduction is Reduction.MEAN else total


def augmented_value(
    model, criterion, data: Dataset, theta, aux: AuxParams, reduction=Reduction.MEAN
) -> float:
    total = 0.0
    for xi, yi in zip(data.inputs, data.targets):
        q = model.forward(theta, xi) + g_eval(aux, xi)
        total += loss_value(criterion, q, yi)
    total = total / data.m if reduction is Reduction.MEAN else total
    return total + aux.lam * float(np.dot(aux.a, aux.a))


def vanish_check(model, theta, aux: AuxParams, probes) -> OracleVerdict:
    """Does the modified network coincide with the original one?

    The deviation equals ||g||; the verdict passes only in the vanished
    regime ||a|| <= 1e-8 with every probe deviation <= 1e-6.
    """
    max_dev = 0.0
    for x in probes:
        g = g_eval(aux, x)
        max_dev = max(max_dev, float(np.max(np.abs(g))) if g.size else 0.0)
    a_norm = float(np.linalg.norm(aux.a))
    loose_bound = a_norm * np.exp(min(exp_clamp(), 700.0))
    passed = a_norm <= 1e-8 and max_dev <= 1e-6
    return OracleVerdict(
        passed=passed,
        residuals={
            "max_deviation": max_dev,
            "a_norm": a_norm,
            "deviation_bound": min(loose_bound, np.inf),
        },
        notes="modified network equals original iff the neuron amplitudes vanish",
    )
