"""Network models: small fully-connected nets and analytic bump curves.

Every model exposes the same surface: ``n_params``, a plain-numpy
``forward``, a tape builder ``output_nodes`` used by objectives, a
``parameter_jacobian`` (rows are gradients of output coordinates), and a
seeded ``init_params``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    GradientProgram,
    Layout,
    ParamView,
    Var,
    vexp,
    vitem,
    vmatvec_const,
    vrelu,
    vtanh,
)
from .errors import DimensionError

ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass(frozen=True)
class MLP:
    """Fully-connected network; widths include input and output dims.

    Parameters pack layer by layer, weight matrix (column-major) then bias.
    """

    widths: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise DimensionError("widths must list at least input and output dims")
        if self.activation not in ACTIVATIONS:
            raise DimensionError(f"unknown activation {self.activation!r}")

    @property
    def d_x(self) -> int:
        return self.widths[0]

    @property
    def d_y(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        return sum(
            i * o + o for i, o in zip(self.widths[:-1], self.widths[1:])
        )

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return np.tanh(z)
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return z

    def _layers(self, theta: np.ndarray):
        off = 0
        for i, o in zip(self.widths[:-1], self.widths[1:]):
            w = theta[off : off + i * o].reshape(o, i, order="F")
            off += i * o
            b = theta[off : off + o]
            off += o
            yield w, b

    def forward(self, theta: np.ndarray, x) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.shape[0] != self.n_params:
            raise DimensionError("wrong parameter count")
        h = np.asarray(x, dtype=np.float64).reshape(-1)
        if h.shape[0] != self.d_x:
            raise DimensionError("wrong input dimension")
        layers = list(self._layers(theta))
        for w, b in layers[:-1]:
            h = self._act(w @ h + b)
        w, b = layers[-1]
        return w @ h + b

    def output_nodes(self, theta: Var, x) -> Var:
        """Record the forward pass; ``theta`` is the flat 1-D parameter node."""
        from .autodiff import vmatvec, vnarrow, vreshape

        h_const = np.asarray(x, dtype=np.float64).reshape(-1)
        off = 0
        h: Var | None = None
        pairs = list(zip(self.widths[:-1], self.widths[1:]))
        for li, (i, o) in enumerate(pairs):
            w = vreshape(vnarrow(theta, off, i * o), o, i)
            off += i * o
            b = vnarrow(theta, off, o)
            off += o
            z = (vmatvec_const(w, h_const) if h is None else vmatvec(w, h)) + b
            if li < len(pairs) - 1:
                if self.activation == "tanh":
                    h = vtanh(z)
                elif self.activation == "relu":
                    h = vrelu(z)
                else:
                    h = z
            else:
                return z
        raise AssertionError("unreachable")

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform in [-r, r] with r = sqrt(6 / (fan_in + fan_out)) per layer."""
        chunks = []
        for i, o in zip(self.widths[:-1], self.widths[1:]):
            r = math.sqrt(6.0 / (i + o))
            chunks.append(rng.uniform(-r, r, i * o + o))
        return np.concatenate(chunks)


@dataclass(frozen=True)
class GaussianBumpCurve:
    """One-parameter curve: scale * (sum_j weight_j exp(-width_j (t-center_j)^2) + offset).

    The input is ignored (the pure parameter -> output form); ``d_x`` exists
    only so the curve can sit in front of a dataset.
    """

    scale: float = 5.0
    centers: tuple[float, ...] = (0.2, 0.8)
    weights: tuple[float, ...] = (-0.3, -0.7)
    widths: tuple[float, ...] = (16.0, 32.0)
    offset: float = 0.5
    d_x: int = 1

    d_y = 1
    n_params = 1

    def curve_value(self, t: float) -> float:
        acc = self.offset
        for c, w, s in zip(self.centers, self.weights, self.widths):
            acc += w * math.exp(-s * (t - c) ** 2)
        return self.scale * acc

    def curve_derivative(self, t: float) -> float:
        acc = 0.0
        for c, w, s in zip(self.centers, self.weights, self.widths):
            acc += w * math.exp(-s * (t - c) ** 2) * (-2.0 * s * (t - c))
        return self.scale * acc

    def forward(self, theta, x=None) -> np.ndarray:
        t = float(np.asarray(theta).reshape(-1)[0])
        return np.array([self.curve_value(t)])

    def _curve_node(self, t: Var) -> Var:
        acc: Var | float = self.offset
        for c, w, s in zip(self.centers, self.weights, self.widths):
            d = t - c
            acc = vexp(d * d * (-s)) * w + acc
        return acc * self.scale

    def output_nodes(self, theta: Var, x=None) -> Var:
        # wrap the scalar into a length-1 vector for the loss interface
        return _as_vec1(self.output_scalar(theta, x))

    def output_scalar(self, theta: Var, x=None) -> Var:
        return self._curve_node(vitem(theta, 0))

    def parameter_jacobian(self, theta, x=None) -> np.ndarray:
        t = float(np.asarray(theta).reshape(-1)[0])
        return np.array([[self.curve_derivative(t)]])

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(0.0, 1.0, 1)


@dataclass(frozen=True)
class BumpSlopeCurve:
    """Two-parameter variant f(x; t, s) = curve(t + s * x).

    With x = 0 the slope parameter is inert, which makes the full jacobian
    vanish wherever the curve itself is stationary; used by the
    failure-mode fixtures.
    """

    curve: GaussianBumpCurve = field(default_factory=GaussianBumpCurve)
    d_x: int = 1

    d_y = 1
    n_params = 2

    def forward(self, theta, x) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        x0 = float(np.asarray(x).reshape(-1)[0])
        return np.array([self.curve.curve_value(theta[0] + theta[1] * x0)])

    def output_nodes(self, theta: Var, x) -> Var:
        return _as_vec1(self.output_scalar(theta, x))

    def output_scalar(self, theta: Var, x) -> Var:
        x0 = float(np.asarray(x).reshape(-1)[0])
        t = vitem(theta, 0) + vitem(theta, 1) * x0
        return self.curve._curve_node(t)

    def parameter_jacobian(self, theta, x) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        x0 = float(np.asarray(x).reshape(-1)[0])
        d = self.curve.curve_derivative(theta[0] + theta[1] * x0)
        return np.array([[d, d * x0]])

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.uniform(0.0, 1.0), rng.uniform(-0.5, 0.5)])


def _as_vec1(x: Var) -> Var:
    """Lift a scalar node to a 1-vector node."""
    return x.tape.record(
        np.array([x.value]), (x.idx,), (lambda g: float(g[0]),)
    )


def bump_curve() -> GaussianBumpCurve:
    """The fixed regression curve used throughout the fixtures."""
    return GaussianBumpCurve()


def parameter_jacobian(model, theta, x) -> np.ndarray:
    """d_y x d_theta jacobian of the model output at (theta, x).

    Models with an analytic jacobian use it; otherwise each output
    coordinate is backpropagated through the tape.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if hasattr(model, "parameter_jacobian"):
        return model.parameter_jacobian(theta, x)
    layout = Layout([("theta", model.n_params)])
    rows = []
    for k in range(model.d_y):

        def build(params: ParamView, k=k) -> Var:
            out = model.output_nodes(params.vector("theta"), x)
            return vitem(out, k)

        prog = GradientProgram(layout, build)
        rows.append(prog.gradient(theta).values)
    return np.vstack(rows)


def model_from_config(kind: str, widths=None, activation: str = "tanh"):
    if kind == "mlp":
        if not widths:
            raise DimensionError("mlp model requires widths")
        return MLP(tuple(int(w) for w in widths), activation)
    if kind == "bump_curve":
        return bump_curve()
    if kind == "bump_slope":
        return BumpSlopeCurve()
    raise DimensionError(f"unknown model kind {kind!r}")
