"""Reverse-mode differentiation over flat parameter vectors.

The engine records a fresh operation list on every call (no persistent
graph) and walks it backwards to accumulate adjoints.  Node values are
either Python floats or numpy arrays; scalar programs therefore run at
plain-float speed, which matters because the optimizer evaluates tiny
objectives millions of times.

All arithmetic is 64-bit.  Any argument to ``exp`` above the configured
clamp raises :class:`ExponentOverflow` rather than producing Inf.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, ExponentOverflow

DEFAULT_EXP_CLAMP = 500.0
_CLAMP_ENV_VAR = "AUXLAB_CLAMP"


def exp_clamp() -> float:
    """Current exponent clamp; ``AUXLAB_CLAMP`` overrides the default of 500."""
    raw = os.environ.get(_CLAMP_ENV_VAR)
    return float(raw) if raw else DEFAULT_EXP_CLAMP


# ---------------------------------------------------------------------------
# parameter vectors


class Layout:
    """Named, disjoint segments covering a flat vector exactly.

    Segment order is the packing order, so serialized trajectories are
    stable across runs.
    """

    __slots__ = ("_segments", "dim")

    def __init__(self, segments: Sequence[tuple[str, int]]):
        offset = 0
        table: dict[str, tuple[int, int]] = {}
        for name, size in segments:
            if name in table:
                raise DimensionError(f"duplicate segment {name!r}")
            if size < 0:
                raise DimensionError(f"segment {name!r} has negative size")
            table[name] = (offset, size)
            offset += size
        self._segments = table
        self.dim = offset

    def names(self) -> tuple[str, ...]:
        return tuple(self._segments)

    def offset(self, name: str) -> int:
        return self._segments[name][0]

    def size(self, name: str) -> int:
        return self._segments[name][1]

    def slice(self, name: str) -> slice:
        off, size = self._segments[name]
        return slice(off, off + size)

    def __contains__(self, name: str) -> bool:
        return name in self._segments

    def __eq__(self, other) -> bool:
        return isinstance(other, Layout) and self._segments == other._segments

    def __repr__(self) -> str:
        parts = ", ".join(f"{n}:{s}" for n, (_, s) in self._segments.items())
        return f"Layout({parts})"


class ParamVector:
    """A flat 64-bit parameter vector plus the layout naming its segments."""

    __slots__ = ("values", "layout")

    def __init__(self, values, layout: Layout):
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if arr.shape[0] != layout.dim:
            raise DimensionError(
                f"vector has {arr.shape[0]} entries, layout expects {layout.dim}"
            )
        if not np.all(np.isfinite(arr)):
            raise DimensionError("parameter vector contains non-finite entries")
        self.values = arr
        self.layout = layout

    @classmethod
    def pack(cls, segments: Sequence[tuple[str, np.ndarray]]) -> "ParamVector":
        """Build a vector from (name, values) pairs; matrices flatten column-major."""
        names = []
        chunks = []
        for name, vals in segments:
            arr = np.asarray(vals, dtype=np.float64)
            flat = arr.reshape(-1, order="F") if arr.ndim == 2 else arr.reshape(-1)
            names.append((name, flat.shape[0]))
            chunks.append(flat)
        layout = Layout(names)
        data = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(data, layout)

    def segment(self, name: str) -> np.ndarray:
        return self.values[self.layout.slice(name)].copy()

    def matrix(self, name: str, rows: int, cols: int) -> np.ndarray:
        seg = self.values[self.layout.slice(name)]
        if seg.shape[0] != rows * cols:
            raise DimensionError(f"segment {name!r} is not {rows}x{cols}")
        return seg.reshape(rows, cols, order="F").copy()

    def replace(self, name: str, values) -> "ParamVector":
        arr = np.asarray(values, dtype=np.float64)
        flat = arr.reshape(-1, order="F") if arr.ndim == 2 else arr.reshape(-1)
        if flat.shape[0] != self.layout.size(name):
            raise DimensionError(f"wrong size for segment {name!r}")
        out = self.values.copy()
        out[self.layout.slice(name)] = flat
        return ParamVector(out, self.layout)

    def with_values(self, values) -> "ParamVector":
        return ParamVector(values, self.layout)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def __repr__(self) -> str:
        return f"ParamVector({self.values!r}, {self.layout!r})"


# ---------------------------------------------------------------------------
# the tape


class Var:
    """One recorded value.  ``value`` is a float or a numpy array."""

    __slots__ = ("value", "tape", "idx")

    def __init__(self, value, tape: "Tape", idx: int):
        self.value = value
        self.tape = tape
        self.idx = idx

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Var):
            return self.tape.record(
                self.value + other.value,
                (self.idx, other.idx),
                (_ident, _ident),
            )
        return self.tape.record(self.value + other, (self.idx,), (_ident,))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self.tape.record(
                self.value - other.value,
                (self.idx, other.idx),
                (_ident, _negate),
            )
        return self.tape.record(self.value - other, (self.idx,), (_ident,))

    def __rsub__(self, other):
        return self.tape.record(other - self.value, (self.idx,), (_negate,))

    def __mul__(self, other):
        if isinstance(other, Var):
            sv, ov = self.value, other.value
            return self.tape.record(
                sv * ov,
                (self.idx, other.idx),
                (lambda g: g * ov, lambda g: g * sv),
            )
        return self.tape.record(
            self.value * other, (self.idx,), (lambda g: g * other,)
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            sv, ov = self.value, other.value
            inv = 1.0 / ov
            return self.tape.record(
                sv * inv,
                (self.idx, other.idx),
                (lambda g: g * inv, lambda g: -g * sv * inv * inv),
            )
        inv = 1.0 / other
        return self.tape.record(self.value * inv, (self.idx,), (lambda g: g * inv,))

    def __neg__(self):
        return self.tape.record(-self.value, (self.idx,), (_negate,))

    def __pow__(self, n):
        if not isinstance(n, int) or n < 1:
            raise ValueError("only positive integer powers are recorded")
        sv = self.value
        return self.tape.record(
            sv**n, (self.idx,), (lambda g: g * n * sv ** (n - 1),)
        )


def _ident(g):
    return g


def _negate(g):
    return -g


class Tape:
    """Dynamically recorded operation list with reverse accumulation."""

    __slots__ = ("parents", "vjps")

    def __init__(self):
        self.parents: list[tuple[int, ...]] = []
        self.vjps: list[tuple[Callable, ...]] = []

    def record(self, value, parents=(), vjps=()) -> Var:
        self.parents.append(parents)
        self.vjps.append(vjps)
        return Var(value, self, len(self.parents) - 1)

    def constant(self, value) -> Var:
        return self.record(value)

    def backward(self, out: Var) -> list:
        """Adjoint of every node with respect to the scalar ``out``."""
        n = len(self.parents)
        adj: list = [0.0] * n
        adj[out.idx] = 1.0
        parents, vjps = self.parents, self.vjps
        for i in range(n - 1, -1, -1):
            g = adj[i]
            if isinstance(g, float) and g == 0.0:
                continue
            for p, vjp in zip(parents[i], vjps[i]):
                adj[p] = adj[p] + vjp(g)
        return adj


# tape functions -------------------------------------------------------------


def vexp(x: Var) -> Var:
    """exp with the overflow clamp; works on floats and arrays."""
    v = x.value
    clamp = exp_clamp()
    if isinstance(v, float):
        if v > clamp:
            raise ExponentOverflow(f"exp argument {v:.6g} exceeds clamp {clamp:.6g}")
        e = math.exp(v)
    else:
        if np.any(v > clamp):
            raise ExponentOverflow(f"exp argument exceeds clamp {clamp:.6g}")
        e = np.exp(v)
    return x.tape.record(e, (x.idx,), (lambda g: g * e,))


def vlog(x: Var) -> Var:
    v = x.value
    out = math.log(v) if isinstance(v, float) else np.log(v)
    return x.tape.record(out, (x.idx,), (lambda g: g / v,))


def vtanh(x: Var) -> Var:
    v = x.value
    t = math.tanh(v) if isinstance(v, float) else np.tanh(v)
    return x.tape.record(t, (x.idx,), (lambda g: g * (1.0 - t * t),))


def vrelu(x: Var) -> Var:
    """max(0, x); the subgradient at 0 is taken as 0."""
    v = x.value
    if isinstance(v, float):
        if v > 0.0:
            return x.tape.record(v, (x.idx,), (_ident,))
        return x.tape.record(0.0, (x.idx,), (lambda g: 0.0,))
    mask = v > 0.0
    return x.tape.record(np.where(mask, v, 0.0), (x.idx,), (lambda g: g * mask,))


def vsum(x: Var) -> Var:
    v = x.value
    n = v.shape[0]
    return x.tape.record(
        float(np.sum(v)), (x.idx,), (lambda g: np.full(n, g),)
    )


def vdot(x: Var, y: Var) -> Var:
    xv, yv = x.value, y.value
    if xv.shape != yv.shape:
        raise DimensionError(f"dot of shapes {xv.shape} and {yv.shape}")
    return x.tape.record(
        float(np.dot(xv, yv)),
        (x.idx, y.idx),
        (lambda g: g * yv, lambda g: g * xv),
    )


def vdot_const(x: Var, c: np.ndarray) -> Var:
    xv = x.value
    if xv.shape != c.shape:
        raise DimensionError(f"dot of shapes {xv.shape} and {c.shape}")
    return x.tape.record(float(np.dot(xv, c)), (x.idx,), (lambda g: g * c,))


def vmatvec(m: Var, x: Var) -> Var:
    """2-D @ 1-D product of two recorded values."""
    mv, xv = m.value, x.value
    if mv.ndim != 2 or xv.ndim != 1 or mv.shape[1] != xv.shape[0]:
        raise DimensionError(f"matvec of shapes {mv.shape} and {xv.shape}")
    return m.tape.record(
        mv @ xv,
        (m.idx, x.idx),
        (lambda g: np.outer(g, xv), lambda g: mv.T @ g),
    )


def vmatvec_const(m: Var, c: np.ndarray) -> Var:
    mv = m.value
    if mv.ndim != 2 or mv.shape[1] != c.shape[0]:
        raise DimensionError(f"matvec of shapes {mv.shape} and {c.shape}")
    return m.tape.record(mv @ c, (m.idx,), (lambda g: np.outer(g, c),))


def vitem(x: Var, i: int) -> Var:
    """Extract coordinate ``i`` as a scalar node."""
    v = x.value
    n = v.shape[0]

    def scatter(g):
        out = np.zeros(n)
        out[i] = g
        return out

    return x.tape.record(float(v[i]), (x.idx,), (scatter,))


def vnarrow(x: Var, offset: int, size: int) -> Var:
    v = x.value
    n = v.shape[0]

    def scatter(g):
        out = np.zeros(n)
        out[offset : offset + size] = g
        return out

    return x.tape.record(v[offset : offset + size].copy(), (x.idx,), (scatter,))


def vreshape(x: Var, rows: int, cols: int) -> Var:
    """1-D segment viewed as a rows x cols matrix (column-major packing)."""
    v = x.value
    return x.tape.record(
        v.reshape(rows, cols, order="F"),
        (x.idx,),
        (lambda g: np.asarray(g).reshape(-1, order="F"),),
    )


def vlogsumexp(x: Var) -> Var:
    """Stable log-sum-exp of a 1-D node.

    The max shift is treated as a constant, which leaves both the value and
    the gradient (softmax) exact.
    """
    shift = float(np.max(x.value))
    shifted = x + (-shift)
    return vlog(vsum(vexp(shifted))) + shift


class ParamView:
    """Segment access for the leaf vector of a program under construction."""

    __slots__ = ("leaf", "layout")

    def __init__(self, leaf: Var, layout: Layout):
        self.leaf = leaf
        self.layout = layout

    def vector(self, name: str) -> Var:
        return vnarrow(self.leaf, self.layout.offset(name), self.layout.size(name))

    def scalar(self, name: str, i: int = 0) -> Var:
        return vitem(self.leaf, self.layout.offset(name) + i)

    def matrix(self, name: str, rows: int, cols: int) -> Var:
        if self.layout.size(name) != rows * cols:
            raise DimensionError(f"segment {name!r} is not {rows}x{cols}")
        return vreshape(self.vector(name), rows, cols)


# ---------------------------------------------------------------------------
# programs


@dataclass(frozen=True)
class GradientProgram:
    """A differentiable scalar objective over a flat parameter vector.

    ``build`` records the computation of the objective onto a fresh tape,
    given segment access to the leaf vector.  Programs are immutable and
    safe to share across threads; every call replays the recording.
    """

    layout: Layout
    build: Callable[[ParamView], Var]
    name: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def _check(self, p) -> np.ndarray:
        if isinstance(p, ParamVector):
            if p.layout.dim != self.layout.dim:
                raise DimensionError(
                    f"point has dim {p.layout.dim}, program expects {self.layout.dim}"
                )
            return p.values
        arr = np.asarray(p, dtype=np.float64).reshape(-1)
        if arr.shape[0] != self.layout.dim:
            raise DimensionError(
                f"point has dim {arr.shape[0]}, program expects {self.layout.dim}"
            )
        return arr

    def _run(self, values: np.ndarray) -> tuple[Tape, Var]:
        tape = Tape()
        leaf = tape.record(values)
        out = self.build(ParamView(leaf, self.layout))
        if not isinstance(out.value, float):
            raise DimensionError("program did not produce a scalar")
        return tape, out

    def evaluate(self, p) -> float:
        """Objective value at ``p``."""
        _, out = self._run(self._check(p))
        return float(out.value)

    def value_and_gradient(self, p) -> tuple[float, np.ndarray]:
        values = self._check(p)
        tape, out = self._run(values)
        adj = tape.backward(out)
        g = adj[0]
        if isinstance(g, float):  # objective did not touch the parameters
            g = np.zeros(self.layout.dim)
        return float(out.value), np.asarray(g, dtype=np.float64)

    def gradient(self, p) -> ParamVector:
        """Exact reverse-mode gradient at ``p``, same layout as the input."""
        _, g = self.value_and_gradient(p)
        return ParamVector(g, self.layout)


def finite_diff_gradient(program: GradientProgram, p, h: float) -> ParamVector:
    """Central-difference gradient oracle: (f(p+h e_i) - f(p-h e_i)) / 2h."""
    if h <= 0:
        raise ValueError("h must be positive")
    base = p.values.copy() if isinstance(p, ParamVector) else np.asarray(
        p, dtype=np.float64
    ).reshape(-1).copy()
    out = np.zeros_like(base)
    for i in range(base.shape[0]):
        orig = base[i]
        base[i] = orig + h
        hi = program.evaluate(base)
        base[i] = orig - h
        lo = program.evaluate(base)
        base[i] = orig
        out[i] = (hi - lo) / (2.0 * h)
    return ParamVector(out, program.layout)


def quadratic_program(dim: int, name: str = "quadratic") -> GradientProgram:
    """sum of squares of all coordinates; handy as a convex test objective."""
    layout = Layout([("theta", dim)])

    def build(params: ParamView) -> Var:
        x = params.vector("theta")
        return vdot(x, x)

    return GradientProgram(layout, build, name=name)
