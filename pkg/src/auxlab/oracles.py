"""Independent verification machinery.

Brute-force grid minima, sampling-based local-minimum checks, the
exponential/polynomial interpolation solvers, the perturbable-gradient
checker that refutes (or fails to refute) candidate local minima of the
augmented objective at fixed network parameters, and the gradient
factorization A[theta] r[phi] used to exhibit the failure mode.

Every oracle is pure given its seed.  A REFUTED verdict carries an
explicit witness; a CONSISTENT verdict is evidence, never a proof.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .augment import AuxParams, Dataset, g_eval
from .autodiff import GradientProgram
from .criteria import LossCriterion, loss_gradient, loss_value
from .errors import BudgetError, DimensionError
from .models import parameter_jacobian
from .verdict import OracleVerdict

GRID_BUDGET = 10**8
POLY_FEATURE_BUDGET = 10**6
RANK_THRESHOLD = 1e-10  # relative to the leading singular value


# ---------------------------------------------------------------------------
# brute force global minimum


def grid_global_min(
    objective: GradientProgram, bounds, resolution: float
) -> tuple[np.ndarray, float]:
    """Exhaustive evaluation over a rectangular grid.

    Ties within 1e-12 of the minimum resolve to the lexicographically
    smallest coordinate tuple.  Dimension zero is the empty product: the
    objective value at the empty point.
    """
    bounds = [tuple(map(float, b)) for b in bounds]
    dim = len(bounds)
    if dim != objective.dim:
        raise DimensionError("bounds do not match objective dimension")
    if dim == 0:
        return np.zeros(0), objective.evaluate(np.zeros(0))
    if dim > 3:
        raise DimensionError("grid oracle supports at most 3 dimensions")
    axes = []
    total = 1
    for lo, hi in bounds:
        if not (np.isfinite(lo) and np.isfinite(hi) and hi >= lo):
            raise DimensionError("bounds must be finite with hi >= lo")
        n = int(np.floor((hi - lo) / resolution + 1e-9)) + 1
        axes.append(lo + resolution * np.arange(n))
        total *= n
    if total > GRID_BUDGET:
        raise BudgetError(f"grid would contain {total} points")
    point = np.zeros(dim)
    best_val = np.inf
    for coords in itertools.product(*axes):
        point[:] = coords
        v = objective.evaluate(point)
        if v < best_val:
            best_val = v
    # second pass: lexicographically first point within the tie band
    for coords in itertools.product(*axes):
        point[:] = coords
        if objective.evaluate(point) <= best_val + 1e-12:
            return np.asarray(coords), best_val
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# local-minimum sampling


def verify_local_min(
    objective: GradientProgram,
    point,
    radius: float,
    n_samples: int,
    seed: int = 0,
    tol: float = 1e-9,
) -> OracleVerdict:
    """Sample the ball around ``point``; fail on any strictly lower value.

    Passing cannot prove local minimality (sampling only refutes); a
    failing sample is returned as the witness.
    """
    if radius <= 0 or n_samples < 1:
        raise ValueError("radius must be positive and n_samples >= 1")
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    base = objective.evaluate(point)
    rng = np.random.default_rng(seed)
    d = point.shape[0]
    worst_drop = 0.0
    witness = None
    for _ in range(n_samples):
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        r = radius * rng.uniform() ** (1.0 / d)
        candidate = point + r * direction
        v = objective.evaluate(candidate)
        if base - v > worst_drop:
            worst_drop = base - v
            witness = candidate
    passed = worst_drop <= tol
    return OracleVerdict(
        passed=passed,
        residuals={"max_drop": worst_drop, "value": base},
        witness=None if passed else witness,
        notes="sampling refutes or fails to refute; it never proves minimality",
    )


def per_sample_gradient_check(model, criterion, data: Dataset, theta) -> OracleVerdict:
    """Do all per-sample loss gradients vanish at f(x_i; theta)?"""
    worst = 0.0
    for xi, yi in zip(data.inputs, data.targets):
        g = loss_gradient(criterion, model.forward(theta, xi), yi)
        worst = max(worst, float(np.linalg.norm(g)))
    return OracleVerdict(
        passed=worst <= 1e-5,
        residuals={"max_per_sample_grad": worst},
        notes="vanishing per-sample gradients certify sample-wise optimality",
    )


# ---------------------------------------------------------------------------
# interpolation solvers


@dataclass
class ExpInterpResult:
    matrix: np.ndarray
    rank: int
    coefficients: np.ndarray
    residual: float
    rank_deficient: bool

    def matrix_to_csv(self, path) -> None:
        """Dump the feature matrix for inspection, one row per point."""
        from pathlib import Path

        lines = [",".join(f"t{t}" for t in range(self.matrix.shape[1]))]
        for row in self.matrix:
            lines.append(",".join(repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def exp_interp(points, directions, eps: float, targets) -> ExpInterpResult:
    """Least squares in the exponential feature matrix
    M(eps)[j, t] = exp(eps * (w_t . x_j + b_t)).

    ``directions`` is a sequence of (b_t, w_t) pairs; ``points`` must be
    pairwise distinct and T >= m'.  Rank deficiency is flagged, not raised.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    m = pts.shape[0]
    bs = np.array([float(b) for b, _ in directions])
    ws = np.asarray([np.asarray(w, dtype=np.float64).reshape(-1) for _, w in directions])
    if len(directions) < m:
        raise DimensionError("need at least m' directions")
    v = np.asarray(targets, dtype=np.float64).reshape(-1)
    if v.shape[0] != m:
        raise DimensionError("targets must have one entry per point")
    mat = np.exp(eps * (pts @ ws.T + bs[None, :]))
    sing = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(sing > RANK_THRESHOLD * sing[0])) if sing.size else 0
    coeff, *_ = np.linalg.lstsq(mat, v, rcond=None)
    residual = float(np.linalg.norm(mat @ coeff - v))
    return ExpInterpResult(
        matrix=mat,
        rank=rank,
        coefficients=coeff,
        residual=residual,
        rank_deficient=rank < m,
    )


@dataclass
class PolyInterpResult:
    coefficients: np.ndarray
    residual: float
    n_features: int


def monomial_features(pts: np.ndarray, degree: int) -> np.ndarray:
    """All monomials of the coordinates up to the given total degree."""
    m, d = pts.shape
    n_features = sum(
        _n_monomials(d, t) for t in range(degree + 1)
    )
    if n_features > POLY_FEATURE_BUDGET:
        raise BudgetError(f"monomial basis would contain {n_features} features")
    cols = [np.ones(m)]
    for t in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), t):
            col = np.ones(m)
            for i in combo:
                col = col * pts[:, i]
            cols.append(col)
    return np.column_stack(cols)


def _n_monomials(d: int, t: int) -> int:
    from math import comb

    return comb(d + t - 1, t)


def poly_interp(points, degree: int, targets) -> PolyInterpResult:
    """Least squares over the monomial basis of total degree <= p.

    On m' distinct points with p >= m'-1 the system is solvable exactly;
    an underparameterized basis reports its nonzero residual.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    v = np.asarray(targets, dtype=np.float64).reshape(-1)
    if v.shape[0] != pts.shape[0]:
        raise DimensionError("targets must have one entry per point")
    features = monomial_features(pts, degree)
    coeff, *_ = np.linalg.lstsq(features, v, rcond=None)
    residual = float(np.linalg.norm(features @ coeff - v))
    return PolyInterpResult(coefficients=coeff, residual=residual, n_features=features.shape[1])


# ---------------------------------------------------------------------------
# perturbable-gradient-basis checker


@dataclass(frozen=True)
class InnerSolverConfig:
    max_iters: int = 10_000
    grad_tol: float = 1e-10
    backtrack: float = 0.5
    armijo: float = 1e-4


@dataclass
class PgbEpsReport:
    eps: float
    inner_value: float
    bound: float
    refuted: bool


def pgb_check(
    base_outputs,
    criterion: LossCriterion,
    data: Dataset,
    aux: AuxParams,
    eps_list=(1e-1, 1e-2, 1e-3),
    n_directions: int | None = None,
    inner: InnerSolverConfig = InnerSolverConfig(),
    seed: int = 0,
) -> OracleVerdict:
    """Necessary-condition check for a candidate (a, b, W) at fixed theta.

    The candidate must sit in the vanished regime ||a|| <= 1e-6.  For each
    probe radius the checker samples unit perturbation directions with the
    amplitude block zeroed (so all sample outputs are unchanged), builds
    the perturbed amplitude-derivative features

        F[i, t] = exp((w_k + eps w_t) . x_i + b_k + eps b_t)

    per output unit, and convex-minimizes the reassembled objective over
    the feature coefficients.  If the reachable value (plus the
    regularizer correction, here -lambda ||a||^2) falls below the
    candidate's own objective value, the candidate cannot be a local
    minimum: verdict REFUTED with the minimizing coefficients as witness.
    Otherwise the verdict is CONSISTENT, which is evidence only.
    """
    outputs = np.asarray(base_outputs, dtype=np.float64)
    if outputs.ndim == 1:
        outputs = outputs.reshape(-1, 1)
    m, d_y = outputs.shape
    if m != data.m or d_y != criterion.d_y:
        raise DimensionError("base outputs must be (m, d_y)")
    a_norm = float(np.linalg.norm(aux.a))
    if a_norm > 1e-6:
        raise DimensionError("pgb check covers only candidates with ||a|| <= 1e-6")
    m_distinct = len(data.groups)
    t_dirs = n_directions if n_directions is not None else m_distinct + 3

    # candidate value: mean loss at f + g plus the amplitude regularizer
    q_z = 0.0
    for xi, yi, fi in zip(data.inputs, data.targets, outputs):
        q_z += loss_value(criterion, fi + g_eval(aux, xi), yi)
    q_z = q_z / m + aux.lam * a_norm**2
    correction = -aux.lam * a_norm**2

    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(t_dirs, d_y * (1 + data.d_x)))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    b_hats = raw[:, :d_y]                      # (T, d_y)
    w_hats = raw[:, d_y:].reshape(t_dirs, data.d_x, d_y)

    reports: list[PgbEpsReport] = []
    witness = None
    for eps in eps_list:
        feats = np.empty((m, d_y, t_dirs))
        for t in range(t_dirs):
            w_pert = aux.w + eps * w_hats[t]   # (d_x, d_y)
            expo = data.inputs @ w_pert + (aux.b + eps * b_hats[t])[None, :]
            feats[:, :, t] = np.exp(expo)
        value, alpha = _inner_minimize(criterion, outputs, data.targets, feats, inner)
        bound = value + correction
        refuted = bound < q_z - 1e-7
        reports.append(PgbEpsReport(eps=eps, inner_value=value, bound=bound, refuted=refuted))
        if refuted and witness is None:
            witness = alpha.reshape(-1)

    any_refuted = any(r.refuted for r in reports)
    residuals = {"candidate_value": q_z, "correction": correction}
    for r in reports:
        residuals[f"bound_eps_{r.eps:g}"] = r.bound
    label = "REFUTED" if any_refuted else "CONSISTENT"
    return OracleVerdict(
        passed=not any_refuted,
        residuals=residuals,
        witness=witness,
        notes=(
            f"{label}; the necessary condition bounds the candidate value by a "
            "convex minimum over sampled perturbation features; REFUTED is a "
            "certificate, CONSISTENT is not a proof (the true bound is an "
            "infimum over an infinite direction family, probed per radius)"
        ),
    )


def _inner_minimize(
    criterion: LossCriterion,
    outputs: np.ndarray,
    targets: np.ndarray,
    feats: np.ndarray,
    inner: InnerSolverConfig,
) -> tuple[float, np.ndarray]:
    """min over alpha of (1/m) sum_i l(f_i + feats[i] alpha_i-blocks, y_i).

    Exact least squares for the squared loss; otherwise gradient descent
    with Armijo backtracking on the (convex) assembled objective.
    """
    m, d_y, t_dirs = feats.shape
    if criterion.kind == "squared":
        alpha = np.zeros((d_y, t_dirs))
        for k in range(d_y):
            rhs = targets[:, k] - outputs[:, k]
            sol, *_ = np.linalg.lstsq(feats[:, k, :], rhs, rcond=None)
            alpha[k] = sol
        return _inner_value(criterion, outputs, targets, feats, alpha), alpha

    alpha = np.zeros((d_y, t_dirs))
    value = _inner_value(criterion, outputs, targets, feats, alpha)
    for _ in range(inner.max_iters):
        grad = _inner_gradient(criterion, outputs, targets, feats, alpha)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= inner.grad_tol:
            break
        step = 1.0
        improved = False
        while step > 1e-16:
            trial = alpha - step * grad
            tv = _inner_value(criterion, outputs, targets, feats, trial)
            if tv <= value - inner.armijo * step * gnorm**2:
                alpha, value = trial, tv
                improved = True
                break
            step *= inner.backtrack
        if not improved:
            break
    return value, alpha


def _inner_value(criterion, outputs, targets, feats, alpha) -> float:
    m = outputs.shape[0]
    total = 0.0
    for i in range(m):
        q = outputs[i] + np.einsum("kt,kt->k", feats[i], alpha)
        total += loss_value(criterion, q, targets[i])
    return total / m


def _inner_gradient(criterion, outputs, targets, feats, alpha) -> np.ndarray:
    m = outputs.shape[0]
    grad = np.zeros_like(alpha)
    for i in range(m):
        q = outputs[i] + np.einsum("kt,kt->k", feats[i], alpha)
        gl = loss_gradient(criterion, q, targets[i])
        grad += gl[:, None] * feats[i]
    return grad / m


# ---------------------------------------------------------------------------
# gradient factorization


@dataclass
class FactorizationReport:
    a_matrix: np.ndarray  # d_theta x (m d_y), includes the 1/m normalization
    r_vector: np.ndarray  # stacked per-sample loss gradients, length m d_y
    norm_ar: float
    relative_null_residual: float


def gradient_factorization(
    model, criterion, data: Dataset, theta, aux: AuxParams | None = None
) -> FactorizationReport:
    """A[theta] r[phi] factorization of the parameter gradient.

    A stacks the per-sample jacobians (scaled by 1/m); r stacks the loss
    gradients at f (or f + g when aux parameters are given).  Under mean
    reduction, dL/dtheta = (A r)^T, so r in the null space of A at nonzero
    r is the signature of a stationary point that added neurons can
    escape: perturbing g moves r out of the null space.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    m = data.m
    a_cols = []
    r_parts = []
    for xi, yi in zip(data.inputs, data.targets):
        jac = parameter_jacobian(model, theta, xi)  # (d_y, d_theta)
        a_cols.append(jac.T / m)
        q = model.forward(theta, xi)
        if aux is not None:
            q = q + g_eval(aux, xi)
        r_parts.append(loss_gradient(criterion, q, yi))
    a_matrix = np.hstack(a_cols)
    r_vector = np.concatenate(r_parts)
    prod = a_matrix @ r_vector
    norm_ar = float(np.linalg.norm(prod))
    denom = float(np.linalg.norm(a_matrix) * np.linalg.norm(r_vector)) + 1e-300
    return FactorizationReport(
        a_matrix=a_matrix,
        r_vector=r_vector,
        norm_ar=norm_ar,
        relative_null_residual=norm_ar / denom,
    )
