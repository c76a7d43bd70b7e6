"""Closed-form regression fixtures and the landscape grid.

Each analytic example pins a dataset, fixed network outputs, a loss, and
the divergence path (a(eps), b(eps), w(eps)) along which the augmented
objective approaches its limit.  Two of the hinge examples as printed
carry slips (a sign on the path amplitude and a missing a^2 factor in the
regularizer constant); the fixtures encode the corrected paths, record
the printed forms, and report the discrepancy instead of asserting it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .augment import (
    AuxParams,
    Dataset,
    Reduction,
    augmented_objective,
    augmented_objective_fixed_theta,
)
from .autodiff import GradientProgram
from .criteria import LossCriterion, loss_gradient, loss_value
from .errors import UnknownFixture
from .models import BumpSlopeCurve, GaussianBumpCurve, bump_curve
from .optimize import TrainingProblem
from .verdict import OracleVerdict

DEFAULT_LAMBDA = 0.01
EPS_LADDER = (1.0, 0.5, 0.25, 0.1, 0.05)


def stationary_theta(curve: GaussianBumpCurve | None = None, lo=0.15, hi=0.3) -> float:
    """Root of the curve derivative inside the suboptimal basin (bisection)."""
    curve = curve or bump_curve()
    flo = curve.curve_derivative(lo)
    if flo * curve.curve_derivative(hi) > 0:
        raise ValueError("derivative does not change sign on the bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = curve.curve_derivative(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# analytic examples


@dataclass(frozen=True)
class AnalyticExample:
    """One closed-form example: data, fixed outputs, path, and limit."""

    name: str
    dataset: Dataset
    outputs: np.ndarray  # fixed f(x_i) values, (m, 1)
    criterion: LossCriterion
    reduction: Reduction
    path: Callable[[float, float], AuxParams]  # (eps, lam) -> aux point
    closed_form: Callable[[float, float], float]  # (eps, lam) -> L~ value
    limit: float
    printed_path: Callable[[float, float], AuxParams] | None = None
    printed_form: Callable[[float, float], float] | None = None
    discrepancy: str = ""
    local_min_value: float | None = None  # value of L~ at aux = 0, when local min

    def objective(self, lam: float) -> GradientProgram:
        return augmented_objective_fixed_theta(
            self.outputs, self.criterion, self.dataset, lam, self.reduction
        )


def _aux(a: float, b: float, w: float, lam: float) -> AuxParams:
    return AuxParams([a], [b], [[w]], lam)


def _squared_one_sample() -> AnalyticExample:
    # single sample, f = 2, y = 1; path a = -e^{-1/eps}, b = 1/eps (x = 0)
    return AnalyticExample(
        name="squared-one-sample",
        dataset=Dataset([[0.0]], [[1.0]]),
        outputs=np.array([[2.0]]),
        criterion=LossCriterion("squared", d_y=1),
        reduction=Reduction.MEAN,
        path=lambda eps, lam: _aux(-math.exp(-1 / eps), 1 / eps, 0.0, lam),
        closed_form=lambda eps, lam: lam * math.exp(-2 / eps),
        limit=0.0,
    )


def _squared_two_sample() -> AnalyticExample:
    # f == 0 at x = (0, 1), y = (1, -1), plain sum;
    # path a = e^{-1/eps}, b = 1/eps, w = -1/eps
    return AnalyticExample(
        name="squared-two-sample",
        dataset=Dataset([[0.0], [1.0]], [[1.0], [-1.0]]),
        outputs=np.zeros((2, 1)),
        criterion=LossCriterion("squared", d_y=1),
        reduction=Reduction.SUM,
        path=lambda eps, lam: _aux(math.exp(-1 / eps), 1 / eps, -1 / eps, lam),
        closed_form=lambda eps, lam: (math.exp(-1 / eps) + 1) ** 2
        + lam * math.exp(-2 / eps),
        limit=1.0,
    )


def _squared_same_input() -> AnalyticExample:
    # same data but x1 = x2: the cross terms cancel and aux = 0 is a real
    # local minimum with value 2.  The divergence path of the distinct-input
    # example (w collapses to 0 here) stalls at 4 > 2: it cannot descend
    # below the local minimum it failed to eliminate.
    return AnalyticExample(
        name="squared-two-sample-same-input",
        dataset=Dataset([[0.0], [0.0]], [[1.0], [-1.0]]),
        outputs=np.zeros((2, 1)),
        criterion=LossCriterion("squared", d_y=1),
        reduction=Reduction.SUM,
        path=lambda eps, lam: _aux(math.exp(-1 / eps), 1 / eps, 0.0, lam),
        closed_form=lambda eps, lam: 4.0 + lam * math.exp(-2 / eps),
        limit=4.0,
        local_min_value=2.0,
    )


def _hinge_one_sample() -> AnalyticExample:
    # f = -1, y = 1, cubed hinge.  Printed path has a = -2e^{-1/eps}, which
    # evaluates to loss 64; the sign-corrected path reaches the stated
    # limit 0 with regularizer 4*lam*e^{-2/eps} (the printed constant
    # omits the a^2 = 4e^{-2/eps} factor).
    return AnalyticExample(
        name="hinge-one-sample",
        dataset=Dataset([[0.0]], [[1.0]]),
        outputs=np.array([[-1.0]]),
        criterion=LossCriterion("smoothed_hinge", p=3),
        reduction=Reduction.MEAN,
        path=lambda eps, lam: _aux(2 * math.exp(-1 / eps), 1 / eps, 0.0, lam),
        closed_form=lambda eps, lam: 4 * lam * math.exp(-2 / eps),
        limit=0.0,
        printed_path=lambda eps, lam: _aux(-2 * math.exp(-1 / eps), 1 / eps, 0.0, lam),
        printed_form=lambda eps, lam: lam * math.exp(-2 / eps),
        discrepancy=(
            "printed path amplitude -2e^{-1/eps} yields loss 64 (margin driven to "
            "4); corrected amplitude +2e^{-1/eps} reaches limit 0; printed "
            "regularizer constant drops the factor a^2 = 4e^{-2/eps}"
        ),
    )


def _hinge_two_sample() -> AnalyticExample:
    # f = (-1, 1) at x = (0, 1), y = (1, -1), cubed hinge, plain sum;
    # path a = 2e^{-1/eps}, b = 1/eps, w = -1/eps.
    return AnalyticExample(
        name="hinge-two-sample",
        dataset=Dataset([[0.0], [1.0]], [[1.0], [-1.0]]),
        outputs=np.array([[-1.0], [1.0]]),
        criterion=LossCriterion("smoothed_hinge", p=3),
        reduction=Reduction.SUM,
        path=lambda eps, lam: _aux(2 * math.exp(-1 / eps), 1 / eps, -1 / eps, lam),
        closed_form=lambda eps, lam: (2 + 2 * math.exp(-1 / eps)) ** 3
        + 4 * lam * math.exp(-2 / eps),
        limit=8.0,
        printed_form=lambda eps, lam: (2 + 2 * math.exp(-1 / eps)) ** 3
        + lam * math.exp(-2 / eps),
        discrepancy=(
            "printed regularizer constant lam*e^{-2/eps} drops the factor "
            "a^2 = 4e^{-2/eps}; the limit 8 is unaffected"
        ),
    )


_EXAMPLES: dict[str, Callable[[], AnalyticExample]] = {
    "squared-one-sample": _squared_one_sample,
    "squared-two-sample": _squared_two_sample,
    "squared-two-sample-same-input": _squared_same_input,
    "hinge-one-sample": _hinge_one_sample,
    "hinge-two-sample": _hinge_two_sample,
}

EXAMPLE_NAMES = tuple(_EXAMPLES)


def get_example(name: str) -> AnalyticExample:
    try:
        return _EXAMPLES[name]()
    except KeyError:
        raise UnknownFixture(name) from None


@dataclass
class ExampleRow:
    eps: float
    general: float
    closed: float
    aux_norm: float
    printed: float | None = None


@dataclass
class ExampleReport:
    name: str
    lam: float
    rows: list[ExampleRow]
    limit: float
    agreement_ok: bool
    monotone_ok: bool
    norm_increasing: bool
    discrepancy: str
    max_disagreement: float

    @property
    def passed(self) -> bool:
        return self.agreement_ok and self.monotone_ok

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "lambda": self.lam,
            "limit": self.limit,
            "passed": self.passed,
            "agreement_ok": self.agreement_ok,
            "monotone_ok": self.monotone_ok,
            "norm_increasing": self.norm_increasing,
            "max_disagreement": self.max_disagreement,
            "discrepancy": self.discrepancy,
            "rows": [
                {
                    "eps": r.eps,
                    "general": r.general,
                    "closed_form": r.closed,
                    "aux_norm": r.aux_norm,
                    **({"printed_form": r.printed} if r.printed is not None else {}),
                }
                for r in self.rows
            ],
        }


def run_example(
    name: str, eps_ladder=EPS_LADDER, lam: float = DEFAULT_LAMBDA
) -> ExampleReport:
    """Evaluate the general objective and the closed form along the path.

    Passes iff they agree within 1e-10 at every rung and the values
    approach the recorded limit monotonically.
    """
    ex = get_example(name)
    prog = ex.objective(lam)
    rows: list[ExampleRow] = []
    for eps in eps_ladder:
        aux = ex.path(eps, lam)
        p = np.concatenate([aux.a, aux.b, aux.w.reshape(-1, order="F")])
        general = prog.evaluate(p)
        closed = ex.closed_form(eps, lam)
        printed = ex.printed_form(eps, lam) if ex.printed_form else None
        rows.append(
            ExampleRow(
                eps=eps,
                general=general,
                closed=closed,
                aux_norm=float(np.linalg.norm(p)),
                printed=printed,
            )
        )
    max_dis = max(abs(r.general - r.closed) for r in rows)
    agreement = max_dis <= 1e-10
    gaps = [abs(r.general - ex.limit) for r in rows]
    monotone = all(g1 >= g2 - 1e-15 for g1, g2 in zip(gaps, gaps[1:]))
    norms = [r.aux_norm for r in rows]
    norm_increasing = all(n1 <= n2 + 1e-15 for n1, n2 in zip(norms, norms[1:]))
    return ExampleReport(
        name=name,
        lam=lam,
        rows=rows,
        limit=ex.limit,
        agreement_ok=agreement,
        monotone_ok=monotone,
        norm_increasing=norm_increasing,
        discrepancy=ex.discrepancy,
        max_disagreement=max_dis,
    )


# ---------------------------------------------------------------------------
# landscape grid


@dataclass(frozen=True)
class InnerSolveConfig:
    bracket: tuple[float, float] = (-10.0, 10.0)
    golden_tol: float = 1e-11
    newton_steps: int = 20


@dataclass
class LandscapeGrid:
    rows: list[tuple[float, float, float]]  # (theta, b, value), lexicographic
    failures: int
    metadata: dict


def golden_section(fn, lo: float, hi: float, tol: float = 1e-11, max_iters: int = 200):
    """Bracketed golden-section minimization of a unimodal function."""
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - gr * (hi - lo)
    d = lo + gr * (hi - lo)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iters):
        if hi - lo <= tol:
            break
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = fn(d)
    x = 0.5 * (lo + hi)
    return x, fn(x)


def _inner_min_scalar(
    criterion: LossCriterion, f0: float, y, scale: float, lam: float, cfg: InnerSolveConfig
) -> tuple[float, float]:
    """min over a of l(f0 + a*scale, y) + lam a^2, golden then Newton polish."""

    def h(a: float) -> float:
        return loss_value(criterion, [f0 + a * scale], y) + lam * a * a

    def hp(a: float) -> float:
        return float(loss_gradient(criterion, [f0 + a * scale], y)[0]) * scale + 2 * lam * a

    a, _ = golden_section(h, cfg.bracket[0], cfg.bracket[1], cfg.golden_tol)
    fd_h = 1e-7
    for _ in range(cfg.newton_steps):
        d1 = hp(a)
        d2 = (hp(a + fd_h) - hp(a - fd_h)) / (2 * fd_h)
        if not math.isfinite(d2) or d2 <= 1e-12:
            break
        step = d1 / d2
        candidate = a - step
        if not math.isfinite(candidate):
            break
        if h(candidate) <= h(a):
            a = candidate
        else:
            break
    return a, h(a)


def landscape_grid(
    fixture: str = "bump-hinge",
    theta_range: tuple[float, float] = (0.0, 1.0),
    b_range: tuple[float, float] = (-5.0, 15.0),
    n_theta: int = 200,
    n_b: int = 200,
    lam: float = DEFAULT_LAMBDA,
    inner: InnerSolveConfig = InnerSolveConfig(),
    jobs: int = 1,
) -> LandscapeGrid:
    """Value surface over (theta, b) with (a, W) inner-minimized per cell.

    The single training input sits at x = 0, so W is inert and the inner
    problem is one-dimensional in the amplitude.  Cells where the inner
    solve fails are recorded as NaN and counted.  Cells are independent;
    row order is fixed by the (theta, b) sort regardless of scheduling.
    """
    curve = bump_curve()
    if fixture == "bump-hinge":
        criterion = LossCriterion("smoothed_hinge", p=3)
        y = np.array([-1.0])
    elif fixture == "bump-squared":
        criterion = LossCriterion("squared", d_y=1)
        y = np.array([curve.curve_value(0.8)])
    else:
        raise UnknownFixture(fixture)
    thetas = np.linspace(theta_range[0], theta_range[1], n_theta)
    bs = np.linspace(b_range[0], b_range[1], n_b)

    def column(theta: float) -> list[tuple[float, float, float]]:
        f0 = curve.curve_value(float(theta))
        col = []
        for b in bs:
            scale = math.exp(float(b))
            try:
                _, value = _inner_min_scalar(criterion, f0, y, scale, lam, inner)
            except (OverflowError, ValueError):
                value = math.nan
            col.append((float(theta), float(b), value))
        return col

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            columns = list(pool.map(column, thetas))
    else:
        columns = [column(t) for t in thetas]
    rows: list[tuple[float, float, float]] = []
    failures = 0
    for col in columns:
        for theta, b, value in col:
            if not math.isfinite(value):
                failures += 1
                value = math.nan
            rows.append((theta, b, value))
    return LandscapeGrid(
        rows=rows,
        failures=failures,
        metadata={
            "fixture": fixture,
            "lambda": lam,
            "theta_range": list(theta_range),
            "b_range": list(b_range),
            "n_theta": n_theta,
            "n_b": n_b,
            "bracket": list(inner.bracket),
            "newton_steps": inner.newton_steps,
            "inner_solve_failures": failures,
        },
    )


# ---------------------------------------------------------------------------
# null-space fixtures


class OffsetBumpCurve:
    """One trainable offset; the input enters through a fixed slope.

    f(x; t) = curve(t + gamma * x).  Distinct inputs see different points
    of the curve, so the per-sample derivative columns differ.
    """

    d_y = 1
    n_params = 1

    def __init__(self, gamma: float, curve: GaussianBumpCurve | None = None, d_x: int = 1):
        self.gamma = gamma
        self.curve = curve or bump_curve()
        self.d_x = d_x

    def forward(self, theta, x) -> np.ndarray:
        t = float(np.asarray(theta).reshape(-1)[0])
        x0 = float(np.asarray(x).reshape(-1)[0])
        return np.array([self.curve.curve_value(t + self.gamma * x0)])

    def output_nodes(self, theta, x):
        from .autodiff import vitem
        from .models import _as_vec1

        x0 = float(np.asarray(x).reshape(-1)[0])
        t = vitem(theta, 0) + self.gamma * x0
        return _as_vec1(self.curve._curve_node(t))

    def parameter_jacobian(self, theta, x) -> np.ndarray:
        t = float(np.asarray(theta).reshape(-1)[0])
        x0 = float(np.asarray(x).reshape(-1)[0])
        return np.array([[self.curve.curve_derivative(t + self.gamma * x0)]])

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(0.0, 1.0, 1)


@dataclass
class NullSpaceFixture:
    model: object
    theta: np.ndarray
    data: Dataset
    criterion: LossCriterion
    report: OracleVerdict


def a_zero_fixture(lam: float = DEFAULT_LAMBDA, n_probes: int = 20, seed: int = 0) -> NullSpaceFixture:
    """Suboptimal stationary point where the jacobian block vanishes.

    The slope parameter is inert at x = 0 and the offset sits at the
    stationary point of the curve inside the poor basin, so the network
    gradient of the augmented objective is zero no matter what the added
    neuron does.
    """
    model = BumpSlopeCurve()
    theta_star = np.array([stationary_theta(model.curve), 0.3])
    data = Dataset([[0.0]], [[-1.0]])
    criterion = LossCriterion("smoothed_hinge", p=3)
    prog = augmented_objective(model, criterion, data, lam)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        aux = rng.uniform(-2.0, 2.0, 3)
        p = np.concatenate([theta_star, aux])
        g = prog.gradient(p)
        worst = max(worst, float(np.max(np.abs(g.segment("theta")))))
    return NullSpaceFixture(
        model=model,
        theta=theta_star,
        data=data,
        criterion=criterion,
        report=OracleVerdict(
            passed=worst <= 1e-10,
            residuals={"max_theta_grad": worst},
            notes="network gradient stays zero for every added-neuron setting",
        ),
    )


def a_nonzero_fixture(t: float = 0.1) -> NullSpaceFixture:
    """Stationary but suboptimal point with a nonzero jacobian matrix.

    Targets are placed so the residual vector is exactly orthogonal to the
    jacobian direction: the plain gradient vanishes while the loss stays
    positive, and any nonzero neuron output rotates the residuals out of
    the null space.
    """
    model = OffsetBumpCurve(gamma=0.35)
    theta_hat = np.array([0.3])
    x2 = 1.0
    d1 = model.parameter_jacobian(theta_hat, [0.0])[0, 0]
    d2 = model.parameter_jacobian(theta_hat, [x2])[0, 0]
    f1 = model.forward(theta_hat, [0.0])[0]
    f2 = model.forward(theta_hat, [x2])[0]
    data = Dataset([[0.0], [x2]], [[f1 - t * d2], [f2 + t * d1]])
    criterion = LossCriterion("squared", d_y=1)
    from .oracles import gradient_factorization

    rep = gradient_factorization(model, criterion, data, theta_hat)
    return NullSpaceFixture(
        model=model,
        theta=theta_hat,
        data=data,
        criterion=criterion,
        report=OracleVerdict(
            passed=rep.norm_ar <= 1e-10,
            residuals={"norm_ar": rep.norm_ar},
            notes="residuals constructed orthogonal to the jacobian direction",
        ),
    )


def null_space_fixture(lam: float = DEFAULT_LAMBDA) -> tuple[NullSpaceFixture, NullSpaceFixture]:
    """Both factorization fixtures with their verification reports."""
    return a_zero_fixture(lam), a_nonzero_fixture()


# ---------------------------------------------------------------------------
# training problems and datasets for the CLI


def named_dataset(name: str) -> Dataset:
    if name == "bump-hinge":
        return Dataset([[0.0]], [[-1.0]])
    if name == "bump-squared":
        return Dataset([[0.0]], [[bump_curve().curve_value(0.8)]])
    raise UnknownFixture(name)


def bump_problem(loss: str = "hinge", lam: float = 0.2) -> TrainingProblem:
    """The one-sample curve problem used by the histogram experiment."""
    if loss == "hinge":
        criterion = LossCriterion("smoothed_hinge", p=3)
        data = named_dataset("bump-hinge")
    else:
        criterion = LossCriterion("squared", d_y=1)
        data = named_dataset("bump-squared")
    return TrainingProblem(
        model=bump_curve(),
        criterion=criterion,
        data=data,
        lam=lam,
        theta_init=(0.0, 1.0),
        aux_init_scale=0.1,
    )


def frozen_basin_objective(lam: float = 0.2) -> tuple[GradientProgram, float, float]:
    """L~ over (a, b, W) with the curve frozen at the poor basin's bottom.

    Returns the program, the frozen loss value, and the frozen parameter.
    """
    theta_star = stationary_theta()
    f0 = bump_curve().curve_value(theta_star)
    data = named_dataset("bump-hinge")
    criterion = LossCriterion("smoothed_hinge", p=3)
    prog = augmented_objective_fixed_theta(np.array([[f0]]), criterion, data, lam)
    frozen_loss = loss_value(criterion, [f0], [-1.0])
    return prog, frozen_loss, theta_star
