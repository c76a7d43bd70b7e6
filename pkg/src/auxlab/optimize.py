"""First-order training with stationarity detection and the norm monitor.

The monitor watches ||a||_2 + ||b||_2 + ||W||_F and fires when it crosses
the threshold: divergence of the added-neuron parameters is the signature
of descending toward an infimum that no finite point attains.  On firing
it can halt or restart (re-draw the aux block, optionally the network
parameters too).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import GradientProgram, ParamVector
from .errors import ExponentOverflow

AUX_SEGMENTS = ("a", "b", "W")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "gd"  # "gd" | "adagrad"
    lr: float = 0.01
    adagrad_delta: float = 1e-8
    max_iters: int = 10_000
    grad_tol: float = 1e-8
    seed: int = 0
    batch_size: int | None = None  # None = full batch
    sample_every: int = 10  # trajectory sampling stride
    freeze: tuple[str, ...] = ()  # segments held fixed during updates

    def __post_init__(self):
        if self.method not in ("gd", "adagrad"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.max_iters < 1:
            raise ValueError("max iterations must be at least 1")


class MonitorAction(enum.Enum):
    OFF = "off"
    HALT = "halt"
    RESTART = "restart"


@dataclass(frozen=True)
class MonitorConfig:
    action: MonitorAction = MonitorAction.OFF
    threshold: float = 7.0
    max_restarts: int = 3
    init_scale: float = 0.1  # restart draw: uniform[-scale, scale] on aux
    redraw_theta: bool = False
    theta_init: tuple[float, float] = (0.0, 1.0)
    w_norm: str = "frobenius"  # or "spectral"

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("monitor threshold must be positive")

    @classmethod
    def off(cls) -> "MonitorConfig":
        return cls(action=MonitorAction.OFF)


def aux_norm(p: ParamVector, w_norm: str = "frobenius") -> float:
    """||a||_2 + ||b||_2 + ||W||, zero when the layout has no aux block."""
    total = 0.0
    for name in ("a", "b"):
        if name in p.layout:
            total += float(np.linalg.norm(p.segment(name)))
    if "W" in p.layout:
        seg = p.segment("W")
        if w_norm == "spectral" and seg.size:
            d = int(np.sqrt(seg.size))  # only used on square reshapes
            total += float(np.linalg.norm(seg.reshape(d, -1), ord=2))
        else:
            total += float(np.linalg.norm(seg))
    return total


def monitor_check(p: ParamVector, mon: MonitorConfig) -> bool:
    """True iff the aux norm has reached the monitor threshold."""
    return aux_norm(p, mon.w_norm) >= mon.threshold


class Termination(enum.Enum):
    STATIONARY = "stationary"
    MAX_ITER = "max_iter"
    MONITOR_HALT = "monitor_halt"
    OVERFLOW = "overflow"


@dataclass
class TrajectoryPoint:
    iteration: int
    objective: float
    grad_norm: float
    aux_norm: float


@dataclass
class RunRecord:
    """One optimization trajectory with its final state and verdict."""

    samples: list[TrajectoryPoint]
    final: ParamVector
    termination: Termination
    iterations: int
    restarts: int
    monitor_events: list[int]
    final_objective: float
    final_grad_norm: float
    final_aux_norm: float
    wall_time: float  # informational; excluded from serialized output
    seed: int = 0
    variant: str = ""

    def to_json_dict(self) -> dict:
        """Deterministic serialization (wall time deliberately omitted)."""

        def num(v):
            return float(v) if np.isfinite(v) else None

        return {
            "variant": self.variant,
            "seed": self.seed,
            "termination": self.termination.value,
            "iterations": self.iterations,
            "restarts": self.restarts,
            "monitor_events": list(self.monitor_events),
            "final_objective": num(self.final_objective),
            "final_grad_norm": num(self.final_grad_norm),
            "final_aux_norm": num(self.final_aux_norm),
            "segments": {
                name: [float(v) for v in self.final.segment(name)]
                for name in self.final.layout.names()
            },
        }


def _redraw(
    p: ParamVector, mon: MonitorConfig, rng: np.random.Generator
) -> ParamVector:
    values = p.values.copy()
    if mon.redraw_theta and "theta" in p.layout:
        lo, hi = mon.theta_init
        values[p.layout.slice("theta")] = rng.uniform(lo, hi, p.layout.size("theta"))
    for name in AUX_SEGMENTS:
        if name in p.layout:
            values[p.layout.slice(name)] = rng.uniform(
                -mon.init_scale, mon.init_scale, p.layout.size(name)
            )
    return p.with_values(values)


def minimize(
    objective: GradientProgram,
    init: ParamVector,
    opt: OptimizerConfig,
    mon: MonitorConfig | None = None,
    batch_objectives=None,
    n_samples: int | None = None,
) -> RunRecord:
    """Iterate p <- p - step(grad) until stationary, budget, or monitor halt.

    Mini-batching: pass ``batch_objectives`` mapping an index array to a
    GradientProgram and the total ``n_samples``; updates then use seeded
    shuffled batches while termination checks use the full objective.
    """
    mon = mon or MonitorConfig.off()
    if init.layout.dim != objective.dim:
        from .errors import DimensionError

        raise DimensionError("initial point does not match objective")
    rng = np.random.default_rng(opt.seed)
    p = init.copy()
    acc = np.zeros(p.dim)
    freeze_mask: np.ndarray | None = None
    if opt.freeze:
        freeze_mask = np.zeros(p.dim, dtype=bool)
        for name in opt.freeze:
            freeze_mask[p.layout.slice(name)] = True

    samples: list[TrajectoryPoint] = []
    monitor_events: list[int] = []
    restarts = 0
    termination = Termination.MAX_ITER
    value = np.nan
    grad_norm = np.nan
    t0 = time.perf_counter()
    batch_order: np.ndarray | None = None
    batch_pos = 0

    batching = opt.batch_size is not None and batch_objectives is not None
    it = 0
    while it < opt.max_iters:
        it += 1
        full_pass = not batching or it == 1 or it % opt.sample_every == 0
        try:
            if full_pass:
                value, grad = objective.value_and_gradient(p)
            if batching:
                if batch_order is None or batch_pos >= len(batch_order):
                    batch_order = rng.permutation(n_samples)
                    batch_pos = 0
                idx = batch_order[batch_pos : batch_pos + opt.batch_size]
                batch_pos += opt.batch_size
                _, step_grad = batch_objectives(idx).value_and_gradient(p)
            else:
                step_grad = grad
        except ExponentOverflow:
            termination = Termination.OVERFLOW
            it -= 1
            break
        if freeze_mask is not None:
            step_grad = np.where(freeze_mask, 0.0, step_grad)
        if full_pass:
            if freeze_mask is not None:
                grad = np.where(freeze_mask, 0.0, grad)
            grad_norm = float(np.linalg.norm(grad))
            if it == 1 or it % opt.sample_every == 0:
                samples.append(
                    TrajectoryPoint(it - 1, value, grad_norm, aux_norm(p, mon.w_norm))
                )
            if grad_norm <= opt.grad_tol:
                termination = Termination.STATIONARY
                break
        if opt.method == "adagrad":
            acc += step_grad * step_grad
            step = opt.lr * step_grad / (np.sqrt(acc) + opt.adagrad_delta)
        else:
            step = opt.lr * step_grad
        p = p.with_values(p.values - step)
        if mon.action is not MonitorAction.OFF and monitor_check(p, mon):
            monitor_events.append(it)
            if mon.action is MonitorAction.HALT or restarts >= mon.max_restarts:
                termination = Termination.MONITOR_HALT
                break
            restarts += 1
            p = _redraw(p, mon, rng)
            acc = np.zeros(p.dim)

    try:
        value, grad_vals = objective.value_and_gradient(p)
        if freeze_mask is not None:
            grad_vals = np.where(freeze_mask, 0.0, grad_vals)
        grad_norm = float(np.linalg.norm(grad_vals))
    except ExponentOverflow:
        termination = Termination.OVERFLOW
    final_aux = aux_norm(p, mon.w_norm)
    if np.isfinite(value) and np.isfinite(grad_norm):
        if samples and samples[-1].iteration >= it - 1:
            samples.pop()  # the loop already sampled this iterate
        samples.append(TrajectoryPoint(it, value, grad_norm, final_aux))
    return RunRecord(
        samples=samples,
        final=p,
        termination=termination,
        iterations=it,
        restarts=restarts,
        monitor_events=monitor_events,
        final_objective=value,
        final_grad_norm=grad_norm,
        final_aux_norm=final_aux,
        wall_time=time.perf_counter() - t0,
        seed=opt.seed,
    )


# ---------------------------------------------------------------------------
# multi-seed experiment

VARIANTS = ("original", "augmented", "monitor")


@dataclass(frozen=True)
class TrainingProblem:
    """Everything needed to train one model/loss/dataset combination."""

    model: object
    criterion: object
    data: object
    lam: float = 0.01
    reduction: object = None  # augment.Reduction; None = mean
    theta_init: tuple[float, float] = (0.0, 1.0)
    aux_init_scale: float = 0.1
    use_model_init: bool = False  # draw theta from model.init_params instead


@dataclass
class ExperimentRun:
    variant: str
    seed: int
    final_loss: float  # standard objective L(theta) at the end of training
    termination: str
    restarts: int
    iterations: int


@dataclass
class ExperimentSummary:
    runs: list[ExperimentRun]
    n_seeds: int
    variants: tuple[str, ...]
    metadata: dict = field(default_factory=dict)
    records: list[RunRecord] = field(default_factory=list)

    def fraction_below(self, variant: str, cutoff: float) -> float:
        sel = [r for r in self.runs if r.variant == variant]
        if not sel:
            return 0.0
        return sum(1 for r in sel if r.final_loss <= cutoff) / len(sel)

    def final_losses(self, variant: str) -> list[float]:
        return [r.final_loss for r in self.runs if r.variant == variant]

    def histogram(self, variant: str, edges) -> list[int]:
        counts, _ = np.histogram(self.final_losses(variant), bins=edges)
        return [int(c) for c in counts]


def _paired_init(
    problem: TrainingProblem, base_seed: int, seed: int, layout_dim_theta: int
):
    """Initial draws shared across variants for the same seed."""
    rng_theta = np.random.default_rng([base_seed, seed, 0])
    rng_aux = np.random.default_rng([base_seed, seed, 1])
    if problem.use_model_init:
        theta = problem.model.init_params(rng_theta)
    else:
        lo, hi = problem.theta_init
        theta = rng_theta.uniform(lo, hi, layout_dim_theta)
    return theta, rng_aux


def multi_seed_experiment(
    problem: TrainingProblem,
    n_seeds: int,
    opt: OptimizerConfig,
    mon: MonitorConfig,
    variants=VARIANTS,
    base_seed: int = 0,
    jobs: int = 1,
) -> ExperimentSummary:
    """Run each variant from paired seeded inits; record final L(theta).

    The reported loss is always the standard objective at the trained
    network parameters, for every variant.  Individual run failures
    (overflow) are recorded and the experiment continues.  Runs are
    independent; with ``jobs`` > 1 they execute concurrently and the
    summary is assembled in deterministic order afterwards.
    """
    from .augment import (
        Dataset,
        Reduction,
        augmented_layout,
        augmented_objective,
        original_objective,
        original_value,
    )

    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    reduction = problem.reduction or Reduction.MEAN
    model, criterion, data = problem.model, problem.criterion, problem.data
    prog_orig = original_objective(model, criterion, data, reduction)
    prog_aug = augmented_objective(model, criterion, data, problem.lam, reduction)
    d_theta = model.n_params
    d_x, d_y = data.d_x, criterion.d_y
    aux_dim = 2 * d_y + d_x * d_y

    def one_run(variant: str, seed: int) -> tuple[ExperimentRun, RunRecord]:
        theta, rng_aux = _paired_init(problem, base_seed, seed, d_theta)
        aux0 = rng_aux.uniform(-problem.aux_init_scale, problem.aux_init_scale, aux_dim)
        run_opt = OptimizerConfig(
            method=opt.method,
            lr=opt.lr,
            adagrad_delta=opt.adagrad_delta,
            max_iters=opt.max_iters,
            grad_tol=opt.grad_tol,
            seed=int(np.random.default_rng([base_seed, seed, 2]).integers(2**31)),
            batch_size=opt.batch_size,
            sample_every=opt.sample_every,
            freeze=opt.freeze,
        )
        def batch_fn(idx, augmented):
            sub = Dataset(data.inputs[idx], data.targets[idx])
            if augmented:
                return augmented_objective(model, criterion, sub, problem.lam, reduction)
            return original_objective(model, criterion, sub, reduction)

        batching = run_opt.batch_size is not None and run_opt.batch_size < data.m
        if variant == "original":
            init = ParamVector(theta, prog_orig.layout)
            record = minimize(
                prog_orig,
                init,
                run_opt,
                MonitorConfig.off(),
                batch_objectives=(lambda idx: batch_fn(idx, False)) if batching else None,
                n_samples=data.m,
            )
        else:
            init = ParamVector(
                np.concatenate([theta, aux0]),
                augmented_layout(d_theta, d_x, d_y),
            )
            run_mon = mon if variant == "monitor" else MonitorConfig.off()
            record = minimize(
                prog_aug,
                init,
                run_opt,
                run_mon,
                batch_objectives=(lambda idx: batch_fn(idx, True)) if batching else None,
                n_samples=data.m,
            )
        record.seed = seed
        record.variant = variant
        final_theta = record.final.segment("theta")
        final_loss = original_value(model, criterion, data, final_theta, reduction)
        run = ExperimentRun(
            variant=variant,
            seed=seed,
            final_loss=float(final_loss),
            termination=record.termination.value,
            restarts=record.restarts,
            iterations=record.iterations,
        )
        return run, record

    tasks = [(variant, seed) for variant in variants for seed in range(n_seeds)]
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda vs: one_run(*vs), tasks))
    else:
        results = [one_run(*vs) for vs in tasks]
    runs = [r for r, _ in results]
    records = [rec for _, rec in results]
    return ExperimentSummary(
        runs=runs,
        n_seeds=n_seeds,
        variants=tuple(variants),
        records=records,
        metadata={
            "optimizer": opt.method,
            "lr": opt.lr,
            "max_iters": opt.max_iters,
            "lambda": problem.lam,
            "monitor_threshold": mon.threshold,
            "monitor_action": mon.action.value,
            "redraw_theta": mon.redraw_theta,
            "base_seed": base_seed,
            "defaults_note": (
                "learning rate, initialization, and restart distribution are "
                "desk-scale choices; the reference experiment reports only the "
                "optimizer family and the restart rule"
            ),
        },
    )
