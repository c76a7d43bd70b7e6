"""Command-line entry point.

Subcommands wire configs, datasets, training runs, verification oracles,
and the analytic fixtures together with stable file formats.  Exit codes:
0 success, 1 verification failure, 2 config error, 3 dataset I/O error,
4 unknown fixture.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import fixtures
from .augment import AuxParams, augmented_objective, original_objective
from .autodiff import finite_diff_gradient
from .config import (
    RunConfig,
    build_criterion,
    build_dataset,
    build_model,
    build_monitor,
    build_optimizer,
    build_problem,
    build_reduction,
    config_to_text,
    load_config,
)
from .errors import ConfigError, DataError, UnknownFixture
from .oracles import (
    grid_global_min,
    gradient_factorization,
    per_sample_gradient_check,
    pgb_check,
    verify_local_min,
)
from .optimize import multi_seed_experiment

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_FIXTURE = 4

VERIFY_KINDS = ("grad", "stationary-a", "local-min", "pgb", "realizable", "factorization")


def _fmt(x: float) -> str:
    return repr(float(x))


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def prepare_out_dir(out: str | None, command: str, cfg_text: str) -> Path:
    """One directory per invocation: config hash + timestamp, plus a
    ``latest`` pointer; an explicit --out path wins."""
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        return path
    root = Path("runs")
    root.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256(cfg_text.encode("utf-8")).hexdigest()[:8]
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = root / f"{command}-{digest}-{stamp}"
    suffix = 0
    while path.exists():
        suffix += 1
        path = root / f"{command}-{digest}-{stamp}-{suffix}"
    path.mkdir(parents=True)
    (root / "latest").write_text(path.name + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    problem = build_problem(cfg)  # may raise DataError
    opt = build_optimizer(cfg)
    mon = build_monitor(cfg)
    out = prepare_out_dir(args.out, "train", config_to_text(cfg))
    base_seed = cfg.run.base_seed if args.seed is None else args.seed

    summary = multi_seed_experiment(
        problem,
        cfg.run.seeds,
        opt,
        mon,
        variants=cfg.run.variants,
        base_seed=base_seed,
        jobs=args.jobs,
    )

    with (out / "runrecords.jsonl").open("w", encoding="utf-8") as fh:
        for rec in summary.records:
            fh.write(_dump(rec.to_json_dict()) + "\n")

    traj_dir = out / "trajectories"
    traj_dir.mkdir(exist_ok=True)
    for rec in summary.records:
        lines = ["iter,objective,grad_norm,aux_norm"]
        for s in rec.samples:
            lines.append(
                f"{s.iteration},{_fmt(s.objective)},{_fmt(s.grad_norm)},{_fmt(s.aux_norm)}"
            )
        (traj_dir / f"{rec.variant}-{rec.seed}.csv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )

    cutoff = cfg.run.success_cutoff
    all_losses = [r.final_loss for r in summary.runs]
    hi = max(all_losses) if all_losses else 1.0
    edges = np.linspace(0.0, max(hi, 1e-6) * 1.02, 21)
    hist_lines = ["variant,bin_left,bin_right,count"]
    variant_stats = {}
    for variant in summary.variants:
        losses = summary.final_losses(variant)
        counts = summary.histogram(variant, edges)
        for left, right, count in zip(edges[:-1], edges[1:], counts):
            hist_lines.append(f"{variant},{_fmt(left)},{_fmt(right)},{count}")
        variant_stats[variant] = {
            "runs": len(losses),
            "mean_final_loss": float(np.mean(losses)),
            "median_final_loss": float(np.median(losses)),
            "min_final_loss": float(np.min(losses)),
            "max_final_loss": float(np.max(losses)),
            "fraction_below_cutoff": summary.fraction_below(variant, cutoff),
            "restarts": sum(r.restarts for r in summary.runs if r.variant == variant),
            "terminations": {
                t: sum(
                    1 for r in summary.runs if r.variant == variant and r.termination == t
                )
                for t in sorted({r.termination for r in summary.runs})
            },
        }
    (out / "histograms.csv").write_text("\n".join(hist_lines) + "\n", encoding="utf-8")
    summary_doc = {
        "n_seeds": summary.n_seeds,
        "success_cutoff": cutoff,
        "variants": variant_stats,
        "metadata": summary.metadata,
        "runs": [
            {
                "variant": r.variant,
                "seed": r.seed,
                "final_loss": r.final_loss,
                "termination": r.termination,
                "restarts": r.restarts,
                "iterations": r.iterations,
            }
            for r in summary.runs
        ],
    }
    (out / "summary.json").write_text(_dump(summary_doc) + "\n", encoding="utf-8")

    if not args.no_plot:
        from .reports import render_histograms, render_trajectories

        render_histograms(summary, out / "histograms.png", cutoff=cutoff)
        monitor_recs = [r for r in summary.records if r.variant != "original"]
        render_trajectories(monitor_recs, out / "trajectories.png")

    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _load_records(path: str | None) -> list[dict]:
    if path is None:
        raise ConfigError("this check needs --runs pointing at runrecords.jsonl")
    p = Path(path)
    try:
        lines = p.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read records {p}: {exc}") from exc
    return [json.loads(ln) for ln in lines if ln.strip()]


def _verify_grad(cfg: RunConfig) -> dict:
    model = build_model(cfg)
    criterion = build_criterion(cfg)
    data = build_dataset(cfg)
    reduction = build_reduction(cfg)
    progs = [
        original_objective(model, criterion, data, reduction),
        augmented_objective(model, criterion, data, cfg.augment.lam, reduction),
    ]
    rng = np.random.default_rng(cfg.run.base_seed)
    worst_rel, worst_abs = 0.0, 0.0
    for prog in progs:
        for _ in range(25):
            p = rng.uniform(-2.0, 2.0, prog.dim)
            value, rev = prog.value_and_gradient(p)
            # step scaled to the value magnitude keeps cancellation noise
            # below the near-zero tolerance
            h = 1e-6 * max(1.0, abs(value)) ** (1.0 / 3.0)
            fd = finite_diff_gradient(prog, p, h=h).values
            err = np.abs(rev - fd)
            small = np.abs(rev) < 1e-3
            if np.any(small):
                worst_abs = max(worst_abs, float(np.max(err[small])))
            if np.any(~small):
                worst_rel = max(
                    worst_rel, float(np.max(err[~small] / np.abs(rev[~small])))
                )
    passed = worst_rel < 1e-4 and worst_abs < 1e-7
    return {
        "check": "grad",
        "passed": passed,
        "max_relative_error": worst_rel,
        "max_absolute_error_near_zero": worst_abs,
    }


def _aux_from_record(rec: dict, lam: float) -> AuxParams | None:
    seg = rec["segments"]
    if "a" not in seg:
        return None
    a = np.asarray(seg["a"])
    b = np.asarray(seg["b"])
    w_flat = np.asarray(seg["W"])
    d_y = a.shape[0]
    d_x = w_flat.shape[0] // d_y if d_y else 0
    return AuxParams(a, b, w_flat.reshape(d_x, d_y, order="F"), lam)


def _verify_stationary_a(cfg: RunConfig, records: list[dict]) -> dict:
    model = build_model(cfg)
    criterion = build_criterion(cfg)
    data = build_dataset(cfg)
    reduction = build_reduction(cfg)
    prog = augmented_objective(model, criterion, data, cfg.augment.lam, reduction)
    checked, max_a = 0, 0.0
    for rec in records:
        if rec["termination"] != "stationary" or "a" not in rec["segments"]:
            continue
        checked += 1
        max_a = max(max_a, float(np.max(np.abs(rec["segments"]["a"]))))
    # the algebraic identity behind the vanishing amplitudes, at random points
    rng = np.random.default_rng(cfg.run.base_seed)
    worst_identity = 0.0
    lam = cfg.augment.lam
    d_y = criterion.d_y
    for _ in range(100):
        p = rng.uniform(-1.0, 1.0, prog.dim)
        g = prog.gradient(p)
        a = p[model.n_params : model.n_params + d_y]
        resid = np.abs(a * g.segment("a") - g.segment("b") - 2 * lam * a * a)
        worst_identity = max(worst_identity, float(np.max(resid)))
    passed = checked > 0 and max_a <= 1e-4 and worst_identity <= 1e-9
    return {
        "check": "stationary-a",
        "passed": passed,
        "stationary_runs_checked": checked,
        "max_abs_a": max_a,
        "max_identity_residual": worst_identity,
    }


def _verify_local_min(cfg: RunConfig, records: list[dict]) -> dict:
    model = build_model(cfg)
    criterion = build_criterion(cfg)
    data = build_dataset(cfg)
    reduction = build_reduction(cfg)
    prog = augmented_objective(model, criterion, data, cfg.augment.lam, reduction)
    verdicts = []
    for rec in records:
        if rec["termination"] != "stationary" or "a" not in rec["segments"]:
            continue
        seg = rec["segments"]
        point = np.concatenate([seg["theta"], seg["a"], seg["b"], seg["W"]])
        v = verify_local_min(
            prog, point, cfg.verify.radius, cfg.verify.samples, seed=cfg.run.base_seed
        )
        verdicts.append(v)
    passed = bool(verdicts) and all(v.passed for v in verdicts)
    return {
        "check": "local-min",
        "passed": passed,
        "candidates": len(verdicts),
        "verdicts": [v.to_json_dict() for v in verdicts],
    }


def _verify_pgb(cfg: RunConfig, args, records: list[dict] | None) -> dict:
    if args.fixture:
        ex = fixtures.get_example(args.fixture)
        d_x = ex.dataset.d_x
        aux = AuxParams(
            np.zeros(1), np.zeros(1), np.zeros((d_x, 1)), cfg.augment.lam
        )
        v = pgb_check(
            ex.outputs, ex.criterion, ex.dataset, aux, eps_list=cfg.verify.eps,
            seed=cfg.run.base_seed,
        )
        return {"check": "pgb", "fixture": args.fixture, "passed": v.passed,
                "verdict": v.to_json_dict()}
    model = build_model(cfg)
    criterion = build_criterion(cfg)
    data = build_dataset(cfg)
    verdicts = []
    for rec in records or []:
        aux = _aux_from_record(rec, cfg.augment.lam)
        if aux is None or float(np.linalg.norm(aux.a)) > 1e-6:
            continue
        theta = np.asarray(rec["segments"]["theta"])
        outputs = np.vstack([model.forward(theta, xi) for xi in data.inputs])
        v = pgb_check(outputs, criterion, data, aux, eps_list=cfg.verify.eps,
                      seed=cfg.run.base_seed)
        verdicts.append(v)
    passed = bool(verdicts) and all(v.passed for v in verdicts)
    return {
        "check": "pgb",
        "passed": passed,
        "candidates": len(verdicts),
        "verdicts": [v.to_json_dict() for v in verdicts],
    }


def _verify_realizable(cfg: RunConfig, records: list[dict]) -> dict:
    model = build_model(cfg)
    criterion = build_criterion(cfg)
    data = build_dataset(cfg)
    verdicts = []
    for rec in records:
        if rec["termination"] != "stationary":
            continue
        theta = np.asarray(rec["segments"]["theta"])
        verdicts.append(per_sample_gradient_check(model, criterion, data, theta))
    passed = bool(verdicts) and all(v.passed for v in verdicts)
    return {
        "check": "realizable",
        "passed": passed,
        "candidates": len(verdicts),
        "verdicts": [v.to_json_dict() for v in verdicts],
    }


def _verify_factorization(cfg: RunConfig, args, records: list[dict] | None) -> dict:
    if args.fixture == "a-zero":
        fx = fixtures.a_zero_fixture(cfg.augment.lam)
        return {"check": "factorization", "fixture": "a-zero",
                "passed": fx.report.passed, "verdict": fx.report.to_json_dict()}
    if args.fixture == "a-nonzero":
        fx = fixtures.a_nonzero_fixture()
        return {"check": "factorization", "fixture": "a-nonzero",
                "passed": fx.report.passed, "verdict": fx.report.to_json_dict()}
    model = build_model(cfg)
    criterion = build_criterion(cfg)
    data = build_dataset(cfg)
    reports = []
    passed_all = True
    for rec in records or []:
        if rec["termination"] != "stationary":
            continue
        theta = np.asarray(rec["segments"]["theta"])
        # check the gradient the run actually drove to zero: r at f for
        # plain training, r at f + g when neurons were attached
        aux = _aux_from_record(rec, cfg.augment.lam)
        rep = gradient_factorization(model, criterion, data, theta, aux)
        ok = rep.norm_ar <= 1e-8
        passed_all = passed_all and ok
        reports.append({"norm_ar": rep.norm_ar,
                        "relative_null_residual": rep.relative_null_residual,
                        "passed": ok})
    return {
        "check": "factorization",
        "passed": bool(reports) and passed_all,
        "candidates": len(reports),
        "reports": reports,
    }


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    records = None
    if args.runs:
        records = _load_records(args.runs)
    if args.what == "grad":
        result = _verify_grad(cfg)
    elif args.what == "stationary-a":
        result = _verify_stationary_a(cfg, records or _load_records(args.runs))
    elif args.what == "local-min":
        result = _verify_local_min(cfg, records or _load_records(args.runs))
    elif args.what == "pgb":
        result = _verify_pgb(cfg, args, records)
    elif args.what == "realizable":
        result = _verify_realizable(cfg, records or _load_records(args.runs))
    else:
        result = _verify_factorization(cfg, args, records)
    print(_dump(result))
    return EXIT_OK if result["passed"] else EXIT_VERIFY_FAILED


# ---------------------------------------------------------------------------
# example / landscape / oracle


def cmd_example(args) -> int:
    names = fixtures.EXAMPLE_NAMES if args.name == "all" else (args.name,)
    ladder = tuple(args.eps) if args.eps else fixtures.EPS_LADDER
    reports = [fixtures.run_example(name, ladder, lam=args.lam) for name in names]
    doc = [r.to_json_dict() for r in reports]
    print(_dump(doc))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "examples.json").write_text(_dump(doc) + "\n", encoding="utf-8")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY_FAILED


def cmd_landscape(args) -> int:
    cfg = load_config(args.config)
    out = prepare_out_dir(args.out, "landscape", config_to_text(cfg))
    grid = fixtures.landscape_grid(
        fixture=cfg.landscape.fixture,
        theta_range=cfg.landscape.theta_range,
        b_range=cfg.landscape.b_range,
        n_theta=cfg.landscape.n_theta,
        n_b=cfg.landscape.n_b,
        lam=cfg.augment.lam,
        jobs=args.jobs,
    )
    lines = ["theta,b,value"]
    for theta, b, value in grid.rows:
        lines.append(f"{_fmt(theta)},{_fmt(b)},{_fmt(value)}")
    (out / "landscape.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "landscape_meta.json").write_text(
        _dump(grid.metadata) + "\n", encoding="utf-8"
    )
    if not args.no_plot:
        from .reports import render_landscape

        render_landscape(grid, out / "landscape.png")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    model = build_model(cfg)
    criterion = build_criterion(cfg)
    data = build_dataset(cfg)
    reduction = build_reduction(cfg)
    prog = original_objective(model, criterion, data, reduction)
    bounds = [tuple(cfg.verify.theta_bounds)] * prog.dim
    argmin, vmin = grid_global_min(prog, bounds, cfg.verify.grid_resolution)
    doc = {
        "argmin": [float(v) for v in argmin],
        "min_value": float(vmin),
        "resolution": cfg.verify.grid_resolution,
        "bounds": [list(b) for b in bounds],
    }
    print(_dump(doc))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "oracle.json").write_text(_dump(doc) + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="auxlab",
        description="train, verify, and chart added-neuron objective transformations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="multi-seed training experiment")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default=None)
    p_train.add_argument("--jobs", type=int, default=1)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--no-plot", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_verify = sub.add_parser("verify", help="run a verification oracle")
    p_verify.add_argument("what", choices=VERIFY_KINDS)
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--runs", default=None, help="runrecords.jsonl from train")
    p_verify.add_argument("--fixture", default=None, help="named analytic fixture")
    p_verify.set_defaults(func=cmd_verify)

    p_example = sub.add_parser("example", help="closed-form example regression")
    p_example.add_argument("name")
    p_example.add_argument("--eps", type=float, nargs="+", default=None)
    p_example.add_argument("--lam", type=float, default=fixtures.DEFAULT_LAMBDA)
    p_example.add_argument("--out", default=None)
    p_example.set_defaults(func=cmd_example)

    p_land = sub.add_parser("landscape", help="inner-minimized (theta, b) grid")
    p_land.add_argument("--config", required=True)
    p_land.add_argument("--out", default=None)
    p_land.add_argument("--jobs", type=int, default=1)
    p_land.add_argument("--no-plot", action="store_true")
    p_land.set_defaults(func=cmd_landscape)

    p_oracle = sub.add_parser("oracle", help="brute-force grid global minimum")
    p_oracle.add_argument("--config", required=True)
    p_oracle.add_argument("--out", default=None)
    p_oracle.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except UnknownFixture as exc:
        print(f"unknown fixture: {exc}", file=sys.stderr)
        return EXIT_FIXTURE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
