"""Run configuration: a flat sectioned key-value text format.

Chosen over JSON for hand-editability during experiments: `#` comments,
`[section]` headers, `key = value` lines, UTF-8.  Unknown sections or keys
are rejected; parsing the serialized form reproduces the configuration
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError

VARIANT_NAMES = ("original", "augmented", "monitor")


@dataclass(frozen=True)
class ModelCfg:
    kind: str = "bump_curve"  # bump_curve | bump_slope | mlp
    widths: tuple[int, ...] = ()
    activation: str = "tanh"


@dataclass(frozen=True)
class LossCfg:
    kind: str = "smoothed_hinge"
    p: int = 3
    d_y: int = 1


@dataclass(frozen=True)
class DataCfg:
    fixture: str = "bump-hinge"  # named dataset, or empty with path set
    path: str = ""


@dataclass(frozen=True)
class AugmentCfg:
    lam: float = 0.01
    reduction: str = "mean"


@dataclass(frozen=True)
class OptimizerCfg:
    method: str = "gd"
    lr: float = 0.01
    max_iters: int = 10_000
    grad_tol: float = 1e-8
    batch_size: int = 0  # 0 = full batch
    sample_every: int = 10


@dataclass(frozen=True)
class MonitorCfg:
    action: str = "off"  # off | halt | restart
    threshold: float = 7.0
    max_restarts: int = 3
    redraw_theta: bool = False
    init_scale: float = 0.1
    w_norm: str = "frobenius"


@dataclass(frozen=True)
class RunCfg:
    seeds: int = 1
    base_seed: int = 0
    variants: tuple[str, ...] = VARIANT_NAMES
    theta_init: tuple[float, float] = (0.0, 1.0)
    freeze: tuple[str, ...] = ()
    success_cutoff: float = 0.1


@dataclass(frozen=True)
class LandscapeCfg:
    fixture: str = "bump-hinge"
    theta_range: tuple[float, float] = (0.0, 1.0)
    b_range: tuple[float, float] = (-5.0, 15.0)
    n_theta: int = 200
    n_b: int = 200


@dataclass(frozen=True)
class VerifyCfg:
    eps: tuple[float, ...] = (0.1, 0.01, 0.001)
    radius: float = 0.01
    samples: int = 2000
    grid_resolution: float = 0.001
    theta_bounds: tuple[float, float] = (0.0, 1.0)


@dataclass(frozen=True)
class RunConfig:
    model: ModelCfg = field(default_factory=ModelCfg)
    loss: LossCfg = field(default_factory=LossCfg)
    data: DataCfg = field(default_factory=DataCfg)
    augment: AugmentCfg = field(default_factory=AugmentCfg)
    optimizer: OptimizerCfg = field(default_factory=OptimizerCfg)
    monitor: MonitorCfg = field(default_factory=MonitorCfg)
    run: RunCfg = field(default_factory=RunCfg)
    landscape: LandscapeCfg = field(default_factory=LandscapeCfg)
    verify: VerifyCfg = field(default_factory=VerifyCfg)


# (section, key) -> (attribute, parse, format)
def _f(x: float) -> str:
    return repr(float(x))


def _floats(xs) -> str:
    return ",".join(repr(float(x)) for x in xs)


def _ints(xs) -> str:
    return ",".join(str(int(x)) for x in xs)


def _strs(xs) -> str:
    return ",".join(xs)


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _parse_ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _parse_strs(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "yes", "1"):
        return True
    if s.lower() in ("false", "no", "0"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


_SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {
        "kind": (str, str),
        "widths": (_parse_ints, _ints),
        "activation": (str, str),
    },
    "loss": {
        "kind": (str, str),
        "p": (int, str),
        "d_y": (int, str),
    },
    "data": {
        "fixture": (str, str),
        "path": (str, str),
    },
    "augment": {
        "lam": (float, _f),
        "reduction": (str, str),
    },
    "optimizer": {
        "method": (str, str),
        "lr": (float, _f),
        "max_iters": (int, str),
        "grad_tol": (float, _f),
        "batch_size": (int, str),
        "sample_every": (int, str),
    },
    "monitor": {
        "action": (str, str),
        "threshold": (float, _f),
        "max_restarts": (int, str),
        "redraw_theta": (_parse_bool, lambda b: "true" if b else "false"),
        "init_scale": (float, _f),
        "w_norm": (str, str),
    },
    "run": {
        "seeds": (int, str),
        "base_seed": (int, str),
        "variants": (_parse_strs, _strs),
        "theta_init": (_parse_floats, _floats),
        "freeze": (_parse_strs, _strs),
        "success_cutoff": (float, _f),
    },
    "landscape": {
        "fixture": (str, str),
        "theta_range": (_parse_floats, _floats),
        "b_range": (_parse_floats, _floats),
        "n_theta": (int, str),
        "n_b": (int, str),
    },
    "verify": {
        "eps": (_parse_floats, _floats),
        "radius": (float, _f),
        "samples": (int, str),
        "grid_resolution": (float, _f),
        "theta_bounds": (_parse_floats, _floats),
    },
}


def parse_config(text: str) -> RunConfig:
    """Parse configuration text; unknown sections or keys are errors."""
    sections: dict[str, dict[str, object]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA[current]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{current}]")
        parse, _fmt = _SCHEMA[current][key]
        try:
            sections[current][key] = parse(value)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc

    cfg = RunConfig()
    for section, pairs in sections.items():
        sub = getattr(cfg, section)
        sub = replace(sub, **pairs)
        cfg = replace(cfg, **{section: sub})
    validate_config(cfg)
    return cfg


def config_to_text(cfg: RunConfig) -> str:
    lines = ["# auxlab run configuration"]
    for section, keys in _SCHEMA.items():
        lines.append("")
        lines.append(f"[{section}]")
        sub = getattr(cfg, section)
        for key, (_parse, fmt) in keys.items():
            lines.append(f"{key} = {fmt(getattr(sub, key))}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def validate_config(cfg: RunConfig) -> None:
    if cfg.model.kind not in ("bump_curve", "bump_slope", "mlp"):
        raise ConfigError(f"unknown model kind {cfg.model.kind!r}")
    if cfg.model.kind == "mlp" and len(cfg.model.widths) < 2:
        raise ConfigError("mlp model requires widths")
    if cfg.model.activation not in ("tanh", "relu", "identity"):
        raise ConfigError(f"unknown activation {cfg.model.activation!r}")
    if cfg.loss.kind not in ("squared", "squared_margin", "cross_entropy", "smoothed_hinge"):
        raise ConfigError(f"unknown loss {cfg.loss.kind!r}")
    if cfg.loss.kind == "smoothed_hinge" and cfg.loss.p < 2:
        raise ConfigError("smoothed hinge requires p >= 2")
    if bool(cfg.data.fixture) == bool(cfg.data.path):
        raise ConfigError("data section needs exactly one of fixture or path")
    if cfg.augment.lam <= 0:
        raise ConfigError("lambda must be positive")
    if cfg.augment.reduction not in ("mean", "sum"):
        raise ConfigError(f"unknown reduction {cfg.augment.reduction!r}")
    if cfg.optimizer.method not in ("gd", "adagrad"):
        raise ConfigError(f"unknown optimizer {cfg.optimizer.method!r}")
    if cfg.optimizer.lr <= 0:
        raise ConfigError("learning rate must be positive")
    if cfg.optimizer.max_iters < 1:
        raise ConfigError("max_iters must be at least 1")
    if cfg.monitor.action not in ("off", "halt", "restart"):
        raise ConfigError(f"unknown monitor action {cfg.monitor.action!r}")
    if cfg.monitor.threshold <= 0:
        raise ConfigError("monitor threshold must be positive")
    if cfg.monitor.w_norm not in ("frobenius", "spectral"):
        raise ConfigError(f"unknown W norm {cfg.monitor.w_norm!r}")
    if cfg.run.seeds < 1:
        raise ConfigError("seeds must be at least 1")
    unknown = set(cfg.run.variants) - set(VARIANT_NAMES)
    if unknown:
        raise ConfigError(f"unknown variants {sorted(unknown)}")
    if len(cfg.run.theta_init) != 2 or cfg.run.theta_init[0] > cfg.run.theta_init[1]:
        raise ConfigError("theta_init must be lo,hi with lo <= hi")
    for name, rng in (
        ("theta_range", cfg.landscape.theta_range),
        ("b_range", cfg.landscape.b_range),
        ("theta_bounds", cfg.verify.theta_bounds),
    ):
        if len(rng) != 2 or rng[0] > rng[1]:
            raise ConfigError(f"{name} must be lo,hi with lo <= hi")
    if cfg.landscape.n_theta < 2 or cfg.landscape.n_b < 2:
        raise ConfigError("landscape grid needs at least 2 points per axis")
    if not cfg.verify.eps:
        raise ConfigError("verify.eps must list at least one radius")


# ---------------------------------------------------------------------------
# builders


def build_model(cfg: RunConfig):
    from .models import model_from_config

    return model_from_config(cfg.model.kind, cfg.model.widths, cfg.model.activation)


def build_criterion(cfg: RunConfig):
    from .criteria import LossCriterion

    return LossCriterion(cfg.loss.kind, d_y=cfg.loss.d_y, p=cfg.loss.p)


def build_dataset(cfg: RunConfig):
    from .augment import Dataset
    from .fixtures import named_dataset

    if cfg.data.fixture:
        return named_dataset(cfg.data.fixture)
    return Dataset.from_csv(cfg.data.path)


def build_reduction(cfg: RunConfig):
    from .augment import Reduction

    return Reduction.MEAN if cfg.augment.reduction == "mean" else Reduction.SUM


def build_optimizer(cfg: RunConfig, seed: int | None = None):
    from .optimize import OptimizerConfig

    return OptimizerConfig(
        method=cfg.optimizer.method,
        lr=cfg.optimizer.lr,
        max_iters=cfg.optimizer.max_iters,
        grad_tol=cfg.optimizer.grad_tol,
        seed=cfg.run.base_seed if seed is None else seed,
        batch_size=cfg.optimizer.batch_size or None,
        sample_every=cfg.optimizer.sample_every,
        freeze=cfg.run.freeze,
    )


def build_monitor(cfg: RunConfig):
    from .optimize import MonitorAction, MonitorConfig

    return MonitorConfig(
        action=MonitorAction(cfg.monitor.action),
        threshold=cfg.monitor.threshold,
        max_restarts=cfg.monitor.max_restarts,
        init_scale=cfg.monitor.init_scale,
        redraw_theta=cfg.monitor.redraw_theta,
        theta_init=cfg.run.theta_init,
        w_norm=cfg.monitor.w_norm,
    )


def build_problem(cfg: RunConfig):
    from .optimize import TrainingProblem

    return TrainingProblem(
        model=build_model(cfg),
        criterion=build_criterion(cfg),
        data=build_dataset(cfg),
        lam=cfg.augment.lam,
        reduction=build_reduction(cfg),
        theta_init=cfg.run.theta_init,
        aux_init_scale=cfg.monitor.init_scale,
        use_model_init=cfg.model.kind == "mlp",
    )
