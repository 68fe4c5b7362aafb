"""Command-line interface: experiment sweeps, bound reports, and verification.

Subcommands:

* ``run``     teacher-student sweep over every (n, activation, depth) cell,
              writing per-trial and aggregate CSVs plus run metadata.
* ``bounds``  closed-form bound report for each (depth, n) pair in the grid.
* ``verify``  randomized property suites: bound audit, finite-difference
              derivative checks, Green-identity checks.
* ``datagen`` emit one synthetic dataset (CSV) and its teacher (JSON).

Every artifact is a deterministic function of the config file contents and
the master seed.  Seeds are derived by feeding
``(master_seed, stream_tag, activation_code, depth, n, repeat)`` tuples
into ``numpy.random.SeedSequence``; the per-trial seed recorded in the CSV
is the first 64-bit word of that sequence.

Exit codes: 0 success; 1 usage or config error; 2 verification failure;
3 every repeat of some experiment cell diverged.
"""

from __future__ import annotations

import argparse
import dataclasses
import functools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .bounds import (
    Architecture,
    BoundInputs,
    bound_report,
    verify_bounds,
)
from .datagen import (
    DataSpec,
    TeacherSpec,
    make_teacher,
    sample_truncated_normal,
    synthesize,
    write_dataset_csv,
)
from .evaluate import (
    finite_diff_grad_params,
    finite_diff_gradient,
    finite_diff_laplacian,
    green_identity_check,
    l2_gradient_error,
    l2_prediction_error,
)
from .net import (
    Activation,
    Network,
    forward,
    forward_batch,
    grad_input,
    grad_params,
    laplacian_input,
    load_network,
    save_network,
)
from .sparsity import TrainConfig, TrainingDivergenceError, param_l1_norm, train

__all__ = [
    "AggregateRow",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentOutcome",
    "RadiusRule",
    "TrainTemplate",
    "TrialResult",
    "VerifyConfig",
    "config_to_dict",
    "load_config",
    "main",
    "report_bounds",
    "run_experiment",
    "run_verification",
]


class ConfigError(ValueError):
    """Invalid or malformed configuration."""


@dataclass(frozen=True)
class TrainTemplate:
    """Trainer settings shared by every trial (radius and seed are derived
    per trial)."""

    step_size: float = 0.05
    iterations: int = 1000
    batch_size: object = "full"


@dataclass(frozen=True)
class RadiusRule:
    """Training radius: either an absolute value or a multiple of the
    teacher's L1 norm."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("absolute", "teacher_multiple"):
            raise ConfigError(f"unknown radius rule kind {self.kind!r}")
        if not np.isfinite(self.value) or self.value <= 0.0:
            raise ConfigError("radius rule value must be positive and finite")

    def radius_for(self, teacher_l1: float) -> float:
        if self.kind == "absolute":
            return self.value
        return self.value * teacher_l1


@dataclass(frozen=True)
class VerifyConfig:
    """Settings for the ``verify`` subcommand."""

    trials: int = 1000
    radius: float = 5.0
    depths: tuple = (2, 3, 4)
    dims: tuple = (5, 100)
    hidden: int = 10
    green_m: int = 1_000_000
    green_pairs: int = 2
    fd_grad_step: float = 1e-4
    fd_lap_step: float = 1e-3
    fd_grad_tol: float = 1e-5
    fd_lap_tol: float = 1e-4
    green_tol: float = 0.05
    slack: float = 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    """Full sweep definition; every field has a default."""

    d: int = 100
    s: int = 5
    h: int = 10
    data: DataSpec = DataSpec()
    train: TrainTemplate = TrainTemplate()
    n_grid: tuple = (50, 60, 70, 80, 90, 100)
    n_test: int = 10_000
    repeats: int = 100
    activations: tuple = (Activation.SOFTPLUS, Activation.RELU)
    depths: tuple = (2, 3)
    radius_rule: RadiusRule = RadiusRule("teacher_multiple", 1.1)
    master_seed: int = 0
    b0: float = 1.0
    b1_exponent: int = 1
    verify: VerifyConfig = VerifyConfig()

    def __post_init__(self):
        if int(self.d) < 1 or int(self.h) < 1:
            raise ConfigError("teacher d and h must be positive")
        if not 1 <= int(self.s) <= int(self.d):
            raise ConfigError("teacher sparsity s must satisfy 1 <= s <= d")
        if not self.n_grid:
            raise ConfigError("n_grid must be non-empty")
        if list(self.n_grid) != sorted(set(self.n_grid)):
            raise ConfigError("n_grid must be strictly ascending")
        if any(int(n) < 1 for n in self.n_grid):
            raise ConfigError("n_grid entries must be positive")
        if int(self.repeats) < 1:
            raise ConfigError("repeats must be at least 1")
        if int(self.n_test) < 1:
            raise ConfigError("n_test must be at least 1")
        if not self.activations:
            raise ConfigError("activations must be non-empty")
        if not self.depths or any(int(L) < 2 for L in self.depths):
            raise ConfigError("depths must be non-empty with every L >= 2")
        if self.b1_exponent not in (1, 2):
            raise ConfigError("b1_exponent must be 1 or 2")
        if not np.isfinite(self.b0) or self.b0 < 0.0:
            raise ConfigError("b0 must be non-negative and finite")
        if int(self.master_seed) < 0:
            raise ConfigError("master_seed must be non-negative")


# -- config file handling -----------------------------------------------------


def _take(obj: dict, section: str, allowed: dict):
    """Strict key check: unknown keys are config errors, not typos to ignore."""
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {section}: {', '.join(sorted(unknown))}"
        )
    merged = dict(allowed)
    merged.update(obj)
    return merged


def _parse_radius_rule(obj) -> RadiusRule:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ConfigError(
            'radius_rule must be {"absolute": r} or {"teacher_multiplier": m}'
        )
    ((key, value),) = obj.items()
    if key == "absolute":
        return RadiusRule("absolute", float(value))
    if key == "teacher_multiplier":
        return RadiusRule("teacher_multiple", float(value))
    raise ConfigError(f"unknown radius_rule key {key!r}")


def _parse_activations(values) -> tuple:
    acts = []
    for v in values:
        try:
            acts.append(Activation(v))
        except ValueError:
            raise ConfigError(f"unknown activation {v!r}") from None
    return tuple(acts)


def load_config(path=None) -> ExperimentConfig:
    """Load a JSON config file; ``None`` gives the built-in defaults.

    Unknown keys anywhere in the document are rejected.
    """
    if path is None:
        raw = {}
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")

    top = _take(raw, "config", {
        "teacher": {}, "data": {}, "train": {}, "n_grid": [50, 60, 70, 80, 90, 100],
        "n_test": 10_000, "repeats": 100, "activations": ["softplus", "relu"],
        "depths": [2, 3], "radius_rule": {"teacher_multiplier": 1.1},
        "master_seed": 0, "b0": 1.0, "b1_exponent": 1, "verify": {},
    })
    teacher = _take(top["teacher"], "teacher", {"d": 100, "s": 5, "h": 10})
    data = _take(top["data"], "data", {
        "x_std": 1.0, "noise_std": 0.1, "cutoff_factor": 10.0, "mean": 0.0,
    })
    train = _take(top["train"], "train", {
        "step_size": 0.05, "iterations": 1000, "batch_size": "full",
    })
    verify = _take(top["verify"], "verify", {
        "trials": 1000, "radius": 5.0, "depths": [2, 3, 4], "dims": [5, 100],
        "hidden": 10, "green_m": 1_000_000, "green_pairs": 2,
        "fd_grad_step": 1e-4, "fd_lap_step": 1e-3,
        "fd_grad_tol": 1e-5, "fd_lap_tol": 1e-4,
        "green_tol": 0.05, "slack": 1e-9,
    })
    batch = train["batch_size"]
    if batch != "full":
        batch = int(batch)
    try:
        return ExperimentConfig(
            d=int(teacher["d"]),
            s=int(teacher["s"]),
            h=int(teacher["h"]),
            data=DataSpec(
                x_std=float(data["x_std"]),
                noise_std=float(data["noise_std"]),
                cutoff_factor=float(data["cutoff_factor"]),
                mean=float(data["mean"]),
            ),
            train=TrainTemplate(
                step_size=float(train["step_size"]),
                iterations=int(train["iterations"]),
                batch_size=batch,
            ),
            n_grid=tuple(int(n) for n in top["n_grid"]),
            n_test=int(top["n_test"]),
            repeats=int(top["repeats"]),
            activations=_parse_activations(top["activations"]),
            depths=tuple(int(L) for L in top["depths"]),
            radius_rule=_parse_radius_rule(top["radius_rule"]),
            master_seed=int(top["master_seed"]),
            b0=float(top["b0"]),
            b1_exponent=int(top["b1_exponent"]),
            verify=VerifyConfig(
                trials=int(verify["trials"]),
                radius=float(verify["radius"]),
                depths=tuple(int(L) for L in verify["depths"]),
                dims=tuple(int(d) for d in verify["dims"]),
                hidden=int(verify["hidden"]),
                green_m=int(verify["green_m"]),
                green_pairs=int(verify["green_pairs"]),
                fd_grad_step=float(verify["fd_grad_step"]),
                fd_lap_step=float(verify["fd_lap_step"]),
                fd_grad_tol=float(verify["fd_grad_tol"]),
                fd_lap_tol=float(verify["fd_lap_tol"]),
                green_tol=float(verify["green_tol"]),
                slack=float(verify["slack"]),
            ),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical JSON-ready echo of a config (used in run metadata)."""
    rule_key = "absolute" if cfg.radius_rule.kind == "absolute" else "teacher_multiplier"
    return {
        "teacher": {"d": cfg.d, "s": cfg.s, "h": cfg.h},
        "data": {
            "x_std": cfg.data.x_std, "noise_std": cfg.data.noise_std,
            "cutoff_factor": cfg.data.cutoff_factor, "mean": cfg.data.mean,
        },
        "train": {
            "step_size": cfg.train.step_size, "iterations": cfg.train.iterations,
            "batch_size": cfg.train.batch_size,
        },
        "n_grid": list(cfg.n_grid),
        "n_test": cfg.n_test,
        "repeats": cfg.repeats,
        "activations": [a.value for a in cfg.activations],
        "depths": list(cfg.depths),
        "radius_rule": {rule_key: cfg.radius_rule.value},
        "master_seed": cfg.master_seed,
        "b0": cfg.b0,
        "b1_exponent": cfg.b1_exponent,
        "verify": {
            "trials": cfg.verify.trials, "radius": cfg.verify.radius,
            "depths": list(cfg.verify.depths), "dims": list(cfg.verify.dims),
            "hidden": cfg.verify.hidden, "green_m": cfg.verify.green_m,
            "green_pairs": cfg.verify.green_pairs,
            "fd_grad_step": cfg.verify.fd_grad_step,
            "fd_lap_step": cfg.verify.fd_lap_step,
            "fd_grad_tol": cfg.verify.fd_grad_tol,
            "fd_lap_tol": cfg.verify.fd_lap_tol,
            "green_tol": cfg.verify.green_tol, "slack": cfg.verify.slack,
        },
    }


# -- seeding ------------------------------------------------------------------
#
# Stream tags keep independent uses of the master seed apart:
#   0 teacher weights (per depth), 1 shared test set (per depth),
#   2 trials, 3 x_inf_sq estimation, 4 b0 estimation, 5 verification suites.

_ACT_CODE = {Activation.SOFTPLUS: 0, Activation.RELU: 1}


def _seed_seq(*entropy) -> np.random.SeedSequence:
    return np.random.SeedSequence(tuple(int(e) for e in entropy))


def _seed_u64(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0])


# -- experiment sweep ---------------------------------------------------------


@dataclass(frozen=True)
class TrialResult:
    n: int
    repeat_index: int
    activation: str
    L: int
    seed: int
    pred_l2: float
    grad_l2: float
    final_train_loss: float
    l1_norm_final: float

    @property
    def diverged(self) -> bool:
        return math.isnan(self.final_train_loss)


@dataclass(frozen=True)
class AggregateRow:
    n: int
    activation: str
    L: int
    pred_l2_mean: float
    pred_l2_std: float
    grad_l2_mean: float
    grad_l2_std: float


@dataclass(frozen=True)
class ExperimentOutcome:
    trials: tuple
    aggregates: tuple
    metadata: dict
    all_diverged_cells: tuple


@functools.lru_cache(maxsize=32)
def _cell_data(cfg: ExperimentConfig, L: int, act: Activation):
    """Teacher, shared test set and training radius for one (depth,
    activation) cell.

    The weight draw and the test set depend only on the depth, so both
    activations at a given depth share weights and test inputs; the radius
    (a function of the teacher's L1 norm) then matches across activations
    too.  Cached per process."""
    spec = TeacherSpec(
        d=cfg.d, s=cfg.s, L=L, h=cfg.h,
        seed=_seed_u64(_seed_seq(cfg.master_seed, 0, L)),
    )
    teacher = make_teacher(spec, activation=act)
    rng = np.random.default_rng(_seed_seq(cfg.master_seed, 1, L))
    X_test = sample_truncated_normal(
        cfg.data.mean, cfg.data.x_std, cfg.data.cutoff_factor, rng,
        size=(cfg.n_test, cfg.d),
    )
    teacher_l1 = param_l1_norm(teacher)
    return teacher, X_test, cfg.radius_rule.radius_for(teacher_l1), spec


def _run_trial(task) -> TrialResult:
    cfg, L, act_value, n, repeat = task
    act = Activation(act_value)
    teacher, X_test, radius, spec = _cell_data(cfg, L, act)
    ss = _seed_seq(cfg.master_seed, 2, _ACT_CODE[act], L, n, repeat)
    seed = _seed_u64(ss)
    data_ss, train_ss = ss.spawn(2)
    dataset = synthesize(
        teacher, n, cfg.data, np.random.default_rng(data_ss),
        teacher_spec=spec, seed=seed,
    )
    arch = Architecture.mlp(cfg.d, cfg.h, L, act)
    tc = TrainConfig(
        radius=radius,
        step_size=cfg.train.step_size,
        iterations=cfg.train.iterations,
        batch_size=cfg.train.batch_size,
        seed=_seed_u64(train_ss),
    )
    try:
        model = train(dataset, arch, tc)
    except TrainingDivergenceError:
        nan = float("nan")
        return TrialResult(n, repeat, act.value, L, seed, nan, nan, nan, nan)
    pred = l2_prediction_error(model, teacher, X_test).value
    grad = l2_gradient_error(model, teacher, X_test).value
    resid = forward_batch(model, dataset.X) - dataset.y
    final_loss = float(resid @ resid) / dataset.n
    return TrialResult(
        n, repeat, act.value, L, seed, pred, grad, final_loss,
        param_l1_norm(model),
    )


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentOutcome:
    """Run every (n, activation, depth, repeat) trial of the sweep.

    Trials are independent; with ``jobs > 1`` they are distributed over a
    process pool.  Results are ordered by trial coordinates regardless of
    completion order, so the output is identical for any ``jobs``.
    """
    tasks = [
        (cfg, L, act.value, n, repeat)
        for n in cfg.n_grid
        for act in cfg.activations
        for L in cfg.depths
        for repeat in range(cfg.repeats)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk = max(1, len(tasks) // (jobs * 8))
            trials = tuple(pool.map(_run_trial, tasks, chunksize=chunk))
    else:
        trials = tuple(_run_trial(task) for task in tasks)

    aggregates = []
    all_diverged = []
    by_cell = {}
    for t in trials:
        by_cell.setdefault((t.n, t.activation, t.L), []).append(t)
    for n in cfg.n_grid:
        for act in cfg.activations:
            for L in cfg.depths:
                group = by_cell[(n, act.value, L)]
                pred = np.array([t.pred_l2 for t in group])
                grad = np.array([t.grad_l2 for t in group])
                ok = ~np.isnan(pred)
                if not ok.any():
                    all_diverged.append((n, act.value, L))
                    nan = float("nan")
                    aggregates.append(AggregateRow(n, act.value, L, nan, nan, nan, nan))
                    continue
                aggregates.append(AggregateRow(
                    n, act.value, L,
                    float(pred[ok].mean()), float(pred[ok].std()),
                    float(grad[ok].mean()), float(grad[ok].std()),
                ))

    teacher_l1 = {}
    radius = {}
    for L in cfg.depths:
        teacher, _, rad, _ = _cell_data(cfg, L, cfg.activations[0])
        teacher_l1[str(L)] = param_l1_norm(teacher)
        radius[str(L)] = rad
    metadata = {
        "package_version": __version__,
        "config": config_to_dict(cfg),
        "teacher_l1_norm": teacher_l1,
        "training_radius": radius,
        "n_trials": len(trials),
        "n_diverged": sum(1 for t in trials if t.diverged),
    }
    return ExperimentOutcome(trials, tuple(aggregates), metadata, tuple(all_diverged))


def trials_to_csv(trials) -> str:
    lines = ["n,repeat,activation,L,seed,pred_l2,grad_l2,final_train_loss,l1_norm_final"]
    for t in trials:
        lines.append(
            "%d,%d,%s,%d,%d,%.17g,%.17g,%.17g,%.17g"
            % (t.n, t.repeat_index, t.activation, t.L, t.seed,
               t.pred_l2, t.grad_l2, t.final_train_loss, t.l1_norm_final)
        )
    return "\n".join(lines) + "\n"


def aggregates_to_csv(rows) -> str:
    lines = ["n,activation,L,pred_l2_mean,pred_l2_std,grad_l2_mean,grad_l2_std"]
    for a in rows:
        lines.append(
            "%d,%s,%d,%.17g,%.17g,%.17g,%.17g"
            % (a.n, a.activation, a.L, a.pred_l2_mean, a.pred_l2_std,
               a.grad_l2_mean, a.grad_l2_std)
        )
    return "\n".join(lines) + "\n"


# -- bound report -------------------------------------------------------------


def _estimate_x_inf_sq(cfg: ExperimentConfig, draws: int = 100_000) -> float:
    """Monte-Carlo estimate of E max_i x_i^2 under the input law."""
    rng = np.random.default_rng(_seed_seq(cfg.master_seed, 3))
    total = 0.0
    remaining = draws
    while remaining > 0:
        take = min(20_000, remaining)
        remaining -= take
        X = sample_truncated_normal(
            cfg.data.mean, cfg.data.x_std, cfg.data.cutoff_factor, rng,
            size=(take, cfg.d),
        )
        total += float((np.abs(X).max(axis=1) ** 2).sum())
    return total / draws


def _estimate_b0(cfg: ExperimentConfig, model: Network) -> float:
    """Empirical loss-bound constant: max |model(x) - y| over a fresh
    synthetic test set drawn against the depth-matched teacher."""
    L = model.depth
    teacher, _, _, spec = _cell_data(cfg, L, model.activation)
    rng = np.random.default_rng(_seed_seq(cfg.master_seed, 4, L))
    ds = synthesize(teacher, cfg.n_test, cfg.data, rng, teacher_spec=spec)
    return float(np.abs(forward_batch(model, ds.X) - ds.y).max())


def report_bounds(cfg: ExperimentConfig, trained: Network = None,
                  b0_override: float = None) -> list:
    """Evaluate the full bound suite for every (depth, n) pair in the grid.

    ``b0`` comes from the override when given, else from ``trained`` (max
    absolute residual on a fresh test set), else from the config constant.
    The radius matches the experiment's radius rule applied to the same
    teacher the sweep would use.
    """
    x_inf_sq = _estimate_x_inf_sq(cfg)
    if b0_override is not None:
        b0, b0_source = float(b0_override), "override"
    elif trained is not None:
        b0, b0_source = _estimate_b0(cfg, trained), "estimated"
    else:
        b0, b0_source = cfg.b0, "config"
    entries = []
    for L in cfg.depths:
        _, _, radius, _ = _cell_data(cfg, L, Activation.SOFTPLUS)
        P = Architecture.mlp(cfg.d, cfg.h, L, Activation.SOFTPLUS).n_params
        for n in cfg.n_grid:
            inputs = BoundInputs(
                r=radius, L=L, P=P, n=n, R=cfg.data.input_bound,
                b0=b0, b1=cfg.data.score_bound, x_inf_sq=x_inf_sq,
            )
            report = bound_report(inputs, cfg.b1_exponent)
            entries.append({
                "L": L,
                "n": n,
                "b0_source": b0_source,
                "inputs": {
                    "r": inputs.r, "L": inputs.L, "P": inputs.P, "n": inputs.n,
                    "R": inputs.R, "b0": inputs.b0, "b1": inputs.b1,
                    "x_inf_sq": inputs.x_inf_sq,
                },
                "report": report.to_dict(),
            })
    return entries


# -- verification suites ------------------------------------------------------


@dataclass(frozen=True)
class SuiteRow:
    suite: str
    trials: int
    violations: int
    worst_ratio: float


def _fd_suite(cfg: ExperimentConfig, arch: Architecture, trials: int, seed):
    """Exact derivatives vs finite differences over random draws.

    Relative error for the two gradients is the worst entry deviation over
    the largest entry magnitude; the Laplacian (a scalar that can pass
    through zero) is measured against ``max(1, |exact|)``.
    """
    v = cfg.verify
    worst = {"grad_params": 0.0, "grad_input": 0.0, "laplacian_input": 0.0}
    bad = {name: 0 for name in worst}
    sizes = arch.layer_sizes
    for stream in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(stream)
        layers = [
            rng.normal(0.0, np.sqrt(2.0 / sizes[l]), size=(sizes[l + 1], sizes[l]))
            for l in range(arch.depth)
        ]
        net = Network(tuple(layers), arch.activation)
        x = sample_truncated_normal(
            cfg.data.mean, cfg.data.x_std, cfg.data.cutoff_factor, rng,
            size=sizes[0],
        )
        trace = forward(net, x)

        exact = grad_params(net, trace)
        approx = finite_diff_grad_params(net, x, v.fd_grad_step)
        num = max(float(np.abs(a - e).max()) for a, e in zip(approx, exact))
        den = max(float(np.abs(e).max()) for e in exact)
        err = num / max(den, 1e-12)
        worst["grad_params"] = max(worst["grad_params"], err)
        bad["grad_params"] += err > v.fd_grad_tol

        exact_g = grad_input(net, trace)
        approx_g = finite_diff_gradient(net, x, v.fd_grad_step)
        err = float(np.abs(approx_g - exact_g).max()) / max(
            float(np.abs(exact_g).max()), 1e-12
        )
        worst["grad_input"] = max(worst["grad_input"], err)
        bad["grad_input"] += err > v.fd_grad_tol

        exact_l = laplacian_input(net, trace)
        approx_l = finite_diff_laplacian(net, x, v.fd_lap_step)
        err = abs(approx_l - exact_l) / max(1.0, abs(exact_l))
        worst["laplacian_input"] = max(worst["laplacian_input"], err)
        bad["laplacian_input"] += err > v.fd_lap_tol

    tols = {
        "grad_params": v.fd_grad_tol,
        "grad_input": v.fd_grad_tol,
        "laplacian_input": v.fd_lap_tol,
    }
    tag = f"L{arch.depth}_d{sizes[0]}"
    return [
        SuiteRow(f"fd_{name}_{tag}", trials, int(bad[name]), worst[name] / tols[name])
        for name in ("grad_params", "grad_input", "laplacian_input")
    ]


def _small_green_net(d: int, rng) -> Network:
    sizes = (d, 6, 1)
    layers = [
        rng.normal(0.0, np.sqrt(2.0 / sizes[l]), size=(sizes[l + 1], sizes[l]))
        for l in range(2)
    ]
    return Network(tuple(layers), Activation.SOFTPLUS)


def run_verification(cfg: ExperimentConfig, bound_scale=None) -> tuple:
    """All property suites; returns ``(rows, ok)``.

    ``worst_ratio`` is uniformly "observed worst value over its allowed
    limit", so any ratio above 1 is a violation regardless of suite.
    """
    v = cfg.verify
    rows = []
    for L in v.depths:
        for d in v.dims:
            arch = Architecture.mlp(d, v.hidden, L, Activation.SOFTPLUS)
            audit = verify_bounds(
                arch, v.radius, v.trials,
                _seed_u64(_seed_seq(cfg.master_seed, 5, 0, L, d)),
                input_sup=cfg.data.input_bound, slack=v.slack,
                bound_scale=bound_scale,
            )
            tag = f"L{L}_d{d}"
            rows.extend(
                SuiteRow(f"bound_{r.bound_name}_{tag}", r.trials, r.violations,
                         r.worst_ratio)
                for r in audit.rows
            )
    for L in v.depths:
        for d in v.dims:
            arch = Architecture.mlp(d, v.hidden, L, Activation.SOFTPLUS)
            rows.extend(_fd_suite(
                cfg, arch, v.trials,
                _seed_u64(_seed_seq(cfg.master_seed, 5, 1, L, d)),
            ))
    for d in (1, 2, 3):
        rng = np.random.default_rng(_seed_seq(cfg.master_seed, 5, 2, d))
        gaps = []
        for _ in range(v.green_pairs):
            f = _small_green_net(d, rng)
            g = _small_green_net(d, rng)
            gaps.append(green_identity_check(f, g, cfg.data, v.green_m, rng).rel_gap)
            gaps.append(green_identity_check(g, f, cfg.data, v.green_m, rng).rel_gap)
        rows.append(SuiteRow(
            f"green_identity_d{d}", len(gaps),
            int(sum(gap > v.green_tol for gap in gaps)),
            max(gaps) / v.green_tol,
        ))
    ok = all(row.violations == 0 for row in rows)
    return rows, ok


def suites_to_csv(rows) -> str:
    lines = ["suite,trials,violations,worst_ratio"]
    for row in rows:
        lines.append(
            "%s,%d,%d,%.17g"
            % (row.suite, row.trials, row.violations, row.worst_ratio)
        )
    return "\n".join(lines) + "\n"


# -- argument parsing and entry point ------------------------------------------


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="l1net",
        description="L1-constrained network experiments, bounds and verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", metavar="PATH", help="JSON config file")
        p.add_argument("--seed", type=int, metavar="U64",
                       help="override the master seed")
        p.add_argument("--out", metavar="DIR", default="results",
                       help="output directory (default: results)")

    p_run = sub.add_parser("run", help="run the experiment sweep")
    add_common(p_run)
    p_run.add_argument("--repeats", type=int, metavar="N",
                       help="override the repeat count")
    p_run.add_argument("--jobs", type=int, metavar="N", default=1,
                       help="parallel worker processes (default: 1)")

    p_bounds = sub.add_parser("bounds", help="emit the closed-form bound report")
    add_common(p_bounds)
    p_bounds.add_argument("--model", metavar="PATH",
                          help="trained network JSON used to estimate b0")
    p_bounds.add_argument("--b0", type=float, metavar="B0",
                          help="override the loss-bound constant b0")

    p_verify = sub.add_parser("verify", help="run the property suites")
    add_common(p_verify)
    p_verify.add_argument("--inject-bound-bug", action="store_true",
                          help=argparse.SUPPRESS)

    p_datagen = sub.add_parser("datagen", help="emit one synthetic dataset")
    add_common(p_datagen)
    p_datagen.add_argument("--n", type=int, metavar="N",
                           help="sample count (default: first n_grid entry)")
    p_datagen.add_argument("--depth", type=int, metavar="L",
                           help="teacher depth (default: first config depth)")
    p_datagen.add_argument("--activation", metavar="KIND",
                           help="teacher activation (default: softplus)")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        updates["master_seed"] = args.seed
    if getattr(args, "repeats", None) is not None:
        if args.repeats < 1:
            raise ConfigError("--repeats must be at least 1")
        updates["repeats"] = args.repeats
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load(args)
    outcome = run_experiment(cfg, jobs=max(1, args.jobs))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "trials.csv"), "w", encoding="ascii") as fh:
        fh.write(trials_to_csv(outcome.trials))
    with open(os.path.join(args.out, "aggregate.csv"), "w", encoding="ascii") as fh:
        fh.write(aggregates_to_csv(outcome.aggregates))
    with open(os.path.join(args.out, "metadata.json"), "w", encoding="ascii") as fh:
        json.dump(outcome.metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(outcome.trials)} trials to {args.out}/trials.csv")
    print(f"wrote {len(outcome.aggregates)} aggregate rows to {args.out}/aggregate.csv")
    if outcome.all_diverged_cells:
        for cell in outcome.all_diverged_cells:
            print(f"all repeats diverged in cell (n={cell[0]}, "
                  f"activation={cell[1]}, L={cell[2]})", file=sys.stderr)
        return 3
    return 0


def _cmd_bounds(args) -> int:
    cfg = _load(args)
    model = load_network(args.model) if args.model else None
    entries = report_bounds(cfg, trained=model, b0_override=args.b0)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bounds.json")
    with open(path, "w", encoding="ascii") as fh:
        json.dump({"reports": entries}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(entries)} bound reports to {path}")
    return 0


def _cmd_verify(args) -> int:
    cfg = _load(args)
    scale = {"grad_l1": 0.5} if args.inject_bound_bug else None
    rows, ok = run_verification(cfg, bound_scale=scale)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "verify.csv")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(suites_to_csv(rows))
    for row in rows:
        status = "ok" if row.violations == 0 else "FAIL"
        print(f"{status:4s} {row.suite}: {row.violations}/{row.trials} violations, "
              f"worst ratio {row.worst_ratio:.3g}")
    print(f"wrote {len(rows)} suite rows to {path}")
    if not ok:
        print("verification FAILED", file=sys.stderr)
        return 2
    print("verification passed")
    return 0


def _cmd_datagen(args) -> int:
    cfg = _load(args)
    n = args.n if args.n is not None else cfg.n_grid[0]
    if n < 1:
        raise ConfigError("--n must be at least 1")
    L = args.depth if args.depth is not None else cfg.depths[0]
    if L < 2:
        raise ConfigError("--depth must be at least 2")
    act = Activation.SOFTPLUS
    if args.activation is not None:
        try:
            act = Activation(args.activation)
        except ValueError:
            raise ConfigError(f"unknown activation {args.activation!r}") from None
    teacher, _, _, spec = _cell_data(cfg, L, act)
    ss = _seed_seq(cfg.master_seed, 2, _ACT_CODE[act], L, n, 0)
    data_ss, _ = ss.spawn(2)
    dataset = synthesize(
        teacher, n, cfg.data, np.random.default_rng(data_ss),
        teacher_spec=spec, seed=_seed_u64(ss),
    )
    os.makedirs(args.out, exist_ok=True)
    write_dataset_csv(dataset, os.path.join(args.out, "dataset.csv"))
    save_network(teacher, os.path.join(args.out, "teacher.json"))
    print(f"wrote {n} samples to {args.out}/dataset.csv "
          f"and the teacher to {args.out}/teacher.json")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "bounds": _cmd_bounds,
    "verify": _cmd_verify,
    "datagen": _cmd_datagen,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"l1net: config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
