"""Closed-form capacity and convergence bounds plus a randomized audit.

All bounds are driven by the scalar inputs collected in
:class:`BoundInputs`: the L1 radius ``r``, depth ``L``, parameter count
``P``, sample size ``n``, input sup-norm bound ``R``, loss bound ``b0``,
score bound ``b1`` and an estimate of ``E ||x||_inf^2``.
:func:`verify_bounds` hammers the pointwise inequalities (parameter
Lipschitz, sup bound, gradient L1 bound, Laplacian bound) with random
networks sampled inside the ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .net import (
    Architecture,
    Network,
    forward,
    grad_input,
    laplacian_input,
)
from .sparsity import project_l1

__all__ = [
    "AuditRow",
    "BoundAudit",
    "BoundInputs",
    "BoundReport",
    "bound_report",
    "c1",
    "derivative_convergence_bound",
    "divergence_bound",
    "grad_l1_bound",
    "lip_l2pn_bound",
    "lipschitz_param_bound",
    "log_factor",
    "model_convergence_bound",
    "rademacher_bound",
    "sup_model_bound",
    "verify_bounds",
]


def _check_depth(L):
    L = int(L)
    if L < 2:
        raise ValueError("L must be at least 2")
    return L


def lipschitz_param_bound(r: float, L: int, x_inf: float) -> float:
    """Lipschitz constant of f(x) in the parameters at a fixed input:
    ``sqrt(L) (r/(L-1))^(L-1) |x|_inf``."""
    L = _check_depth(L)
    return math.sqrt(L) * (r / (L - 1)) ** (L - 1) * x_inf


def lip_l2pn_bound(r: float, L: int, sample_x_inf_rms: float) -> float:
    """Same constant in the empirical L2 metric; ``sample_x_inf_rms`` is
    ``sqrt((1/n) sum_i |x_i|_inf^2)``."""
    L = _check_depth(L)
    return math.sqrt(L) * (r / (L - 1)) ** (L - 1) * sample_x_inf_rms


def sup_model_bound(R: float, r: float, L: int) -> float:
    """``sup |f(x)| <= R (r/L)^L`` over the ball and the input box."""
    L = _check_depth(L)
    return R * (r / L) ** L


def grad_l1_bound(r: float, L: int) -> float:
    """``|grad_x f|_1 <= (r/L)^L`` for any network in the ball."""
    L = _check_depth(L)
    return (r / L) ** L


def divergence_bound(r: float, L: int) -> float:
    """``|lap_x f| <= (L/4)(r/L)^L max_{k in 2..L-1} (r/k)^k``.

    For L = 2 the max runs over an empty set and is taken to be 1, so the
    bound reduces to ``(L/4)(r/L)^L``.
    """
    L = _check_depth(L)
    inner = max(((r / k) ** k for k in range(2, L)), default=1.0)
    return (L / 4.0) * (r / L) ** L * inner


def c1(R: float, r: float, L: int, P: int) -> float:
    """The constant ``R / (6 r L^(3/2) sqrt(2 log P))``."""
    L = _check_depth(L)
    if r <= 0.0:
        raise ValueError("r must be positive")
    if P <= 1:
        raise ValueError("P must exceed 1 (log P must be positive)")
    return R / (6.0 * r * L ** 1.5 * math.sqrt(2.0 * math.log(P)))


@dataclass(frozen=True)
class BoundInputs:
    """Scalar inputs shared by the complexity and convergence bounds."""

    r: float
    L: int
    P: int
    n: int
    R: float
    b0: float
    b1: float
    x_inf_sq: float

    def __post_init__(self):
        if not np.isfinite(self.r) or self.r <= 0.0:
            raise ValueError("r must be positive and finite")
        object.__setattr__(self, "L", _check_depth(self.L))
        if int(self.P) <= 1:
            raise ValueError("P must exceed 1")
        if int(self.n) < 1:
            raise ValueError("n must be a positive integer")
        object.__setattr__(self, "P", int(self.P))
        object.__setattr__(self, "n", int(self.n))
        if not np.isfinite(self.R) or self.R <= 0.0:
            raise ValueError("R must be positive and finite")
        for name in ("b0", "b1", "x_inf_sq"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0.0:
                raise ValueError(f"{name} must be non-negative and finite")


def log_factor(inputs: BoundInputs) -> tuple:
    """The parenthesized factor ``1 + log(c1 sqrt(n)) sqrt(x_inf_sq)``.

    When ``c1 sqrt(n) <= 1`` the log is non-positive and the raw factor can
    dip below 1, which would turn the complexity bound vacuous (or
    negative); it is clamped at 1 in that regime.  Returns
    ``(factor, clamped)``.
    """
    raw = 1.0 + math.log(
        c1(inputs.R, inputs.r, inputs.L, inputs.P) * math.sqrt(inputs.n)
    ) * math.sqrt(inputs.x_inf_sq)
    if raw < 1.0:
        return 1.0, True
    return raw, False


def rademacher_bound(inputs: BoundInputs) -> float:
    """Empirical complexity of the ball:
    ``24 r (r/(L-1))^(L-1) sqrt(2 L log P / n)`` times the log factor."""
    factor, _ = log_factor(inputs)
    r, L = inputs.r, inputs.L
    return (
        24.0 * r * (r / (L - 1)) ** (L - 1)
        * math.sqrt(2.0 * L * math.log(inputs.P) / inputs.n)
        * factor
    )


def model_convergence_bound(inputs: BoundInputs) -> float:
    """Expected excess risk bound: exactly ``4 b0`` times the complexity."""
    return 4.0 * inputs.b0 * rademacher_bound(inputs)


def derivative_convergence_bound(inputs: BoundInputs, b1_exponent: int = 1) -> float:
    """Expected squared-L2 gradient error bound, rate ``n^(-1/4)``.

    Two published variants differ in whether the score bound enters as
    ``(1 + b1)`` or ``(1 + b1^2)``; select with ``b1_exponent``.
    """
    if b1_exponent not in (1, 2):
        raise ValueError("b1_exponent must be 1 or 2")
    r, L = inputs.r, inputs.L
    factor, _ = log_factor(inputs)
    inner_sq = max(((r / k) ** (2 * k) for k in range(2, L)), default=1.0)
    quarter = inputs.n ** -0.25
    term1 = quarter * (r / L) ** (2 * L) * (2.0 + (L * L / 8.0) * inner_sq)
    term2 = (
        48.0 * (1.0 + inputs.b1 ** b1_exponent) * inputs.b0
        * r * (r / (L - 1)) ** (L - 1)
        * math.sqrt(2.0 * L * math.log(inputs.P)) * quarter * factor
    )
    return term1 + term2


@dataclass(frozen=True)
class BoundReport:
    """Every bound evaluated on one set of inputs.

    ``log_factor_clamped`` records whether the complexity log factor was
    clamped at 1 (small-n regime).
    """

    lip_param: float
    lip_l2pn: float
    sup_model: float
    grad_l1: float
    divergence: float
    c1: float
    rademacher: float
    model_convergence: float
    derivative_convergence: float
    log_factor_clamped: bool

    def to_dict(self) -> dict:
        return {
            "lip_param": self.lip_param,
            "lip_l2pn": self.lip_l2pn,
            "sup_model": self.sup_model,
            "grad_l1": self.grad_l1,
            "divergence": self.divergence,
            "c1": self.c1,
            "rademacher": self.rademacher,
            "model_convergence": self.model_convergence,
            "derivative_convergence": self.derivative_convergence,
            "log_factor_clamped": self.log_factor_clamped,
        }


def bound_report(inputs: BoundInputs, b1_exponent: int = 1) -> BoundReport:
    """Evaluate the full suite on one set of inputs.

    The pointwise Lipschitz bound is reported at the worst input
    (``x_inf = R``); the empirical-metric variant uses ``sqrt(x_inf_sq)``
    as the RMS.
    """
    _, clamped = log_factor(inputs)
    return BoundReport(
        lip_param=lipschitz_param_bound(inputs.r, inputs.L, inputs.R),
        lip_l2pn=lip_l2pn_bound(inputs.r, inputs.L, math.sqrt(inputs.x_inf_sq)),
        sup_model=sup_model_bound(inputs.R, inputs.r, inputs.L),
        grad_l1=grad_l1_bound(inputs.r, inputs.L),
        divergence=divergence_bound(inputs.r, inputs.L),
        c1=c1(inputs.R, inputs.r, inputs.L, inputs.P),
        rademacher=rademacher_bound(inputs),
        model_convergence=model_convergence_bound(inputs),
        derivative_convergence=derivative_convergence_bound(inputs, b1_exponent),
        log_factor_clamped=clamped,
    )


# -- randomized audit --------------------------------------------------------


@dataclass(frozen=True)
class AuditRow:
    bound_name: str
    trials: int
    violations: int
    worst_ratio: float


@dataclass(frozen=True)
class BoundAudit:
    rows: tuple

    @property
    def total_violations(self) -> int:
        return int(sum(row.violations for row in self.rows))

    def to_csv(self) -> str:
        lines = ["bound_name,trials,violations,worst_ratio"]
        for row in self.rows:
            lines.append(
                "%s,%d,%d,%.17g"
                % (row.bound_name, row.trials, row.violations, row.worst_ratio)
            )
        return "\n".join(lines) + "\n"


def _sample_ball_net(arch: Architecture, r: float, rng) -> Network:
    """Layerwise N(0, 2/fan_in) draw projected onto the L1 ball."""
    sizes = arch.layer_sizes
    parts = []
    for l in range(arch.depth):
        fan_in = sizes[l]
        parts.append(
            rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(sizes[l + 1], fan_in)).ravel()
        )
    flat = project_l1(np.concatenate(parts), r)
    layers = []
    offset = 0
    for l in range(arch.depth):
        size = sizes[l + 1] * sizes[l]
        layers.append(flat[offset:offset + size].reshape(sizes[l + 1], sizes[l]))
        offset += size
    return Network(tuple(layers), arch.activation)


def _zero_net(arch: Architecture) -> Network:
    sizes = arch.layer_sizes
    return Network(
        tuple(np.zeros((sizes[l + 1], sizes[l])) for l in range(arch.depth)),
        arch.activation,
    )


def _chain_net(arch: Architecture, r: float, x: np.ndarray) -> Network:
    """Near-extremal ball member: mass r/L per layer on a single path.

    Equal mass per layer maximizes the product of layer norms (AM-GM), which
    is exactly the quantity the sup/gradient bounds cap, so these draws push
    the audit ratios toward 1 (relu attains the gradient bound exactly).
    The first weight is sign-aligned with the largest input coordinate to
    keep every preactivation non-negative.
    """
    sizes = arch.layer_sizes
    per_layer = r / arch.depth
    k = int(np.argmax(np.abs(x)))
    layers = []
    for l in range(arch.depth):
        w = np.zeros((sizes[l + 1], sizes[l]))
        if l == 0:
            w[0, k] = per_layer if x[k] >= 0.0 else -per_layer
        else:
            w[0, 0] = per_layer
        layers.append(w)
    return Network(tuple(layers), arch.activation)


def verify_bounds(arch: Architecture, r: float, trials: int, seed: int, *,
                  input_sup: float = 10.0, slack: float = 1e-9,
                  bound_scale=None) -> BoundAudit:
    """Randomized audit of the pointwise inequalities.

    Per trial an input is drawn uniformly from the box
    ``|x|_inf <= input_sup`` and two networks are sampled inside the ball
    (Gaussian draw followed by L1 projection; every eighth trial swaps the
    first one for the near-extremal single-path net so the audit actually
    exercises the tight end of each inequality); then each inequality is
    checked at relative slack ``slack``.  Audited rows: ``lipschitz_param``
    (against the parameter distance of the pair), ``sup_model``, ``grad_l1``
    and ``divergence``.  Trials use per-trial RNG streams spawned from
    ``seed``, so the audit is deterministic and order-independent.

    ``bound_scale`` is test instrumentation: a mapping from bound name to a
    multiplier applied to that bound's right-hand side (used to prove the
    audit can fail).  ``r = 0`` degenerates to all-zero networks whose
    outputs, gradients and Laplacians are exactly zero.
    """
    if int(trials) < 1:
        raise ValueError("trials must be at least 1")
    trials = int(trials)
    scale = dict(bound_scale or {})
    names = ("lipschitz_param", "sup_model", "grad_l1", "divergence")
    violations = {name: 0 for name in names}
    worst = {name: 0.0 for name in names}

    grad_rhs = grad_l1_bound(r, arch.depth) * scale.get("grad_l1", 1.0)
    div_rhs = divergence_bound(r, arch.depth) * scale.get("divergence", 1.0)
    streams = np.random.SeedSequence(seed).spawn(trials)

    def record(name, lhs, rhs):
        ratio = 0.0 if lhs == 0.0 else (lhs / rhs if rhs > 0.0 else math.inf)
        if ratio > worst[name]:
            worst[name] = ratio
        if lhs > rhs * (1.0 + slack):
            violations[name] += 1

    for index, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        x = rng.uniform(-input_sup, input_sup, size=arch.layer_sizes[0])
        x_inf = float(np.max(np.abs(x)))
        if r == 0.0:
            net_a = _zero_net(arch)
            net_b = _zero_net(arch)
        elif index % 8 == 7:
            net_a = _chain_net(arch, r, x)
            net_b = _sample_ball_net(arch, r, rng)
        else:
            net_a = _sample_ball_net(arch, r, rng)
            net_b = _sample_ball_net(arch, r, rng)

        trace_a = forward(net_a, x)
        trace_b = forward(net_b, x)
        param_dist = math.sqrt(
            sum(
                float(((ta - tb) ** 2).sum())
                for ta, tb in zip(net_a.layers, net_b.layers)
            )
        )
        lip_rhs = (
            lipschitz_param_bound(r, arch.depth, x_inf) * param_dist
            * scale.get("lipschitz_param", 1.0)
        )
        record("lipschitz_param", abs(trace_a.output - trace_b.output), lip_rhs)
        record(
            "sup_model",
            abs(trace_a.output),
            sup_model_bound(x_inf, r, arch.depth) * scale.get("sup_model", 1.0),
        )
        record(
            "grad_l1",
            float(np.abs(grad_input(net_a, trace_a)).sum()),
            grad_rhs,
        )
        record("divergence", abs(laplacian_input(net_a, trace_a)), div_rhs)

    rows = tuple(
        AuditRow(name, trials, violations[name], worst[name]) for name in names
    )
    return BoundAudit(rows)
