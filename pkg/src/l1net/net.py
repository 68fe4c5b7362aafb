"""Dense feed-forward networks with exact first- and second-order input derivatives.

A network is an immutable stack of weight matrices ``theta_l`` of shape
``(d_l, d_{l-1})`` with a single linear output, evaluated as

    f(x) = theta_L s(theta_{L-1} s( ... s(theta_1 x) ... ))

where ``s`` acts elementwise.  There are no bias terms.  ``forward`` caches
the per-layer activations together with the first and second activation
derivatives in a :class:`ForwardTrace`; the gradient and Laplacian routines
consume that trace and evaluate the closed-form chain rule directly, with
no autodiff tape.

Supported activations:

* ``softplus``: ``s(z) = log(1 + exp(z)) - log 2``, shifted so ``s(0) = 0``.
  Its first derivative is the logistic sigmoid (strictly inside ``(0, 1)``)
  and its second derivative is ``sig(z) (1 - sig(z))`` (inside ``(0, 1/4]``).
* ``relu``: ``s(z) = max(z, 0)`` with the subgradient convention
  ``s'(0) = 0`` and ``s'' = 0`` everywhere, so Laplacians are exactly zero.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

_LOG2 = math.log(2.0)

__all__ = [
    "Activation",
    "Architecture",
    "ForwardTrace",
    "Network",
    "activation_eval",
    "forward",
    "forward_batch",
    "grad_input",
    "grad_input_batch",
    "grad_params",
    "laplacian_batch",
    "laplacian_input",
    "load_network",
    "network_from_json",
    "network_to_json",
    "save_network",
]


class Activation(enum.Enum):
    """Nonlinearity applied at every hidden layer."""

    SOFTPLUS = "softplus"
    RELU = "relu"


def _softplus_terms(z):
    # logaddexp(0, z) = log(1 + exp(z)) evaluated stably for any float64 z.
    value = np.logaddexp(0.0, z) - _LOG2
    first = expit(z)
    second = first * (1.0 - first)
    return value, first, second


def _relu_terms(z):
    value = np.maximum(z, 0.0)
    first = (z > 0.0).astype(float)
    return value, first, np.zeros_like(value)


def _act_terms(kind, z):
    if kind is Activation.SOFTPLUS:
        return _softplus_terms(z)
    if kind is Activation.RELU:
        return _relu_terms(z)
    raise ValueError(f"unknown activation: {kind!r}")


def activation_eval(kind: Activation, z) -> tuple:
    """Evaluate an activation with its first and second derivative.

    Returns ``(value, first, second)``.  Scalar input gives floats; array
    input gives arrays of the same shape.  Non-finite input is rejected.
    """
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("activation input must be finite")
    value, first, second = _act_terms(kind, arr)
    if arr.ndim == 0:
        return float(value), float(first), float(second)
    return value, first, second


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, order="C")
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable weight stack.  ``layers[l]`` has shape ``(d_{l+1}, d_l)``.

    At least two layers are required and the final layer must have a single
    output row.  Weight arrays are copied and marked read-only on
    construction, so a Network can be shared freely across threads.
    """

    layers: tuple
    activation: Activation

    def __post_init__(self):
        if not isinstance(self.activation, Activation):
            raise ValueError("activation must be an Activation member")
        layers = tuple(self.layers)
        if len(layers) < 2:
            raise ValueError("a network needs at least two layers")
        frozen = []
        prev_out = None
        for i, theta in enumerate(layers):
            arr = np.asarray(theta, dtype=float)
            if arr.ndim != 2:
                raise ValueError(f"layer {i} is not a matrix")
            if arr.shape[0] < 1 or arr.shape[1] < 1:
                raise ValueError(f"layer {i} has an empty dimension")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"layer {i} contains non-finite weights")
            if prev_out is not None and arr.shape[1] != prev_out:
                raise ValueError(
                    f"layer {i} expects {arr.shape[1]} inputs but layer "
                    f"{i - 1} produces {prev_out}"
                )
            prev_out = arr.shape[0]
            frozen.append(_freeze(arr))
        if frozen[-1].shape[0] != 1:
            raise ValueError("output layer must have exactly one row")
        object.__setattr__(self, "layers", tuple(frozen))

    @property
    def depth(self) -> int:
        """Number of weight layers L."""
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[1]

    @property
    def layer_sizes(self) -> tuple:
        """Widths ``(d_0, d_1, ..., d_L)`` with ``d_L = 1``."""
        return (self.layers[0].shape[1],) + tuple(th.shape[0] for th in self.layers)

    @property
    def n_params(self) -> int:
        return int(sum(th.size for th in self.layers))


@dataclass(frozen=True)
class Architecture:
    """Layer widths plus activation, without weights."""

    layer_sizes: tuple
    activation: Activation

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 3:
            raise ValueError("architecture needs at least two weight layers")
        if any(s < 1 for s in sizes):
            raise ValueError("layer sizes must be positive")
        if sizes[-1] != 1:
            raise ValueError("output width must be 1")
        object.__setattr__(self, "layer_sizes", sizes)
        if not isinstance(self.activation, Activation):
            raise ValueError("activation must be an Activation member")

    @classmethod
    def mlp(cls, input_dim: int, hidden: int, depth: int, activation: Activation):
        """Uniform-width architecture with ``depth`` weight layers."""
        if depth < 2:
            raise ValueError("depth must be at least 2")
        return cls((input_dim,) + (hidden,) * (depth - 1) + (1,), activation)

    @property
    def depth(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return int(sum(sizes[i + 1] * sizes[i] for i in range(len(sizes) - 1)))


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Cached quantities from one forward pass at a single input.

    ``activations[l]`` is ``h_l`` (with ``h_0`` the input), ``preactivations[l-1]``
    is ``z_l = theta_l h_{l-1}``, and ``first_derivs`` / ``second_derivs`` hold
    ``s'(z_l)`` / ``s''(z_l)`` for the hidden layers ``l = 1 .. L-1``.  The
    originating network is kept so derivative routines can verify the trace
    matches the network they are handed.
    """

    input: np.ndarray
    activations: tuple
    preactivations: tuple
    first_derivs: tuple
    second_derivs: tuple
    output: float
    network: Network


def forward(net: Network, x) -> ForwardTrace:
    """Evaluate ``f(x)`` and cache everything the derivative routines need."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != net.input_dim:
        raise ValueError(
            f"input must be a vector of length {net.input_dim}, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite entries")
    a = _freeze(x)
    acts = [a]
    zs, fds, sds = [], [], []
    for theta in net.layers[:-1]:
        z = theta @ a
        value, first, second = _act_terms(net.activation, z)
        zs.append(_freeze(z))
        fds.append(_freeze(first))
        sds.append(_freeze(second))
        a = _freeze(value)
        acts.append(a)
    out = float((net.layers[-1] @ a)[0])
    return ForwardTrace(
        input=acts[0],
        activations=tuple(acts),
        preactivations=tuple(zs),
        first_derivs=tuple(fds),
        second_derivs=tuple(sds),
        output=out,
        network=net,
    )


def _require_trace(net: Network, trace: ForwardTrace):
    if trace.network is not net:
        raise ValueError("trace was not produced by forward() on this network")


def grad_params(net: Network, trace: ForwardTrace) -> list:
    """Exact gradient of the output w.r.t. every weight matrix.

    Backward recursion: with ``G_{L-1} = theta_L^T`` and
    ``D_l = s'(z_l) * G_l``, the gradient w.r.t. ``theta_l`` is the outer
    product ``D_l h_{l-1}^T`` and ``G_{l-1} = theta_l^T D_l``.  Returns one
    array per layer, shaped like that layer.
    """
    _require_trace(net, trace)
    L = net.depth
    grads = [None] * L
    grads[L - 1] = trace.activations[L - 1][np.newaxis, :].copy()
    g = net.layers[-1][0]
    for l in range(L - 1, 0, -1):
        d = trace.first_derivs[l - 1] * g
        grads[l - 1] = np.outer(d, trace.activations[l - 1])
        g = net.layers[l - 1].T @ d
    return grads


def grad_input(net: Network, trace: ForwardTrace) -> np.ndarray:
    """Exact input gradient, as right-to-left diagonal-scaled mat-vec products.

    Evaluates ``theta_1^T (s'(z_1) * theta_2^T (s'(z_2) * ... theta_L^T))``;
    cost is one transposed mat-vec per layer.
    """
    _require_trace(net, trace)
    g = net.layers[-1][0]
    for l in range(net.depth - 1, 0, -1):
        g = net.layers[l - 1].T @ (trace.first_derivs[l - 1] * g)
    return g


def laplacian_input(net: Network, trace: ForwardTrace) -> float:
    """Exact input Laplacian ``sum_i d^2 f / dx_i^2``.

    The input gradient depends on x only through the hidden slopes
    ``s'(z_k)``, so differentiating once more and summing over coordinates
    collapses to

        sum_{k=1}^{L-1} sum_j s''(z_k)_j G_{k,j} ||row_j(J_k)||_2^2

    where ``G_k`` is the backward gradient of the output w.r.t. ``h_k`` and
    ``J_k = theta_k diag(s'(z_{k-1})) J_{k-1}`` (with ``J_1 = theta_1``) is
    the Jacobian of ``z_k`` w.r.t. the input.  Cost is O(L h^2 d); no finite
    differences are involved.  For relu the second derivative is identically
    zero and the result is exactly 0.0.
    """
    _require_trace(net, trace)
    L = net.depth
    gs = [None] * (L - 1)
    g = net.layers[-1][0]
    for k in range(L - 1, 0, -1):
        gs[k - 1] = g
        if k > 1:
            g = net.layers[k - 1].T @ (trace.first_derivs[k - 1] * g)
    total = 0.0
    jac = net.layers[0]
    for k in range(1, L):
        row_sq = np.einsum("jd,jd->j", jac, jac)
        total += float(np.dot(trace.second_derivs[k - 1] * gs[k - 1], row_sq))
        if k < L - 1:
            jac = net.layers[k] @ (trace.first_derivs[k - 1][:, np.newaxis] * jac)
    return total


# -- batched evaluation ------------------------------------------------------
#
# Row-major batches: X has shape (m, d) and every per-layer cache below has
# shape (m, d_l).  These are the workhorses for training and Monte-Carlo
# evaluation; they compute the same quantities as the single-sample routines
# above (up to matmul rounding).


def _hidden_batch(layers, activation, X, want_second=False):
    acts = [X]
    fds, sds = [], []
    a = X
    for theta in layers[:-1]:
        z = a @ theta.T
        value, first, second = _act_terms(activation, z)
        fds.append(first)
        if want_second:
            sds.append(second)
        a = value
        acts.append(a)
    return acts, fds, sds


def _check_batch(net, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(
            f"batch must have shape (m, {net.input_dim}), got {X.shape}"
        )
    return X


def forward_batch(net: Network, X) -> np.ndarray:
    """Outputs ``f(x_i)`` for every row of X, shape (m,)."""
    X = _check_batch(net, X)
    acts, _, _ = _hidden_batch(net.layers, net.activation, X)
    return (acts[-1] @ net.layers[-1].T).ravel()


def grad_input_batch(net: Network, X) -> np.ndarray:
    """Input gradients for every row of X, shape (m, d)."""
    X = _check_batch(net, X)
    _, fds, _ = _hidden_batch(net.layers, net.activation, X)
    m = X.shape[0]
    g = np.broadcast_to(net.layers[-1][0], (m, net.layers[-1].shape[1]))
    for l in range(net.depth - 1, 0, -1):
        g = (fds[l - 1] * g) @ net.layers[l - 1]
    return g


def laplacian_batch(net: Network, X) -> np.ndarray:
    """Input Laplacians for every row of X, shape (m,).

    Memory scales as O(m h d) for the batched Jacobian chain; chunk large
    batches at the call site.
    """
    X = _check_batch(net, X)
    _, fds, sds = _hidden_batch(net.layers, net.activation, X, want_second=True)
    m = X.shape[0]
    L = net.depth
    gs = [None] * (L - 1)
    g = np.broadcast_to(net.layers[-1][0], (m, net.layers[-1].shape[1]))
    for k in range(L - 1, 0, -1):
        gs[k - 1] = g
        if k > 1:
            g = (fds[k - 1] * g) @ net.layers[k - 1]
    total = np.zeros(m)
    row_sq = np.einsum("jd,jd->j", net.layers[0], net.layers[0])
    total += (sds[0] * gs[0]) @ row_sq
    if L > 2:
        jac = np.broadcast_to(net.layers[0], (m,) + net.layers[0].shape)
        for k in range(2, L):
            jac = np.einsum("ab,mb,mbd->mad", net.layers[k - 1], fds[k - 2], jac)
            row_sq = np.einsum("mjd,mjd->mj", jac, jac)
            total += np.einsum("mj,mj->m", sds[k - 1] * gs[k - 1], row_sq)
    return total


# -- serialization -----------------------------------------------------------


def network_to_json(net: Network) -> str:
    """Serialize to JSON with 17 significant digits per weight.

    17 significant decimal digits uniquely identify a float64, so
    ``network_from_json(network_to_json(net))`` reproduces the weights
    bit for bit.
    """
    def fmt(v):
        return format(v, ".17g")

    layer_parts = []
    for theta in net.layers:
        rows = ",".join("[" + ",".join(fmt(v) for v in row) + "]" for row in theta)
        layer_parts.append("[" + rows + "]")
    return (
        '{"activation": "%s", "layers": [%s]}'
        % (net.activation.value, ",".join(layer_parts))
    )


def network_from_json(text: str) -> Network:
    """Parse a network serialized by :func:`network_to_json`."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid network JSON: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != {"activation", "layers"}:
        raise ValueError('network JSON must have exactly "activation" and "layers"')
    try:
        kind = Activation(obj["activation"])
    except ValueError:
        raise ValueError(f"unknown activation {obj['activation']!r}") from None
    layers = obj["layers"]
    if not isinstance(layers, list) or not layers:
        raise ValueError('"layers" must be a non-empty list')
    mats = []
    for i, rows in enumerate(layers):
        if not isinstance(rows, list) or not rows:
            raise ValueError(f"layer {i} must be a non-empty list of rows")
        width = None
        for row in rows:
            if not isinstance(row, list) or not row:
                raise ValueError(f"layer {i} has a malformed row")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(f"layer {i} has ragged rows")
        mats.append(np.array(rows, dtype=float))
    return Network(tuple(mats), kind)


def save_network(net: Network, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(network_to_json(net))
        fh.write("\n")


def load_network(path) -> Network:
    with open(path, "r", encoding="ascii") as fh:
        return network_from_json(fh.read())
