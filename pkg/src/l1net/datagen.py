"""Synthetic teacher networks and truncated-normal regression data.

Inputs are drawn i.i.d. per coordinate from a normal truncated at
``cutoff_factor`` standard deviations; observation noise uses the same
truncation rule with its own scale.  Teachers are random dense networks
whose first layer touches only the first ``s`` input coordinates, so the
remaining ``d - s`` coordinates are exactly irrelevant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import Activation, Network, forward_batch

__all__ = [
    "DataSpec",
    "Dataset",
    "TeacherSpec",
    "dataset_to_csv",
    "grad_log_density",
    "log_density",
    "make_teacher",
    "read_dataset_csv",
    "sample_truncated_normal",
    "synthesize",
    "write_dataset_csv",
]


@dataclass(frozen=True)
class DataSpec:
    """Input and noise distribution settings.

    ``noise_std = 0`` is allowed and means noiseless labels.  The input
    support is the box ``|x_i - mean| <= cutoff_factor * x_std``.
    """

    x_std: float = 1.0
    noise_std: float = 0.1
    cutoff_factor: float = 10.0
    mean: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.x_std) or self.x_std <= 0.0:
            raise ValueError("x_std must be positive and finite")
        if not np.isfinite(self.noise_std) or self.noise_std < 0.0:
            raise ValueError("noise_std must be non-negative and finite")
        if not np.isfinite(self.cutoff_factor) or self.cutoff_factor <= 0.0:
            raise ValueError("cutoff_factor must be positive and finite")
        if not np.isfinite(self.mean):
            raise ValueError("mean must be finite")

    @property
    def input_bound(self) -> float:
        """Half-width of the input box: sup_i |x_i - mean|."""
        return self.cutoff_factor * self.x_std

    @property
    def score_bound(self) -> float:
        """Sup-norm bound on the score, attained on the box boundary."""
        return self.cutoff_factor / self.x_std


@dataclass(frozen=True)
class TeacherSpec:
    """Shape of a sparse teacher: ambient dim d, s relevant coordinates,
    L weight layers of width h, and the seed for the weight draw."""

    d: int
    s: int
    L: int
    h: int
    seed: int = 0

    def __post_init__(self):
        if int(self.d) < 1 or int(self.h) < 1:
            raise ValueError("d and h must be positive")
        if not 1 <= int(self.s) <= int(self.d):
            raise ValueError("s must satisfy 1 <= s <= d")
        if int(self.L) < 2:
            raise ValueError("L must be at least 2")
        if int(self.seed) < 0:
            raise ValueError("seed must be a non-negative integer")
        for name in ("d", "s", "L", "h", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix and labels, plus how they were generated (when known)."""

    X: np.ndarray
    y: np.ndarray
    data_spec: DataSpec
    teacher_spec: TeacherSpec = None
    seed: int = None

    def __post_init__(self):
        X = np.array(np.asarray(self.X, dtype=float), order="C")
        y = np.array(np.asarray(self.y, dtype=float), order="C")
        if X.ndim != 2:
            raise ValueError("X must be a matrix")
        if y.shape != (X.shape[0],):
            raise ValueError("y must be a vector with one entry per row of X")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        bound = self.data_spec.input_bound * (1.0 + 1e-12)
        if not np.all(np.abs(X - self.data_spec.mean) <= bound):
            raise ValueError("X contains entries outside the truncation box")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def sample_truncated_normal(mean: float, std: float, cutoff_factor: float, rng,
                            size=None):
    """Normal draws conditioned on ``|x - mean| <= cutoff_factor * std``.

    Rejection sampling: at cutoff factors of practical interest nearly
    every proposal is accepted, and the loop is deterministic given the
    generator state.  ``size=None`` returns a scalar.
    """
    if not np.isfinite(std) or std <= 0.0:
        raise ValueError("std must be positive and finite")
    if not np.isfinite(cutoff_factor) or cutoff_factor <= 0.0:
        raise ValueError("cutoff_factor must be positive and finite")
    scalar = size is None
    shape = (1,) if scalar else size
    out = rng.normal(mean, std, size=shape)
    flat = out.reshape(-1)
    bound = cutoff_factor * std
    bad = np.abs(flat - mean) > bound
    while bad.any():
        flat[bad] = rng.normal(mean, std, size=int(bad.sum()))
        bad = np.abs(flat - mean) > bound
    return float(flat[0]) if scalar else out


def make_teacher(spec: TeacherSpec, rng=None,
                 activation: Activation = Activation.SOFTPLUS) -> Network:
    """Random teacher with exactly ``d - s`` all-zero first-layer columns.

    Layer ``l`` is drawn N(0, 2 / fan_in); the first-layer columns beyond
    the first ``s`` are then zeroed, making those input coordinates exactly
    irrelevant.  Deterministic given ``spec.seed`` when ``rng`` is omitted.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    sizes = (spec.d,) + (spec.h,) * (spec.L - 1) + (1,)
    layers = []
    for l in range(spec.L):
        fan_in = sizes[l]
        layers.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(sizes[l + 1], fan_in)))
    layers[0][:, spec.s:] = 0.0
    return Network(tuple(layers), activation)


def synthesize(teacher: Network, n: int, data_spec: DataSpec, rng, *,
               teacher_spec: TeacherSpec = None, seed: int = None) -> Dataset:
    """Draw ``n`` samples: truncated-normal inputs, teacher outputs plus
    truncated-normal noise (skipped entirely when ``noise_std`` is 0)."""
    if int(n) < 1:
        raise ValueError("n must be positive")
    n = int(n)
    X = sample_truncated_normal(
        data_spec.mean, data_spec.x_std, data_spec.cutoff_factor, rng,
        size=(n, teacher.input_dim),
    )
    y = forward_batch(teacher, X)
    if data_spec.noise_std > 0.0:
        y = y + sample_truncated_normal(
            0.0, data_spec.noise_std, data_spec.cutoff_factor, rng, size=(n,)
        )
    return Dataset(X, y, data_spec, teacher_spec=teacher_spec, seed=seed)


def log_density(x, data_spec: DataSpec) -> float:
    """Unnormalized log density of the input law at ``x`` (constant omitted).

    Inside the truncation box the truncated normal density is proportional
    to the untruncated one, so up to an additive constant the log density
    is ``-||x - mean||^2 / (2 x_std^2)``.  Outside the box it is ``-inf``.
    """
    x = np.asarray(x, dtype=float)
    z = (x - data_spec.mean) / data_spec.x_std
    if np.any(np.abs(x - data_spec.mean) > data_spec.input_bound):
        return float("-inf")
    return float(-0.5 * (z @ z))


def grad_log_density(x, data_spec: DataSpec) -> np.ndarray:
    """Score of the input law: ``-(x - mean) / x_std^2``.

    Valid on the closed truncation box; raises outside it.  Each component
    is bounded by ``cutoff_factor / x_std``, with equality on the boundary.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains non-finite entries")
    if np.any(np.abs(x - data_spec.mean) > data_spec.input_bound):
        raise ValueError("x lies outside the truncation box")
    return -(x - data_spec.mean) / (data_spec.x_std ** 2)


# -- CSV ---------------------------------------------------------------------


def dataset_to_csv(dataset: Dataset) -> str:
    """Header ``x1,...,xd,y``; 17 significant digits per value."""
    d = dataset.d
    lines = [",".join([f"x{i + 1}" for i in range(d)] + ["y"])]
    for row, target in zip(dataset.X, dataset.y):
        vals = ["%.17g" % v for v in row] + ["%.17g" % target]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def write_dataset_csv(dataset: Dataset, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dataset_to_csv(dataset))


def read_dataset_csv(path, data_spec: DataSpec) -> Dataset:
    """Parse a file written by :func:`write_dataset_csv`; exact round trip."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if header[-1] != "y" or header[:-1] != [f"x{i + 1}" for i in range(len(header) - 1)]:
            raise ValueError("unexpected dataset CSV header")
        d = len(header) - 1
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != d + 1:
                raise ValueError("dataset CSV row has wrong arity")
            rows.append([float(p) for p in parts])
    if not rows:
        raise ValueError("dataset CSV has no data rows")
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, :d], arr[:, d], data_spec)
