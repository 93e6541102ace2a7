"""Verifiable velocity fields standing in for a pretrained network.

The analytic Gaussian field is the closed-form conditional expectation of
noise-minus-data along the linear interpolant: with data rows drawn from
N(mu, sigma^2 I) and z(t) = (1-t) z0 + t eps,

    E[eps - z0 | z(t) = z] = (b - a s) / (a^2 s + b^2) * (z - a mu) - mu,

where a = 1-t, b = t, s = sigma^2 (joint-Gaussian conditioning, applied per
voxel row). At t=0 this reduces to -z and at t=1 to z - mu, which the tests
pin exactly.

Trainable fields are fit with the flow-matching regression objective using
hand-derived parameter gradients. The 'affine' architecture is affine in the
latent with polynomial time modulation, v = W(t) z + d(t) + W_c c where W(t)
and d(t) have entries polynomial in t (degree time_degree, Legendre basis):
the analytic field's z-coefficient depends on t, so a time-independent weight
matrix over [z, t, c] could not approach it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BadCondition, ShapeMismatch, TimeOutOfRange
from .flow import Condition
from .guidance import OptimizerConfig, OptimizerState, adamw_step

HELDOUT_SEED = 20_251_104
HELDOUT_SIZE = 10_000

ARCHITECTURES = ("affine", "mlp1")
DEFAULT_TIME_DEGREE = 3
DEFAULT_HIDDEN = 32


@dataclass(frozen=True)
class GaussianFlowSpec:
    """Isotropic Gaussian data distribution N(mean, std^2 I), per voxel row."""

    mean: np.ndarray
    std: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64).ravel())
        if self.std <= 0:
            raise ValueError("std must be positive")

    @property
    def channels(self) -> int:
        return len(self.mean)


def gaussian_analytic_velocity(spec: GaussianFlowSpec, values: np.ndarray, t: float) -> np.ndarray:
    """Closed-form velocity of the Gaussian rectified flow, rowwise."""
    if not 0.0 <= t <= 1.0:
        raise TimeOutOfRange(t)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != spec.channels:
        raise ShapeMismatch(values.shape, (len(values), spec.channels))
    a = 1.0 - t
    b = t
    s = spec.std * spec.std
    coef = (b - a * s) / (a * a * s + b * b)
    return coef * (values - a * spec.mean) - spec.mean


def mixture_conditional_velocity(
    components: list[GaussianFlowSpec],
    values: np.ndarray,
    t: float,
    condition: Condition,
) -> np.ndarray:
    """Velocity of the component selected by a one-hot condition."""
    return gaussian_analytic_velocity(_select_component(components, condition), values, t)


def _select_component(components: list[GaussianFlowSpec], condition: Condition) -> GaussianFlowSpec:
    if condition.kind != "vector" or condition.payload is None:
        raise BadCondition("mixture selection needs a one-hot vector condition")
    onehot = np.asarray(condition.payload, dtype=np.float64)
    if onehot.shape != (len(components),):
        raise BadCondition(
            f"condition length {onehot.shape} does not match {len(components)} components"
        )
    hits = np.nonzero(onehot == 1.0)[0]
    if len(hits) != 1 or not np.all((onehot == 0.0) | (onehot == 1.0)):
        raise BadCondition("condition must be exactly one-hot")
    return components[int(hits[0])]


@dataclass(frozen=True)
class AnalyticGaussianField:
    """VelocityField wrapper for the closed-form Gaussian flow."""

    spec: GaussianFlowSpec
    name: str = "gaussian_analytic"
    parameter_count: int = 0

    def evaluate(self, values: np.ndarray, time: float, condition: Condition) -> np.ndarray:
        del condition
        return gaussian_analytic_velocity(self.spec, values, time)


@dataclass(frozen=True)
class MixtureField:
    """Condition-selected mixture of analytic Gaussian flows."""

    components: tuple[GaussianFlowSpec, ...]
    name: str = "gaussian_mixture"
    parameter_count: int = 0

    def evaluate(self, values: np.ndarray, time: float, condition: Condition) -> np.ndarray:
        return mixture_conditional_velocity(list(self.components), values, time, condition)


@dataclass(frozen=True)
class ZeroField:
    """Identity sampler: zero velocity everywhere. Useful for isolating guidance."""

    name: str = "zero"
    parameter_count: int = 0

    def evaluate(self, values: np.ndarray, time: float, condition: Condition) -> np.ndarray:
        del time, condition
        return np.zeros_like(np.asarray(values, dtype=np.float64))


def _legendre_basis(t: np.ndarray, degree: int) -> np.ndarray:
    """Shifted Legendre polynomials P_0..P_degree evaluated on t in [0, 1].

    Raw monomials t^p make the regression badly conditioned and stall the
    elementwise optimizer; an orthogonal basis spans the same polynomials.
    """
    u = 2.0 * t - 1.0
    cols = [np.ones_like(u), u]
    for p in range(2, degree + 1):
        cols.append(((2 * p - 1) * u * cols[-1] - (p - 1) * cols[-2]) / p)
    return np.stack(cols[: degree + 1], axis=1)


def _time_features(z: np.ndarray, t: np.ndarray, cond: np.ndarray | None, degree: int) -> np.ndarray:
    """Stack [z P_0(t), .., z P_P(t), P_1(t), .., P_P(t), c] rowwise; t is per-row."""
    basis = _legendre_basis(t, degree)
    blocks = [z * basis[:, p : p + 1] for p in range(degree + 1)]
    blocks += [basis[:, p : p + 1] for p in range(1, degree + 1)]
    if cond is not None and cond.shape[1]:
        blocks.append(cond)
    return np.concatenate(blocks, axis=1)


def _feature_width(channels: int, condition_width: int, degree: int) -> int:
    return channels * (degree + 1) + degree + condition_width


@dataclass
class TrainableField:
    """Small velocity field trained with the flow-matching objective.

    'affine' is a single weight matrix over time-modulated latent features
    (affine in z for every fixed t); 'mlp1' adds one tanh hidden layer of
    the given width. Parameters live in a plain dict of arrays so the
    optimizer and serialization stay uniform.
    """

    architecture: str
    channels: int
    condition_width: int = 0
    time_degree: int = DEFAULT_TIME_DEGREE
    hidden: int = DEFAULT_HIDDEN
    params: dict[str, np.ndarray] = field(default_factory=dict)
    name: str = "trainable"

    def __post_init__(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if not self.params:
            self.params = _init_params(
                self.architecture, self.channels, self.condition_width,
                self.time_degree, self.hidden,
            )
        self._check_shapes()

    def _check_shapes(self) -> None:
        f = _feature_width(self.channels, self.condition_width, self.time_degree)
        if self.architecture == "affine":
            expect = {"W": (self.channels, f), "b": (self.channels,)}
        else:
            expect = {
                "W1": (self.hidden, f),
                "b1": (self.hidden,),
                "W2": (self.channels, self.hidden),
                "b2": (self.channels,),
            }
        for key, shape in expect.items():
            got = self.params[key].shape
            if got != shape:
                raise ShapeMismatch(got, shape)
            if not np.isfinite(self.params[key]).all():
                raise ValueError(f"non-finite parameter {key}")

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def _condition_rows(self, condition: Condition, rows: int) -> np.ndarray | None:
        if self.condition_width == 0:
            return None
        if condition.kind != "vector" or condition.payload is None:
            raise BadCondition(f"field expects a vector condition of width {self.condition_width}")
        payload = np.asarray(condition.payload, dtype=np.float64).ravel()
        if len(payload) != self.condition_width:
            raise BadCondition(f"condition width {len(payload)} != {self.condition_width}")
        return np.tile(payload, (rows, 1))

    def forward(self, z: np.ndarray, t: np.ndarray, cond: np.ndarray | None) -> np.ndarray:
        """Batched forward pass with per-row times."""
        u = _time_features(z, t, cond, self.time_degree)
        if self.architecture == "affine":
            return u @ self.params["W"].T + self.params["b"]
        h = np.tanh(u @ self.params["W1"].T + self.params["b1"])
        return h @ self.params["W2"].T + self.params["b2"]

    def evaluate(self, values: np.ndarray, time: float, condition: Condition) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if not 0.0 <= time <= 1.0:
            raise TimeOutOfRange(time)
        t = np.full(len(values), float(time))
        return self.forward(values, t, self._condition_rows(condition, len(values)))

    def copy(self) -> "TrainableField":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})


def _init_params(
    architecture: str, channels: int, condition_width: int, degree: int, hidden: int,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    f = _feature_width(channels, condition_width, degree)
    rng = np.random.default_rng(seed)
    if architecture == "affine":
        return {
            "W": 0.1 * rng.standard_normal((channels, f)) / np.sqrt(f),
            "b": np.zeros(channels),
        }
    return {
        "W1": rng.standard_normal((hidden, f)) / np.sqrt(f),
        "b1": np.zeros(hidden),
        "W2": 0.1 * rng.standard_normal((channels, hidden)) / np.sqrt(hidden),
        "b2": np.zeros(channels),
    }


def cfm_batch_loss_and_grads(
    field_: TrainableField,
    z0: np.ndarray,
    eps: np.ndarray,
    t: np.ndarray,
    cond: np.ndarray | None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Flow-matching loss over a batch of rows plus hand-derived parameter grads.

    Each batch row is one training item: loss = mean_b || v(z_b(t_b), t_b) -
    (eps_b - z0_b) ||^2.
    """
    n = len(z0)
    tcol = t[:, None]
    zt = (1.0 - tcol) * z0 + tcol * eps
    target = eps - z0
    u = _time_features(zt, t, cond, field_.time_degree)

    if field_.architecture == "affine":
        v = u @ field_.params["W"].T + field_.params["b"]
        dv = (2.0 / n) * (v - target)
        grads = {"W": dv.T @ u, "b": dv.sum(axis=0)}
    else:
        pre = u @ field_.params["W1"].T + field_.params["b1"]
        h = np.tanh(pre)
        v = h @ field_.params["W2"].T + field_.params["b2"]
        dv = (2.0 / n) * (v - target)
        dh = dv @ field_.params["W2"]
        dpre = dh * (1.0 - h * h)
        grads = {
            "W1": dpre.T @ u,
            "b1": dpre.sum(axis=0),
            "W2": dv.T @ h,
            "b2": dv.sum(axis=0),
        }
    loss = float(((v - target) ** 2).sum() / n)
    return loss, grads


def draw_cfm_batch(
    spec: GaussianFlowSpec | list[GaussianFlowSpec],
    batch_size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
    """Sample (z0, eps, t, condition rows) for one training batch."""
    if isinstance(spec, GaussianFlowSpec):
        z0 = spec.mean + spec.std * rng.standard_normal((batch_size, spec.channels))
        cond = None
        channels = spec.channels
    else:
        channels = spec[0].channels
        picks = rng.integers(len(spec), size=batch_size)
        z0 = np.empty((batch_size, channels))
        for j, comp in enumerate(spec):
            rows = picks == j
            z0[rows] = comp.mean + comp.std * rng.standard_normal((int(rows.sum()), channels))
        cond = np.zeros((batch_size, len(spec)))
        cond[np.arange(batch_size), picks] = 1.0
    eps = rng.standard_normal((batch_size, channels))
    t = rng.uniform(0.0, 1.0, size=batch_size)
    return z0, eps, t, cond


def train_cfm(
    field_: TrainableField,
    spec: GaussianFlowSpec | list[GaussianFlowSpec],
    batch_count: int,
    batch_size: int,
    seed: int,
    optimizer: OptimizerConfig | None = None,
) -> tuple[TrainableField, list[float]]:
    """Fit a trainable field to the flow-matching target with AdamW.

    Per-batch generators are spawned from one seed sequence, so a parallel
    batch sampler would see the same data. Returns a new field (the input is
    untouched) and the per-batch loss curve.
    """
    optimizer = optimizer or OptimizerConfig()
    mixture = not isinstance(spec, GaussianFlowSpec)
    expected_width = len(spec) if mixture else 0
    if field_.condition_width != expected_width:
        raise BadCondition(
            f"field condition width {field_.condition_width} does not match spec ({expected_width})"
        )

    out = field_.copy()
    states = {k: OptimizerState.zeros(v.shape) for k, v in out.params.items()}
    batch_rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(batch_count)]
    losses: list[float] = []
    for rng in batch_rngs:
        z0, eps, t, cond = draw_cfm_batch(spec, batch_size, rng)
        loss, grads = cfm_batch_loss_and_grads(out, z0, eps, t, cond)
        losses.append(loss)
        for key, grad in grads.items():
            states[key], out.params[key] = adamw_step(states[key], out.params[key], grad, optimizer)
    return out, losses


def make_heldout_set(
    spec: GaussianFlowSpec | list[GaussianFlowSpec],
    size: int = HELDOUT_SIZE,
    seed: int = HELDOUT_SEED,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
    """Fixed evaluation tuples shared by training and acceptance checks."""
    return draw_cfm_batch(spec, size, np.random.default_rng(seed))
