"""Rectified-flow forward process, Euler reverse sampler, and guided sampling.

The velocity field predicts the noise-minus-data direction, so the reverse
sampler integrates from t=1 down to t=0 with updates z <- z - dt * v. Guidance
is interleaved after each flow step: either a single scaled gradient step or a
few AdamW steps on the configured objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import (
    BadCondition,
    EmptyBatch,
    MissingLabels,
    MissingTarget,
    NonFiniteValue,
    ShapeMismatch,
    TimeOutOfRange,
)
from .guidance import (
    GuidanceSpec,
    OptimizerState,
    adamw_step,
    appearance_loss,
    appearance_loss_grad,
    global_pool_loss,
    global_pool_loss_grad,
    structure_loss,
    structure_loss_grad,
)
from .slat import LatentState, StructuredLatent, init_latent_state


@dataclass(frozen=True)
class Condition:
    """Opaque global conditioning signal: nothing, or an embedding vector."""

    kind: str = "none"
    payload: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("none", "vector"):
            raise BadCondition(f"unknown kind {self.kind!r}")
        if self.kind == "vector":
            if self.payload is None or np.asarray(self.payload).size == 0:
                raise BadCondition("vector condition needs a non-empty payload")
            if not np.isfinite(np.asarray(self.payload)).all():
                raise BadCondition("non-finite payload")

    @classmethod
    def none(cls) -> "Condition":
        return cls(kind="none")

    @classmethod
    def vector(cls, values) -> "Condition":
        return cls(kind="vector", payload=np.asarray(values, dtype=np.float64))


@runtime_checkable
class VelocityField(Protocol):
    """Deterministic time-dependent vector field over latent matrices."""

    name: str
    parameter_count: int

    def evaluate(self, values: np.ndarray, time: float, condition: Condition) -> np.ndarray:
        ...


@dataclass
class SamplerConfig:
    steps: int = 300
    schedule: str = "linear"
    seed: int = 0
    guidance: GuidanceSpec = field(default_factory=GuidanceSpec)
    record_trajectory: bool = False

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.schedule != "linear":
            raise ValueError(f"unsupported schedule {self.schedule!r}")


@dataclass
class GuidanceApplication:
    step: int
    time: float
    loss_before: float
    loss_after: float


@dataclass
class GuidanceReport:
    """Loss trace of every guidance application during one sampler run."""

    objective: str
    applications: list[GuidanceApplication] = field(default_factory=list)

    def losses(self) -> list[float]:
        return [a.loss_after for a in self.applications]

    def to_dict(self) -> dict:
        return {
            "schema": "flowguide.report/1",
            "objective": self.objective,
            "applications": [
                {
                    "step": a.step,
                    "time": a.time,
                    "loss_before": a.loss_before,
                    "loss_after": a.loss_after,
                }
                for a in self.applications
            ],
        }


def forward_interpolate(z0: np.ndarray, eps: np.ndarray, t: float) -> np.ndarray:
    """Linear forward process (1 - t) * z0 + t * eps."""
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ShapeMismatch(z0.shape, eps.shape)
    if not 0.0 <= t <= 1.0:
        raise TimeOutOfRange(t)
    return (1.0 - t) * z0 + t * eps


def cfm_loss(field_: VelocityField, batch) -> float:
    """Mean squared flow-matching residual over a batch.

    Each item is (z0, eps, t, condition); the residual compares the field at
    the interpolated point against the target eps - z0, summed over all
    matrix entries of the item.
    """
    batch = list(batch)
    if not batch:
        raise EmptyBatch()
    total = 0.0
    for z0, eps, t, condition in batch:
        z0 = np.asarray(z0, dtype=np.float64)
        eps = np.asarray(eps, dtype=np.float64)
        zt = forward_interpolate(z0, eps, t)
        resid = field_.evaluate(zt, t, condition) - (eps - z0)
        total += float((resid * resid).sum())
    return total / len(batch)


def euler_step(
    values: np.ndarray,
    t: float,
    dt: float,
    field_: VelocityField,
    condition: Condition,
) -> np.ndarray:
    """One reverse Euler step: values - dt * v(values, t | c)."""
    if not 0.0 <= t <= 1.0:
        raise TimeOutOfRange(t)
    if t - dt < -1e-12:
        raise TimeOutOfRange(t - dt)
    return values - dt * field_.evaluate(values, t, condition)


def _guidance_loss_and_grad(values: np.ndarray, spec: GuidanceSpec):
    if spec.objective == "appearance":
        if spec.appearance_target is None:
            raise MissingTarget()
        target = spec.appearance_target
        return (
            appearance_loss(values, target),
            appearance_loss_grad(values, target),
        )
    if spec.objective == "structure":
        if spec.cluster_labels is None:
            raise MissingLabels()
        return (
            structure_loss(values, spec.cluster_labels, spec.denominator),
            structure_loss_grad(values, spec.cluster_labels, spec.denominator),
        )
    if spec.objective == "global_pool":
        if spec.appearance_target is None:
            raise MissingTarget()
        return (
            global_pool_loss(values, spec.appearance_target),
            global_pool_loss_grad(values, spec.appearance_target),
        )
    raise ValueError(f"no loss for objective {spec.objective!r}")


def _guidance_loss(values: np.ndarray, spec: GuidanceSpec) -> float:
    loss, _ = _guidance_loss_and_grad(values, spec)
    return loss


def _run_sampler(
    shape: StructuredLatent,
    field_: VelocityField,
    condition: Condition,
    config: SamplerConfig,
) -> tuple[LatentState, GuidanceReport]:
    spec = config.guidance
    active = spec.active
    state = init_latent_state(shape, config.seed)
    values = state.values
    report = GuidanceReport(objective=spec.objective if active else "none")
    trajectory: list[tuple[float, np.ndarray]] | None = (
        [(1.0, values.copy())] if config.record_trajectory else None
    )
    opt_state = OptimizerState.zeros(values.shape) if active else None

    steps = config.steps
    for k in range(steps):
        t_now = (steps - k) / steps
        t_next = (steps - k - 1) / steps
        values = values - (t_now - t_next) * field_.evaluate(values, t_now, condition)
        if active and k % spec.apply_every == 0:
            loss_before, grad = _guidance_loss_and_grad(values, spec)
            if spec.mode == "gradient_step":
                values = values - spec.weight * grad
            else:
                if spec.reset_optimizer_each_step:
                    opt_state = OptimizerState.zeros(values.shape)
                for inner in range(spec.inner_steps):
                    if inner > 0:
                        _, grad = _guidance_loss_and_grad(values, spec)
                    opt_state, values = adamw_step(
                        opt_state, values, spec.weight * grad, spec.optimizer
                    )
            loss_after = _guidance_loss(values, spec)
            report.applications.append(
                GuidanceApplication(k, t_next, loss_before, loss_after)
            )
        if trajectory is not None:
            trajectory.append((t_next, values.copy()))

    if not np.isfinite(values).all():
        raise NonFiniteValue("sampled latent values")
    final = LatentState(base=shape, values=values, time=0.0, trajectory=trajectory)
    return final, report


def sample(
    shape: StructuredLatent,
    field_: VelocityField,
    condition: Condition,
    config: SamplerConfig,
) -> LatentState:
    """Reverse-flow sampling from seeded Gaussian noise, no guidance.

    Runs exactly config.steps Euler steps on the linear time grid from 1
    down to 0. Deterministic given (shape, field parameters, condition,
    config); the output's voxel positions are the input's, untouched.
    """
    plain = SamplerConfig(
        steps=config.steps,
        schedule=config.schedule,
        seed=config.seed,
        guidance=GuidanceSpec(objective="none"),
        record_trajectory=config.record_trajectory,
    )
    state, _ = _run_sampler(shape, field_, condition, plain)
    return state


def sample_guided(
    shape: StructuredLatent,
    field_: VelocityField,
    condition: Condition,
    config: SamplerConfig,
) -> tuple[LatentState, GuidanceReport]:
    """Reverse-flow sampling interleaved with guidance.

    After the Euler step of each iteration k with k % apply_every == 0, the
    configured objective is applied: one -weight * grad step, or inner_steps
    AdamW updates on the weighted loss with optimizer state persisting
    across flow steps. With objective 'none' or weight 0 this is bit-exactly
    the plain sampler.
    """
    return _run_sampler(shape, field_, condition, config)
