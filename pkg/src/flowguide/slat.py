"""Sparse structured voxel latents.

A structured latent is a set of active voxels on an N^3 grid, each carrying a
C-dimensional latent vector. Voxel positions outline the coarse shape; the
latent vectors carry everything else. Positions are frozen for the lifetime of
an object; only latent values evolve during sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ChannelMismatch,
    DuplicatePosition,
    EmptyInput,
    NonFiniteValue,
    OutOfBounds,
)

# Positions serialize as unsigned 16-bit integers.
MAX_RESOLUTION = 65535


def canonical_permutation(positions: np.ndarray) -> np.ndarray:
    """Indices that sort positions lexicographically by (z, y, x)."""
    return np.lexsort((positions[:, 0], positions[:, 1], positions[:, 2]))


def is_canonical(positions: np.ndarray) -> bool:
    """True when positions are strictly increasing in (z, y, x) order."""
    if len(positions) <= 1:
        return True
    keys = _position_keys(positions, int(positions.max()) + 1)
    return bool(np.all(keys[1:] > keys[:-1]))


def _position_keys(positions: np.ndarray, resolution: int) -> np.ndarray:
    p = positions.astype(np.int64)
    n = int(resolution)
    return (p[:, 2] * n + p[:, 1]) * n + p[:, 0]


@dataclass(eq=False)
class StructuredLatent:
    """L active voxels with positions (L, 3) and latent values (L, C).

    Positions are canonically ordered (lexicographic by z, y, x) so that two
    latents built from the same voxel set compare equal regardless of input
    order.
    """

    grid_resolution: int
    channels: int
    positions: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StructuredLatent):
            return NotImplemented
        return (
            self.grid_resolution == other.grid_resolution
            and self.channels == other.channels
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.values, other.values)
        )

    def position_set(self) -> set[tuple[int, int, int]]:
        return {tuple(int(v) for v in p) for p in self.positions}


@dataclass
class LatentState:
    """Mutable latent values evolved by the sampler over a frozen voxel set.

    ``values`` is owned by a single sampler run; ``time`` runs from 1 down
    to 0 during reverse sampling.
    """

    base: StructuredLatent
    values: np.ndarray
    time: float
    trajectory: list[tuple[float, np.ndarray]] | None = field(default=None, repr=False)

    @property
    def positions(self) -> np.ndarray:
        return self.base.positions


def structured_latent_from_arrays(
    resolution: int,
    channels: int,
    positions: np.ndarray,
    values: np.ndarray,
) -> StructuredLatent:
    """Validate, canonically order, and wrap position/value arrays."""
    if not 1 <= resolution <= MAX_RESOLUTION:
        raise ValueError(f"resolution {resolution} outside [1, {MAX_RESOLUTION}]")
    if channels < 1:
        raise ValueError(f"channels must be positive, got {channels}")
    positions = np.asarray(positions)
    values = np.asarray(values, dtype=np.float64)
    if len(positions) == 0:
        raise EmptyInput("voxel set")
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ValueError(f"positions must be (L, 3), got {positions.shape}")
    if values.ndim != 2 or len(values) != len(positions):
        raise ValueError(f"values must be (L, C), got {values.shape}")
    if values.shape[1] != channels:
        raise ChannelMismatch(0, channels, values.shape[1])

    low = positions.min(axis=1)
    high = positions.max(axis=1)
    bad = np.nonzero((low < 0) | (high > resolution - 1))[0]
    if bad.size:
        i = int(bad[0])
        raise OutOfBounds(i, positions[i], resolution)

    keys = _position_keys(positions, resolution)
    order = np.argsort(keys, kind="stable")
    dup = np.nonzero(keys[order[1:]] == keys[order[:-1]])[0]
    if dup.size:
        # the later entry (in input order) of the first colliding pair
        i = int(order[dup[0] + 1])
        raise DuplicatePosition(i, positions[i])

    finite = np.isfinite(values).all(axis=1)
    if not finite.all():
        i = int(np.nonzero(~finite)[0][0])
        raise NonFiniteValue(f"latent vector of entry {i}")

    return StructuredLatent(
        grid_resolution=int(resolution),
        channels=int(channels),
        positions=positions[order].astype(np.int32),
        values=values[order],
    )


def new_structured_latent(resolution: int, channels: int, entries) -> StructuredLatent:
    """Build a structured latent from (position, latent) pairs.

    Entries may arrive in any order; the result is canonically ordered.
    Raises DuplicatePosition / OutOfBounds / ChannelMismatch naming the
    offending entry index.
    """
    entries = list(entries)
    if not entries:
        raise EmptyInput("entries")
    positions = np.empty((len(entries), 3), dtype=np.int64)
    values = np.empty((len(entries), channels), dtype=np.float64)
    for i, (pos, vec) in enumerate(entries):
        vec = np.asarray(vec, dtype=np.float64).ravel()
        if vec.shape[0] != channels:
            raise ChannelMismatch(i, channels, vec.shape[0])
        positions[i] = pos
        values[i] = vec
    return structured_latent_from_arrays(resolution, channels, positions, values)


def init_latent_state(shape: StructuredLatent, seed: int) -> LatentState:
    """Draw i.i.d. standard-normal starting values at time t=1.

    Pure function of (shape, seed): the same pair always yields bit-identical
    values.
    """
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((len(shape), shape.channels))
    return LatentState(base=shape, values=values, time=1.0)


def voxelize_point_cloud(points, resolution: int) -> np.ndarray:
    """Map points in [0, 1]^3 to deduplicated voxel indices.

    Indices are floor(p * N) clamped to [0, N-1], so exact 1.0 coordinates
    land in the last voxel rather than erroring. Callers normalize their
    clouds beforehand. Returns an (M, 3) integer array in canonical order.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise EmptyInput("point cloud")
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (n, 3), got {pts.shape}")
    if not np.isfinite(pts).all():
        raise NonFiniteValue("point cloud")
    idx = np.clip(np.floor(pts * resolution).astype(np.int64), 0, resolution - 1)
    keys = _position_keys(idx, resolution)
    _, first = np.unique(keys, return_index=True)
    unique = idx[np.sort(first)]
    return unique[canonical_permutation(unique)].astype(np.int32)
