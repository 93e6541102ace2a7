import numpy as np
import pytest

from flowguide.errors import (
    ChannelMismatch,
    DuplicatePosition,
    EmptyInput,
    NonFiniteValue,
    OutOfBounds,
)
from flowguide.slat import (
    init_latent_state,
    new_structured_latent,
    voxelize_point_cloud,
)

from conftest import random_latent, random_positions


def test_minimal_instance():
    sl = new_structured_latent(2, 1, [((0, 0, 0), [1.0])])
    assert len(sl) == 1
    assert sl.grid_resolution == 2
    assert sl.channels == 1
    assert sl.positions.tolist() == [[0, 0, 0]]
    assert sl.values.tolist() == [[1.0]]


def test_duplicate_position_names_entry():
    with pytest.raises(DuplicatePosition) as err:
        new_structured_latent(2, 1, [((0, 0, 0), [1.0]), ((1, 0, 0), [2.0]), ((0, 0, 0), [3.0])])
    assert err.value.index == 2


def test_out_of_bounds_names_entry():
    with pytest.raises(OutOfBounds) as err:
        new_structured_latent(4, 1, [((0, 0, 0), [1.0]), ((0, 4, 0), [2.0])])
    assert err.value.index == 1
    with pytest.raises(OutOfBounds):
        new_structured_latent(4, 1, [((-1, 0, 0), [1.0])])


def test_channel_mismatch_names_entry():
    with pytest.raises(ChannelMismatch) as err:
        new_structured_latent(4, 2, [((0, 0, 0), [1.0, 2.0]), ((1, 0, 0), [1.0])])
    assert err.value.index == 1


def test_rejects_empty_and_nonfinite():
    with pytest.raises(EmptyInput):
        new_structured_latent(4, 1, [])
    with pytest.raises(NonFiniteValue):
        new_structured_latent(4, 1, [((0, 0, 0), [np.nan])])


def test_canonical_order_matches_sort_oracle(rng):
    # independent oracle: comparison sort of (z, y, x) keyed tuples
    positions = random_positions(rng, 64, 5000)
    values = rng.standard_normal((5000, 8))
    perm = rng.permutation(5000)
    entries = [(tuple(positions[i]), values[i]) for i in perm]
    sl = new_structured_latent(64, 8, entries)
    assert len(sl) == 5000

    oracle = sorted(range(5000), key=lambda i: (positions[i][2], positions[i][1], positions[i][0]))
    expected_positions = positions[oracle]
    assert np.array_equal(sl.positions, expected_positions)
    expected_values = values[oracle]
    assert np.array_equal(sl.values, expected_values)


def test_init_latent_state_deterministic(rng):
    sl = random_latent(rng)
    a = init_latent_state(sl, seed=7)
    b = init_latent_state(sl, seed=7)
    assert np.array_equal(a.values, b.values)
    assert a.time == 1.0
    assert np.array_equal(a.positions, sl.positions)


def test_init_latent_state_seed_sensitivity(rng):
    sl = random_latent(rng)
    a = init_latent_state(sl, seed=1)
    b = init_latent_state(sl, seed=2)
    assert not np.array_equal(a.values, b.values)


def test_init_latent_state_moments(rng):
    # law-of-large-numbers bounds at L=10000: 4 sigma on mean and std
    sl = random_latent(rng, resolution=32, count=10_000, channels=8)
    state = init_latent_state(sl, seed=5)
    means = state.values.mean(axis=0)
    stds = state.values.std(axis=0)
    assert np.all((-0.05 < means) & (means < 0.05))
    assert np.all((0.95 < stds) & (stds < 1.05))


def test_voxelize_single_point():
    assert voxelize_point_cloud([(0.0, 0.0, 0.0)], 4).tolist() == [[0, 0, 0]]


def test_voxelize_clamps_top_edge():
    assert voxelize_point_cloud([(0.99, 0.99, 0.99)], 4).tolist() == [[3, 3, 3]]
    assert voxelize_point_cloud([(1.0, 1.0, 1.0)], 4).tolist() == [[3, 3, 3]]


def test_voxelize_empty():
    with pytest.raises(EmptyInput):
        voxelize_point_cloud([], 4)


def test_voxelize_cube_surface_hits_all_shell_voxels():
    # oracle: the shell of an 8^3 grid has 8^3 - 6^3 = 296 voxels
    n = 8
    grid = np.linspace(0.0, 1.0, 4 * n + 1)
    u, v = np.meshgrid(grid, grid)
    u, v = u.ravel(), v.ravel()
    zeros, ones = np.zeros_like(u), np.ones_like(u)
    faces = np.concatenate([
        np.stack([zeros, u, v], axis=1),
        np.stack([ones, u, v], axis=1),
        np.stack([u, zeros, v], axis=1),
        np.stack([u, ones, v], axis=1),
        np.stack([u, v, zeros], axis=1),
        np.stack([u, v, ones], axis=1),
    ])
    voxels = voxelize_point_cloud(faces, n)
    assert len(voxels) == n**3 - (n - 2) ** 3 == 296
    on_shell = (voxels == 0) | (voxels == n - 1)
    assert np.all(on_shell.any(axis=1))


def test_equality_is_order_independent(rng):
    positions = random_positions(rng, 8, 12)
    values = rng.standard_normal((12, 3))
    entries = [(tuple(p), v) for p, v in zip(positions, values)]
    a = new_structured_latent(8, 3, entries)
    b = new_structured_latent(8, 3, list(reversed(entries)))
    assert a == b
