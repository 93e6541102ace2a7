import numpy as np
import pytest

from flowguide.slat import structured_latent_from_arrays


def random_positions(rng, resolution, count):
    """Unique voxel positions, by sampling flat cell indices without replacement."""
    flat = rng.choice(resolution**3, size=count, replace=False)
    x = flat % resolution
    y = (flat // resolution) % resolution
    z = flat // (resolution * resolution)
    return np.stack([x, y, z], axis=1).astype(np.int64)


def random_latent(rng, resolution=16, count=20, channels=4, f32=False):
    positions = random_positions(rng, resolution, count)
    values = rng.standard_normal((count, channels))
    if f32:
        values = values.astype(np.float32).astype(np.float64)
    return structured_latent_from_arrays(resolution, channels, positions, values)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
