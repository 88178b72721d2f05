import numpy as np
import pytest

from extremeseg.geometry import Geometry
from extremeseg.volume import Mask3D, Volume3D


@pytest.fixture
def identity_geom():
    return Geometry(dims=(8, 8, 8), spacing=(1.0, 1.0, 1.0))


def random_orthonormal(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_geometry(rng, max_dim=12):
    dims = tuple(int(d) for d in rng.integers(1, max_dim + 1, size=3))
    spacing = tuple(float(s) for s in rng.uniform(0.3, 5.0, size=3))
    origin = tuple(float(o) for o in rng.uniform(-50, 50, size=3))
    return Geometry(dims=dims, spacing=spacing, origin=origin,
                    direction=random_orthonormal(rng))


def sphere_mask(dims, center, radius, spacing=(1.0, 1.0, 1.0)):
    geometry = Geometry(dims=dims, spacing=spacing)
    grids = np.meshgrid(*[np.arange(d) * s for d, s in zip(dims, spacing)],
                        indexing="ij")
    d2 = sum((g - c * s) ** 2 for g, c, s in zip(grids, center, spacing))
    return Mask3D(geometry=geometry,
                  labels=(d2 <= radius ** 2).astype(np.uint8))


def volume_of(values, spacing=(1.0, 1.0, 1.0), modality="SYNTH"):
    values = np.asarray(values, dtype=np.float32)
    return Volume3D(geometry=Geometry(dims=values.shape, spacing=spacing),
                    values=values, modality=modality)
