import numpy as np
import pytest

from metamorph import _kernels
from metamorph.field import GridSpec, ManifoldImage
from metamorph.harness import synth
from metamorph.manifold import ManifoldKind


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_image(kind: ManifoldKind, grid: GridSpec, rng, spread: float = 0.5) -> ManifoldImage:
    vals = synth.random_points(kind, grid.num_nodes, rng, spread=spread)
    return ManifoldImage(grid, kind, vals.reshape(grid.shape + (kind.payload_dim,)))


def smooth_displacement(grid: GridSpec, amplitudes) -> np.ndarray:
    """Interior displacement field with exactly zero boundary rows."""
    bump = synth.interior_bump(grid)
    x = grid.nodes()
    u = np.zeros(grid.shape + (grid.ndim,))
    for ax, amp in enumerate(amplitudes):
        u[..., ax] = amp * bump * (1.0 + 0.3 * np.sin(2.0 * x[..., (ax + 1) % grid.ndim]))
    u[grid.boundary_mask()] = 0.0
    return u


def pack_spd(mats: np.ndarray) -> np.ndarray:
    n = mats.shape[-1]
    return _kernels.sym_pack(mats.reshape(-1, n, n)).reshape(
        mats.shape[:-2] + (n * (n + 1) // 2,)
    )
