"""Ingestion of raw diffusion-tensor volumes.

The raw format is little-endian float64, six components per voxel (the
upper triangle a11, a12, a13, a22, a23, a33 of the symmetric tensor),
voxels in row-major grid order; the grid shape comes from the caller.
Voxels that are not positive definite are repaired by clamping their
eigenvalues and the repair count is reported.
"""

from __future__ import annotations

import numpy as np

from ..errors import MetamorphError
from ..field import GridSpec, ManifoldImage
from ..manifold import ManifoldKind


class DtiFormatError(MetamorphError, ValueError):
    pass


#: repaired eigenvalues are floored at this fraction of the voxel maximum
EIG_CLAMP_FRACTION = 1e-6


def load_dti_raw(path, shape, project2d: bool = False):
    """Read a raw tensor volume into an SPD image.

    Returns ``(image, repaired_count)``. With ``project2d`` the upper-left
    2x2 block of every tensor is kept (slice view), otherwise the full
    SPD(3) tensors are used.
    """
    shape = tuple(int(s) for s in shape)
    grid = GridSpec(shape)
    count = int(np.prod(shape))
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != count * 6:
        raise DtiFormatError(
            f"file holds {raw.size} float64 values, expected {count * 6} "
            f"for shape {shape} with 6 components per voxel"
        )
    tri = raw.reshape(count, 6)
    mats = np.empty((count, 3, 3))
    mats[:, 0, 0] = tri[:, 0]
    mats[:, 0, 1] = mats[:, 1, 0] = tri[:, 1]
    mats[:, 0, 2] = mats[:, 2, 0] = tri[:, 2]
    mats[:, 1, 1] = tri[:, 3]
    mats[:, 1, 2] = mats[:, 2, 1] = tri[:, 4]
    mats[:, 2, 2] = tri[:, 5]
    if project2d:
        mats = mats[:, :2, :2]
    n = mats.shape[-1]

    w, q = np.linalg.eigh(mats)
    bad = w[:, 0] <= 0.0
    repaired = int(bad.sum())
    if repaired == count:
        raise DtiFormatError("every voxel is degenerate (no positive eigenvalues)")
    if repaired:
        top = w[:, -1]
        fallback = float(top[top > 0.0].max())
        scale = np.where(top > 0.0, top, fallback)
        floor = EIG_CLAMP_FRACTION * scale
        w = np.maximum(w, floor[:, None])
        mats = np.einsum("mij,mj,mkj->mik", q, w, q)

    rows, cols = ([0, 0, 1], [0, 1, 1]) if n == 2 else ([0, 0, 0, 1, 1, 2], [0, 1, 2, 1, 2, 2])
    vals = mats[:, rows, cols].reshape(grid.shape + (-1,))
    return ManifoldImage(grid, ManifoldKind.spd(n), vals), repaired
