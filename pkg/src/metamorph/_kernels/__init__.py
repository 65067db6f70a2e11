"""Geometry kernel backend selection.

The compiled Cython core is used when it is importable; otherwise the
vectorized numpy implementation takes over. ``METAMORPH_BACKEND`` forces
a choice (``compiled`` or ``numpy``), which the benchmark and the
backend-agreement tests rely on.
"""

import os

from . import _numpy

_requested = os.environ.get("METAMORPH_BACKEND", "").strip().lower()

if _requested == "numpy":
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _numpy
        BACKEND = "numpy"

sym_pack = _numpy.sym_pack
sym_unpack = _numpy.sym_unpack
EIG_FLOOR = _numpy.EIG_FLOOR

spd_dist = _impl.spd_dist
spd_log = _impl.spd_log
spd_exp = _impl.spd_exp
spd_tangent_norm = _impl.spd_tangent_norm
spd_min_eig = _impl.spd_min_eig
hyp_dist = _impl.hyp_dist
hyp_log = _impl.hyp_log
hyp_exp = _impl.hyp_exp
hyp_tangent_norm = _impl.hyp_tangent_norm
mink_dot = _numpy.mink_dot


def spd_geodesic(a, b, t):
    return _impl.spd_geodesic(a, b, t)


def hyp_geodesic(x, y, t):
    if x.shape[1] > 8:  # compiled core uses a fixed-size scratch buffer
        return _numpy.hyp_geodesic(x, y, t)
    return _impl.hyp_geodesic(x, y, t)


def backends():
    """All importable backend modules, keyed by name (for benchmarks/tests)."""
    found = {"numpy": _numpy}
    try:
        from . import _core
        found["compiled"] = _core
    except ImportError:
        pass
    return found
