"""Backend agreement and packing of the geometry kernels."""

import numpy as np
import pytest

from metamorph import _kernels as K
from metamorph.harness import synth
from metamorph.manifold import ManifoldKind

BACKENDS = K.backends()


def rand_spd(count, order, rng):
    return synth.random_points(ManifoldKind.spd(order), count, rng)


def rand_hyp(count, dim, rng):
    return synth.random_points(ManifoldKind.hyperboloid(dim), count, rng)


def test_sym_pack_roundtrip(rng):
    for n in (2, 3):
        a = rand_spd(50, n, rng)
        assert np.array_equal(K.sym_pack(K.sym_unpack(a)), a)
        mats = K.sym_unpack(a)
        assert np.allclose(mats, np.swapaxes(mats, 1, 2))


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("order", [2, 3])
def test_spd_kernels_consistent(name, order, rng):
    impl = BACKENDS[name]
    a = rand_spd(500, order, rng)
    b = rand_spd(500, order, rng)
    d = impl.spd_dist(a, b)
    assert np.all(d >= 0)
    v = impl.spd_log(a, b)
    assert np.max(np.abs(impl.spd_exp(a, v) - b)) < 1e-9
    assert np.max(np.abs(impl.spd_tangent_norm(a, v) - d)) < 1e-10
    t = rng.uniform(size=500)
    g = impl.spd_geodesic(a, b, t)
    gap = impl.spd_dist(a, g) - t * d
    assert np.max(np.abs(gap)) < 1e-10
    assert np.all(impl.spd_min_eig(a) > 0)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_hyp_kernels_consistent(name, rng):
    impl = BACKENDS[name]
    x = rand_hyp(500, 2, rng)
    y = rand_hyp(500, 2, rng)
    d = impl.hyp_dist(x, y)
    v = impl.hyp_log(x, y)
    assert np.max(np.abs(impl.hyp_exp(x, v) - y)) < 1e-9
    assert np.max(np.abs(impl.hyp_tangent_norm(x, v) - d)) < 1e-10
    t = rng.uniform(size=500)
    g = impl.hyp_geodesic(x, y, t)
    gap = impl.hyp_dist(x, g) - t * d
    assert np.max(np.abs(gap)) < 1e-10


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled core not built")
def test_backends_agree(rng):
    np_impl, cy_impl = BACKENDS["numpy"], BACKENDS["compiled"]
    for order in (2, 3):
        a = rand_spd(800, order, rng)
        b = rand_spd(800, order, rng)
        t = rng.uniform(size=800)
        for fn, args in [
            ("spd_dist", (a, b)),
            ("spd_log", (a, b)),
            ("spd_exp", (a, 0.3 * b)),
            ("spd_tangent_norm", (a, b)),
            ("spd_min_eig", (a,)),
            ("spd_geodesic", (a, b, t)),
        ]:
            r_np = getattr(np_impl, fn)(*args)
            r_cy = getattr(cy_impl, fn)(*args)
            scale = 1.0 + np.max(np.abs(r_np))
            assert np.max(np.abs(r_np - r_cy)) < 1e-9 * scale, fn
    x = rand_hyp(800, 2, rng)
    y = rand_hyp(800, 2, rng)
    v = np_impl.hyp_log(x, y)
    t = rng.uniform(size=800)
    for fn, args in [
        ("hyp_dist", (x, y)),
        ("hyp_log", (x, y)),
        ("hyp_exp", (x, v)),
        ("hyp_tangent_norm", (x, v)),
        ("hyp_geodesic", (x, y, t)),
    ]:
        r_np = getattr(np_impl, fn)(*args)
        r_cy = getattr(cy_impl, fn)(*args)
        assert np.max(np.abs(r_np - r_cy)) < 1e-10, fn


def test_read_only_inputs_accepted():
    a = synth.random_points(ManifoldKind.spd(2), 10, np.random.default_rng(0))
    a.setflags(write=False)
    b = a.copy()
    b.setflags(write=False)
    for impl in BACKENDS.values():
        impl.spd_dist(a, b)
