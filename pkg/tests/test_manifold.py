"""Geometry layer: closed-form cases, metric properties, point wrappers."""

import numpy as np
import pytest

from metamorph import manifold as M
from metamorph.errors import InvalidPointError, KindMismatchError
from metamorph.harness import synth
from metamorph.manifold import ManifoldKind, Point, Tangent

SPD2 = ManifoldKind.spd(2)
SPD3 = ManifoldKind.spd(3)
HYP2 = ManifoldKind.hyperboloid(2)
EUC3 = ManifoldKind.euclidean(3)


class TestKinds:
    def test_payload_dims(self):
        assert SPD2.payload_dim == 3
        assert SPD3.payload_dim == 6
        assert HYP2.payload_dim == 3
        assert EUC3.payload_dim == 3

    def test_validation(self):
        with pytest.raises(ValueError):
            ManifoldKind.spd(4)
        with pytest.raises(ValueError):
            ManifoldKind.euclidean(0)
        with pytest.raises(ValueError):
            ManifoldKind.hyperboloid(1)

    def test_json_roundtrip(self):
        for kind in (SPD2, SPD3, HYP2, EUC3):
            assert ManifoldKind.from_json(kind.to_json()) == kind


class TestDistance:
    def test_identity_spd(self):
        p = Point(SPD2, [1.0, 0.0, 1.0])
        assert M.distance(p, p) == 0.0

    def test_commuting_closed_form(self):
        # diagonal pair: distance is the norm of the log eigenvalue ratios
        p = Point(SPD2, [1.0, 0.0, 1.0])
        q = Point(SPD2, [np.e**2, 0.0, 1.0])
        assert M.distance(p, q) == pytest.approx(2.0, abs=1e-12)

    def test_hyperboloid_closed_form(self):
        p = Point(HYP2, [1.0, 0.0, 0.0])
        q = Point(HYP2, [np.cosh(1.0), np.sinh(1.0), 0.0])
        assert M.distance(p, q) == pytest.approx(1.0, abs=1e-12)

    def test_kind_mismatch(self):
        with pytest.raises(KindMismatchError):
            M.distance(Point(SPD2, [1, 0, 1]), Point(EUC3, [1, 0, 1]))

    def test_invalid_spd_point(self):
        with pytest.raises(InvalidPointError):
            Point(SPD2, [1.0, 2.0, 1.0])  # det < 0

    def test_invalid_hyperboloid_point(self):
        with pytest.raises(InvalidPointError):
            Point(HYP2, [1.0, 1.0, 0.0])


class TestGeodesics:
    def test_endpoints_exact(self, rng):
        for kind in (SPD2, SPD3, HYP2, EUC3):
            a = synth.random_points(kind, 64, rng)
            b = synth.random_points(kind, 64, rng)
            assert np.array_equal(M.geodesic(kind, a, b, 0.0), a)
            assert np.array_equal(M.geodesic(kind, a, b, 1.0), b)

    def test_commuting_midpoint(self):
        p = Point(SPD2, [1.0, 0.0, 1.0])
        q = Point(SPD2, [np.e**2, 0.0, 1.0])
        mid = M.geodesic_point(p, q, 0.5)
        assert np.allclose(mid.payload, [np.e, 0.0, 1.0], atol=1e-12)

    def test_affinity(self, rng):
        for kind in (SPD2, SPD3, HYP2, EUC3):
            a = synth.random_points(kind, 256, rng)
            b = synth.random_points(kind, 256, rng)
            s = rng.uniform(size=256)
            t = rng.uniform(size=256)
            lhs = M.dist(kind, M.geodesic(kind, a, b, s), M.geodesic(kind, a, b, t))
            rhs = np.abs(s - t) * M.dist(kind, a, b)
            assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_matches_exp_of_scaled_log(self, rng):
        for kind in (SPD2, HYP2):
            a = synth.random_points(kind, 128, rng)
            b = synth.random_points(kind, 128, rng)
            t = rng.uniform(size=128)
            via_exp = M.expmap(kind, a, t[:, None] * M.logmap(kind, a, b))
            assert np.max(np.abs(via_exp - M.geodesic(kind, a, b, t))) < 1e-9

    def test_coincident_shortcut(self):
        p = Point(SPD2, [2.0, 0.3, 1.5])
        assert M.geodesic_point(p, p, 0.7) is p
        assert np.all(M.log_map(p, p).vector == 0.0)


class TestExpLog:
    def test_roundtrip_thousand_pairs(self, rng):
        a = synth.random_points(SPD2, 1000, rng)
        b = synth.random_points(SPD2, 1000, rng)
        back = M.expmap(SPD2, a, M.logmap(SPD2, a, b))
        assert np.max(np.abs(back - b)) <= 1e-9

    def test_euclidean_log_is_difference(self, rng):
        a = rng.normal(size=(10, 3))
        b = rng.normal(size=(10, 3))
        assert np.array_equal(M.logmap(EUC3, a, b), b - a)

    def test_log_norm_is_distance(self, rng):
        for kind in (SPD2, SPD3, HYP2):
            a = synth.random_points(kind, 200, rng)
            b = synth.random_points(kind, 200, rng)
            v = M.logmap(kind, a, b)
            assert np.max(np.abs(M.tangent_norm(kind, a, v) - M.dist(kind, a, b))) < 1e-10

    def test_exp_requires_matching_base(self):
        p = Point(SPD2, [1.0, 0.0, 1.0])
        q = Point(SPD2, [2.0, 0.0, 1.0])
        v = M.log_map(p, q)
        with pytest.raises(ValueError):
            M.exp_map(q, v)

    def test_hyperboloid_tangent_orthogonality(self, rng):
        x = synth.random_points(HYP2, 100, rng)
        y = synth.random_points(HYP2, 100, rng)
        v = M.logmap(HYP2, x, y)
        prod = M._kernels.mink_dot(np.ascontiguousarray(x), np.ascontiguousarray(v))
        assert np.max(np.abs(prod)) < 1e-10
        Tangent(HYP2, x[0], v[0])  # wrapper accepts kernel output


class TestWeightedMean:
    def test_degenerate_weights(self):
        a = Point(SPD2, [1.0, 0.0, 1.0])
        b = Point(SPD2, [3.0, 0.2, 2.0])
        assert M.weighted_pair_mean(a, b, 1.0, 0.0).allclose(a)
        assert M.weighted_pair_mean(a, b, 0.0, 2.0).allclose(b)
        with pytest.raises(ValueError):
            M.weighted_pair_mean(a, b, 0.0, 0.0)

    def test_euclidean_closed_form(self, rng):
        a = rng.normal(size=3)
        b = rng.normal(size=3)
        got = M.weighted_mean(EUC3, a, b, 2.0, 3.0)
        assert np.allclose(got, (2.0 * a + 3.0 * b) / 5.0, atol=1e-14)

    def test_descent_oracle_spd(self, rng):
        # independent check: Riemannian gradient descent on the weighted
        # objective lands on the closed-form mean
        a = synth.random_points(SPD2, 1, rng)[0]
        b = synth.random_points(SPD2, 1, rng)[0]
        w_a, w_b = 2.0, 1.0
        xi = a.copy()
        for _ in range(4000):
            step = w_a * M.logmap(SPD2, xi, a) + w_b * M.logmap(SPD2, xi, b)
            xi = M.expmap(SPD2, xi, 0.2 * step)
        closed = M.weighted_mean(SPD2, a, b, w_a, w_b)
        assert np.max(np.abs(xi - closed)) < 1e-7

    def test_mean_minimizes_objective(self, rng):
        a = synth.random_points(SPD2, 1, rng)[0]
        b = synth.random_points(SPD2, 1, rng)[0]
        w_a, w_b = 1.7, 0.6
        mean = M.weighted_mean(SPD2, a, b, w_a, w_b)

        def objective(x):
            return w_a * M.dist(SPD2, a, x) ** 2 + w_b * M.dist(SPD2, b, x) ** 2

        best = objective(mean)
        for _ in range(100):
            probe = M.expmap(SPD2, mean, synth.random_tangents(SPD2, mean, rng, 1e-3))
            assert objective(probe) >= best - 1e-9


class TestComparisonInequalities:
    def test_cat0_degenerate(self):
        p = Point(SPD2, [1.0, 0.1, 2.0]).payload
        assert abs(M.check_cat0(SPD2, p, p, p, p)) < 1e-12

    def test_cat0_euclidean_identity(self, rng):
        x, y, v, w = (rng.normal(size=(50, 3)) for _ in range(4))
        assert np.min(M.check_cat0(EUC3, x, y, v, w)) >= -1e-9

    def test_cat0_spd_sampling(self, rng):
        pts = [synth.random_points(SPD2, 10000, rng) for _ in range(4)]
        assert np.min(M.check_cat0(SPD2, *pts)) >= -1e-9

    def test_joint_convexity_trivial(self, rng):
        x1 = synth.random_points(SPD2, 20, rng)
        x2 = synth.random_points(SPD2, 20, rng)
        assert np.max(np.abs(M.check_joint_convexity(SPD2, x1, x2, x1, x2, 0.37))) < 1e-9
        y1 = synth.random_points(SPD2, 20, rng)
        y2 = synth.random_points(SPD2, 20, rng)
        assert np.max(np.abs(M.check_joint_convexity(SPD2, x1, x2, y1, y2, 0.0))) < 1e-12

    def test_joint_convexity_spd3_sampling(self, rng):
        pts = [synth.random_points(SPD3, 10000, rng) for _ in range(4)]
        t = rng.uniform(size=10000)
        assert np.min(M.check_joint_convexity(SPD3, *pts, t)) >= -1e-9


class TestMetricAxioms:
    @pytest.mark.parametrize("kind", [SPD2, SPD3, HYP2, EUC3], ids=str)
    def test_axioms(self, kind, rng):
        p = synth.random_points(kind, 2000, rng)
        q = synth.random_points(kind, 2000, rng)
        r = synth.random_points(kind, 2000, rng)
        assert np.max(np.abs(M.dist(kind, p, q) - M.dist(kind, q, p))) < 1e-12
        assert np.max(M.dist(kind, p, p)) < 1e-9
        slack = M.dist(kind, p, q) + M.dist(kind, q, r) - M.dist(kind, p, r)
        assert slack.min() > -1e-9


class TestSpdInvariance:
    def test_congruence(self, rng):
        a = synth.random_points(SPD2, 500, rng)
        b = synth.random_points(SPD2, 500, rng)
        g = np.eye(2) + 0.4 * rng.normal(size=(500, 2, 2))
        ok = np.abs(np.linalg.det(g)) > 0.3
        g = g[ok]
        am = g @ M._kernels.sym_unpack(a[ok]) @ np.swapaxes(g, 1, 2)
        bm = g @ M._kernels.sym_unpack(b[ok]) @ np.swapaxes(g, 1, 2)
        d0 = M.dist(SPD2, a[ok], b[ok])
        d1 = M.dist(SPD2, M._kernels.sym_pack(am), M._kernels.sym_pack(bm))
        assert np.max(np.abs(d0 - d1)) < 1e-9


class TestHalfPlane:
    def test_roundtrip(self, rng):
        z = np.stack([rng.normal(size=50), rng.uniform(0.2, 3.0, size=50)], axis=-1)
        p = M.halfplane_to_hyperboloid(z)
        sheet = M._kernels.mink_dot(np.ascontiguousarray(p), np.ascontiguousarray(p))
        assert np.max(np.abs(sheet + 1.0)) < 1e-12
        back = M.hyperboloid_to_halfplane(p)
        assert np.max(np.abs(back - z)) < 1e-12

    def test_distance_matches_halfplane_formula(self, rng):
        z1 = np.stack([rng.normal(size=50), rng.uniform(0.2, 3.0, size=50)], axis=-1)
        z2 = np.stack([rng.normal(size=50), rng.uniform(0.2, 3.0, size=50)], axis=-1)
        p1 = M.halfplane_to_hyperboloid(z1)
        p2 = M.halfplane_to_hyperboloid(z2)
        got = M.dist(HYP2, p1, p2)
        # classical half-plane distance
        num = (z1[:, 0] - z2[:, 0]) ** 2 + (z1[:, 1] - z2[:, 1]) ** 2
        want = np.arccosh(1.0 + num / (2.0 * z1[:, 1] * z2[:, 1]))
        assert np.max(np.abs(got - want)) < 1e-10

    def test_invalid_halfplane(self):
        with pytest.raises(InvalidPointError):
            M.halfplane_to_hyperboloid(np.array([0.1, -1.0]))
