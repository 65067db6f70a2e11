"""Grids, images, deformations, warping, inversion, stencils."""

import numpy as np
import pytest

from conftest import pack_spd, random_image, smooth_displacement
from metamorph import field as F
from metamorph import manifold as M
from metamorph.errors import (
    AdmissibilityError,
    GridMismatchError,
    InversionError,
    OutOfDomainError,
)
from metamorph.field import Deformation, GridSpec, ManifoldImage
from metamorph.manifold import ManifoldKind

SPD2 = ManifoldKind.spd(2)
EUC1 = ManifoldKind.euclidean(1)


class TestGridSpec:
    def test_basic(self):
        g = GridSpec((5, 9))
        assert g.spacing == (0.25, 0.125)
        assert g.num_nodes == 45
        assert g.nodes().shape == (5, 9, 2)

    def test_validation(self):
        with pytest.raises(ValueError):
            GridSpec((2, 5))
        with pytest.raises(ValueError):
            GridSpec((5,))

    def test_quadrature_weights_sum_to_volume(self):
        for shape in [(5, 9), (4, 4, 6)]:
            g = GridSpec(shape)
            assert F.integrate(g, np.ones(g.shape)) == pytest.approx(1.0, abs=1e-13)

    def test_quadrature_is_trapezoid(self):
        # exact for per-axis linear functions
        g = GridSpec((7, 11))
        x = g.nodes()
        val = F.integrate(g, 2.0 * x[..., 0] + 3.0 * x[..., 1] + 1.0)
        assert val == pytest.approx(1.0 + 2.5, abs=1e-12)


class TestDeformation:
    def test_boundary_enforced(self):
        g = GridSpec((6, 6))
        u = np.full(g.shape + (2,), 0.01)
        with pytest.raises(AdmissibilityError):
            Deformation(g, u, epsilon=0.1)

    def test_det_bound_enforced(self):
        g = GridSpec((9, 9))
        u = smooth_displacement(g, (0.5, 0.0))  # extreme compression
        with pytest.raises(AdmissibilityError):
            Deformation(g, u, epsilon=0.5)

    def test_identity(self):
        g = GridSpec((5, 5))
        d = Deformation.identity(g)
        assert d.max_displacement() == 0.0
        assert F.is_admissible(d)


class TestWarp:
    def test_identity_exact(self, rng):
        g = GridSpec((9, 9))
        img = random_image(SPD2, g, rng)
        out = F.warp(img, Deformation.identity(g))
        assert np.array_equal(out.values, img.values)

    def test_constant_image_preserved(self, rng):
        g = GridSpec((9, 9))
        vals = np.tile(np.array([1.5, 0.2, 0.9]), g.shape + (1,))
        img = ManifoldImage(g, SPD2, vals)
        defm = Deformation(g, smooth_displacement(g, (0.03, -0.02)), epsilon=0.1)
        out = F.warp(img, defm)
        assert np.max(np.abs(out.values - vals)) < 1e-12

    def test_euclidean_matches_scalar_bilinear(self, rng):
        # independent per-channel bilinear interpolation, naive loops
        g = GridSpec((8, 8))
        kind = ManifoldKind.euclidean(3)
        img = random_image(kind, g, rng)
        defm = Deformation(g, smooth_displacement(g, (0.05, 0.04)), epsilon=0.1)
        out = F.warp(img, defm)
        pos = defm.positions()
        h0, h1 = g.spacing
        expected = np.empty_like(img.values)
        for i in range(8):
            for j in range(8):
                gx, gy = pos[i, j, 0] / h0, pos[i, j, 1] / h1
                i0, j0 = min(int(gx), 6), min(int(gy), 6)
                fx, fy = gx - i0, gy - j0
                expected[i, j] = (
                    (1 - fx) * (1 - fy) * img.values[i0, j0]
                    + fx * (1 - fy) * img.values[i0 + 1, j0]
                    + (1 - fx) * fy * img.values[i0, j0 + 1]
                    + fx * fy * img.values[i0 + 1, j0 + 1]
                )
        assert np.max(np.abs(out.values - expected)) < 1e-12

    def test_out_of_domain_rejected(self, rng):
        g = GridSpec((6, 6))
        img = random_image(EUC1, g, rng)
        with pytest.raises(OutOfDomainError):
            F.sample_image(img, np.array([0.5, 1.2]))

    def test_grid_mismatch(self, rng):
        img = random_image(EUC1, GridSpec((6, 6)), rng)
        with pytest.raises(GridMismatchError):
            F.warp(img, Deformation.identity(GridSpec((7, 7))))

    def test_trilinear_3d(self, rng):
        g = GridSpec((4, 5, 4))
        kind = ManifoldKind.euclidean(2)
        img = random_image(kind, g, rng)
        pos = rng.uniform(0.05, 0.95, size=(20, 3))
        got = F.sample_image(img, pos)
        ref = F.sample_linear(g, img.values, pos)
        assert np.max(np.abs(got - ref)) < 1e-13


class TestL2Distance:
    def test_zero_on_equal(self, rng):
        g = GridSpec((5, 5))
        img = random_image(SPD2, g, rng)
        assert F.l2_distance(img, img) == 0.0

    def test_constant_images(self):
        g = GridSpec((9, 9))
        a = np.tile(np.array([1.0, 0.0, 1.0]), g.shape + (1,))
        b = np.tile(np.array([np.e**2, 0.0, 1.0]), g.shape + (1,))
        d = F.l2_distance(ManifoldImage(g, SPD2, a), ManifoldImage(g, SPD2, b))
        assert d == pytest.approx(2.0, abs=1e-12)

    def test_matches_naive_quadrature(self, rng):
        g = GridSpec((4, 4))
        a = random_image(SPD2, g, rng)
        b = random_image(SPD2, g, rng)
        total = 0.0
        for i in range(4):
            for j in range(4):
                wi = 0.5 if i in (0, 3) else 1.0
                wj = 0.5 if j in (0, 3) else 1.0
                d = M.distance(
                    M.Point(SPD2, a.values[i, j]), M.Point(SPD2, b.values[i, j])
                )
                total += wi * wj * (1 / 3.0) ** 2 * d * d
        assert F.l2_distance(a, b) == pytest.approx(np.sqrt(total), abs=1e-12)

    def test_metric_axioms_on_images(self, rng):
        g = GridSpec((5, 5))
        imgs = [random_image(SPD2, g, rng) for _ in range(3)]
        a, b, c = imgs
        assert F.l2_distance(a, b) == pytest.approx(F.l2_distance(b, a), abs=1e-12)
        assert F.l2_distance(a, c) <= F.l2_distance(a, b) + F.l2_distance(b, c) + 1e-9


class TestInvert:
    def test_identity(self):
        g = GridSpec((7, 7))
        inv = F.invert(Deformation.identity(g))
        assert inv.max_displacement() == 0.0

    def test_shear_roundtrip(self):
        # near-1-D shear with exactly vanishing boundary trace
        g = GridSpec((17, 17))
        x = g.nodes()
        u = np.zeros(g.shape + (2,))
        u[..., 0] = 0.05 * np.sin(np.pi * x[..., 0]) * x[..., 1] * (1 - x[..., 1])
        u[g.boundary_mask()] = 0.0
        defm = Deformation(g, u, epsilon=0.1)
        inv = F.invert(defm)
        pos = np.clip(g.nodes() + inv.displacement, 0, 1)
        residual = inv.displacement + F.sample_linear(g, u, pos)
        assert np.max(np.abs(residual)) <= 1e-8

    def test_random_smooth_roundtrip(self, rng):
        g = GridSpec((17, 17))
        u = smooth_displacement(g, (0.02, -0.015))
        defm = Deformation(g, u, epsilon=0.1)
        inv = F.invert(defm)
        pos = np.clip(g.nodes() + inv.displacement, 0, 1)
        residual = inv.displacement + F.sample_linear(g, u, pos)
        assert np.max(np.abs(residual)) <= 1e-8

    def test_double_inversion_small_field(self):
        # the inverse is node-sampled, so re-inverting carries an O(h^2)
        # interpolation error scaling with the displacement amplitude;
        # at small amplitude the roundtrip meets a tight bound
        g = GridSpec((33, 33))
        u = smooth_displacement(g, (1e-5, -8e-6))
        defm = Deformation(g, u, epsilon=0.1)
        back = F.invert(F.invert(defm))
        assert np.max(np.abs(back.displacement - u)) <= 1e-7

    def test_double_inversion_second_order(self):
        errs = []
        for n in (9, 17, 33):
            g = GridSpec((n, n))
            u = smooth_displacement(g, (0.02, -0.015))
            back = F.invert(F.invert(Deformation(g, u, epsilon=0.1)))
            errs.append(np.max(np.abs(back.displacement - u)))
        assert errs[2] < errs[1] < errs[0]
        assert errs[2] < errs[0] / 8  # roughly h^2

    def test_steep_field_uses_newton_rescue(self):
        g = GridSpec((17, 17))
        u = smooth_displacement(g, (0.09, 0.0))
        defm = Deformation(g, u, epsilon=1e-3, validate=False)
        inv = F.invert(defm)
        pos = np.clip(g.nodes() + inv.displacement, 0, 1)
        residual = inv.displacement + F.sample_linear(g, u, pos)
        assert np.max(np.abs(residual)) <= 1e-8


class TestJacobian:
    def test_identity(self):
        g = GridSpec((6, 6))
        d = Deformation.identity(g)
        assert np.max(np.abs(F.jacobian(d) - np.eye(2))) == 0.0
        assert np.max(np.abs(F.jacobian_det(d) - 1.0)) == 0.0

    def test_affine_exact_interior(self):
        g = GridSpec((9, 9))
        A = np.array([[0.03, 0.01], [-0.02, 0.04]])
        u = np.einsum("ij,...j->...i", A, g.nodes())
        d = Deformation(g, u, validate=False)
        J = F.jacobian(d)
        assert np.max(np.abs(J - (np.eye(2) + A))) < 1e-13

    def test_second_order_convergence(self):
        # analytic displacement with known Jacobian
        def make(n):
            g = GridSpec((n, n))
            x = g.nodes()
            u = np.zeros(g.shape + (2,))
            u[..., 0] = 0.05 * np.sin(2 * x[..., 0]) * np.cos(x[..., 1])
            u[..., 1] = 0.04 * np.cos(x[..., 0]) * np.sin(3 * x[..., 1])
            d = Deformation(g, u, validate=False)
            J = F.jacobian(d)
            exact = np.zeros(g.shape + (2, 2))
            exact[..., 0, 0] = 1 + 0.1 * np.cos(2 * x[..., 0]) * np.cos(x[..., 1])
            exact[..., 0, 1] = -0.05 * np.sin(2 * x[..., 0]) * np.sin(x[..., 1])
            exact[..., 1, 0] = -0.04 * np.sin(x[..., 0]) * np.sin(3 * x[..., 1])
            exact[..., 1, 1] = 1 + 0.12 * np.cos(x[..., 0]) * np.cos(3 * x[..., 1])
            return np.max(np.abs(J - exact))

        e1, e2 = make(17), make(33)
        assert e2 < e1 / 3.0  # close to the factor-4 of O(h^2)


class TestStencils:
    @pytest.mark.parametrize("axis", [0, 1])
    def test_adjoint_identity(self, axis, rng):
        g = GridSpec((9, 12))
        a = rng.normal(size=g.shape)
        b = rng.normal(size=g.shape)
        h = g.spacing[axis]
        lhs = float(np.sum(F.diff_axis(a, axis, h) * b))
        rhs = float(np.sum(a * F.diff_axis_adjoint(b, axis, h)))
        assert lhs == pytest.approx(rhs, abs=1e-11)

    def test_exact_on_quadratics(self):
        g = GridSpec((9, 9))
        x = g.nodes()
        f = 1.0 + 2.0 * x[..., 0] + 3.0 * x[..., 0] ** 2
        d = F.diff_axis(f, 0, g.spacing[0])
        assert np.max(np.abs(d - (2.0 + 6.0 * x[..., 0]))) < 1e-11


class TestResampling:
    def test_image_roundtrip_same_grid(self, rng):
        g = GridSpec((8, 8))
        img = random_image(SPD2, g, rng)
        assert np.array_equal(F.resample_image(img, g).values, img.values)

    def test_displacement_boundary_stays_zero(self, rng):
        g = GridSpec((9, 9))
        coarse = GridSpec((5, 5))
        defm = Deformation(g, smooth_displacement(g, (0.03, 0.02)), epsilon=0.1)
        down = F.resample_displacement(defm, coarse)
        assert np.all(down.displacement[coarse.boundary_mask()] == 0.0)


class TestPositionMapInversion:
    def test_newton_inverse(self, rng):
        g = GridSpec((17, 17))
        u = smooth_displacement(g, (0.06, -0.04))
        node_map = g.nodes() + u
        q = rng.uniform(0.1, 0.9, size=(40, 2))
        p = F.invert_position_map(g, node_map, q)
        back = F.sample_linear(g, node_map, p)
        assert np.max(np.abs(back - q)) < 1e-9
