"""Density axioms, regularizer, pair energy, gradients, diagnostics."""

import numpy as np
import pytest

from conftest import random_image, smooth_displacement
from metamorph import energy as E
from metamorph import field as F
from metamorph.energy import CouplingParams, DensityParams, ModelParams, RegParams
from metamorph.errors import AdmissibilityError
from metamorph.field import Deformation, GridSpec
from metamorph.manifold import ManifoldKind

SPD2 = ManifoldKind.spd(2)


@pytest.fixture
def dp():
    return DensityParams(lam=1.3, mu=0.8)


@pytest.fixture
def params():
    return ModelParams(
        DensityParams(lam=1.0, mu=1.0),
        RegParams(gamma=1e-4, m=3),
        CouplingParams(delta=0.5, epsilon=0.05),
    )


class TestDensityParams:
    def test_defaults(self):
        p = DensityParams(lam=1.0, mu=1.0)
        assert p.beta == pytest.approx(0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            DensityParams(lam=0.0, mu=1.0)
        with pytest.raises(ValueError):
            DensityParams(lam=1.0, mu=1.0, beta=2.0)  # beta > lam

    def test_reg_order_threshold(self):
        RegParams(gamma=1.0, m=3).validate_for_dim(2)
        with pytest.raises(ValueError):
            RegParams(gamma=1.0, m=2).validate_for_dim(2)
        with pytest.warns(UserWarning):
            RegParams(gamma=1.0, m=2, pragmatic=True).validate_for_dim(2)


class TestDensity:
    def test_identity(self, dp):
        assert E.density_W(np.eye(2), dp) == 0.0
        assert np.max(np.abs(E.density_gradient(np.eye(2), dp))) == 0.0

    def test_nonnegative(self, dp, rng):
        A = np.eye(2) + 0.5 * rng.normal(size=(4000, 2, 2))
        A = A[np.linalg.det(A) > 1e-6]
        assert np.min(E.density_W(A, dp)) >= 0.0

    def test_skew_direction_closed_form(self, dp):
        # A = 1 + skew(a): symmetric and trace terms vanish, the
        # determinant penalty evaluates at det = 1 + a^2
        for a in (0.3, 1.0, 2.5):
            A = np.array([[1.0, a], [-a, 1.0]])
            want = dp.beta * (a**2 - np.log1p(a**2))
            assert E.density_W(A, dp) == pytest.approx(want, rel=1e-14)
            assert want > 0.0

    def test_pure_dilation_gradient(self, dp):
        # A = c 1 (n=2): symbolic derivative of all three terms
        for c in (0.7, 1.0, 1.8):
            A = c * np.eye(2)
            want = (
                2 * dp.mu * (c - 1)
                + 2 * (dp.lam - dp.beta) * (c - 1)
                + dp.beta * (c**2 - 1) / c
            ) * np.eye(2)
            got = E.density_gradient(A, dp)
            assert np.max(np.abs(got - want)) < 1e-12

    def test_gradient_matches_fd(self, dp, rng):
        checked = 0
        h = 1e-6
        while checked < 1000:
            A = np.eye(2) + 0.45 * rng.normal(size=(2, 2))
            det = np.linalg.det(A)
            if not 0.2 <= det <= 5.0:
                continue
            g = E.density_gradient(A, dp)
            fd = np.zeros((2, 2))
            for i in range(2):
                for j in range(2):
                    Ap, Am = A.copy(), A.copy()
                    Ap[i, j] += h
                    Am[i, j] -= h
                    fd[i, j] = (E.density_W(Ap, dp) - E.density_W(Am, dp)) / (2 * h)
            assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(fd)))
            checked += 1

    def test_fd_hessian_matches_quadratic_form(self, dp, rng):
        h = 1e-3
        for _ in range(100):
            B = rng.normal(size=(2, 2))
            val = (
                E.density_W(np.eye(2) + h * B, dp) + E.density_W(np.eye(2) - h * B, dp)
            ) / (h * h)
            target = 2.0 * E.quadratic_form(B, dp.lam, dp.mu)
            assert abs(val - target) <= 1e-6 * max(abs(target), 1.0)

    def test_blowup_towards_collapse(self, dp):
        vals = [E.density_W(c * np.eye(2), dp) for c in (1e-2, 1e-4, 1e-6)]
        assert vals[0] < vals[1] < vals[2]

    def test_domain_error(self, dp):
        with pytest.raises(ValueError):
            E.density_W(np.diag([1.0, -1.0]), dp)
        with pytest.raises(ValueError):
            E.density_gradient(np.diag([0.0, 1.0]), dp)

    def test_growth_floor_near_identity(self, dp, rng):
        # W >= mu |A^sym - 1|^2 whenever |A - 1| < 1
        B = rng.normal(size=(5000, 2, 2))
        B *= (rng.uniform(0, 0.99, size=5000) / np.linalg.norm(B, axis=(1, 2)))[:, None, None]
        A = np.eye(2) + B
        A = A[np.linalg.det(A) > 0]
        sym_dev = 0.5 * (A + np.swapaxes(A, 1, 2)) - np.eye(2)
        slack = E.density_W(A, dp) - dp.mu * np.sum(sym_dev**2, axis=(1, 2))
        assert slack.min() >= -1e-12


class TestRegularizer:
    def test_zero_displacement(self):
        g = GridSpec((9, 9))
        assert E.regularizer(np.zeros(g.shape + (2,)), g, RegParams(1.0, 3)) == 0.0

    def test_affine_vanishes(self):
        g = GridSpec((9, 9))
        u = np.einsum("ij,...j->...i", np.array([[0.1, 0.02], [0.03, -0.04]]), g.nodes())
        assert E.regularizer(u, g, RegParams(1.0, 2, pragmatic=True)) < 1e-24
        assert E.regularizer(u, g, RegParams(1.0, 3)) < 1e-24

    def test_cubic_matches_analytic(self):
        # u1 = x1^3: the only nonzero third derivative is 6, so
        # |D^3 u|^2 = 36 and the integral is 36
        vals = []
        for n in (17, 33, 65):
            g = GridSpec((n, n))
            u = np.zeros(g.shape + (2,))
            u[..., 0] = g.nodes()[..., 0] ** 3
            vals.append(E.regularizer(u, g, RegParams(1.0, 3)))
        assert vals[-1] == pytest.approx(36.0, rel=1e-10)

    def test_quadratic_matches_analytic_m2(self):
        g = GridSpec((33, 33))
        x = g.nodes()
        u = np.zeros(g.shape + (2,))
        u[..., 0] = x[..., 0] ** 2 + 2.0 * x[..., 0] * x[..., 1]
        # D^2 u1: (2, 2, 2, 0) over the four ordered index pairs -> 12
        val = E.regularizer(u, g, RegParams(1.0, 2, pragmatic=True))
        assert val == pytest.approx(12.0, rel=1e-10)


class TestPairEnergy:
    def test_zero_at_rest(self, params, rng):
        g = GridSpec((8, 8))
        img = random_image(SPD2, g, rng)
        assert E.pair_energy(img, img, Deformation.identity(g), params) == 0.0

    def test_identity_gives_pure_data_term(self, params, rng):
        g = GridSpec((8, 8))
        a = random_image(SPD2, g, rng)
        b = random_image(SPD2, g, rng)
        val = E.pair_energy(a, b, Deformation.identity(g), params)
        assert val == pytest.approx(
            F.l2_distance(a, b) ** 2 / params.coupling.delta, rel=1e-12
        )

    def test_matches_naive_evaluation(self, params, rng):
        # independent naive loop over nodes for every term
        g = GridSpec((8, 8))
        kind = ManifoldKind.euclidean(2)
        a = random_image(kind, g, rng)
        b = random_image(kind, g, rng)
        u = smooth_displacement(g, (0.03, -0.02))
        defm = Deformation(g, u, epsilon=params.coupling.epsilon)
        got = E.pair_energy(a, b, defm, params)

        w = g.quad_weights()
        jac = F.jacobian(defm)
        elastic = sum(
            w[i, j] * float(E.density_W(jac[i, j], params.density))
            for i in range(8)
            for j in range(8)
        )
        hdens = E.higher_order_density(g, u, params.reg.m)
        reg = params.reg.gamma * sum(
            w[i, j] * hdens[i, j] for i in range(8) for j in range(8)
        )
        warped = F.warp(b, defm)
        data = sum(
            w[i, j] * float(np.sum((a.values[i, j] - warped.values[i, j]) ** 2))
            for i in range(8)
            for j in range(8)
        ) / params.coupling.delta
        assert got == pytest.approx(elastic + reg + data, abs=1e-10)

    def test_inadmissible_rejected(self, params, rng):
        g = GridSpec((9, 9))
        img = random_image(SPD2, g, rng)
        u = smooth_displacement(g, (0.45, 0.0))
        bad = Deformation(g, u, epsilon=params.coupling.epsilon, validate=False)
        with pytest.raises(AdmissibilityError):
            E.pair_energy(img, img, bad, params)


class TestPairEnergyGradient:
    def test_zero_at_rest(self, params, rng):
        g = GridSpec((8, 8))
        img = random_image(SPD2, g, rng)
        grad = E.pair_energy_gradient(img, img, Deformation.identity(g), params)
        assert np.max(np.abs(grad)) < 1e-6

    def test_matches_fd_spd(self, params, rng):
        g = GridSpec((8, 8))
        a = random_image(SPD2, g, rng, spread=0.4)
        b = random_image(SPD2, g, rng, spread=0.4)
        u = smooth_displacement(g, (0.04, -0.03))
        defm = Deformation(g, u, epsilon=params.coupling.epsilon)
        grad = E.pair_energy_gradient(a, b, defm, params)
        step = 1e-5 * g.spacing[0]
        picks = [(i, j, c) for i in range(1, 7) for j in range(1, 7) for c in range(2)]
        rng.shuffle(picks)
        errs, scale = [], []
        for i, j, c in picks[:50]:
            up, um = u.copy(), u.copy()
            up[i, j, c] += step
            um[i, j, c] -= step
            fd = (
                E.pair_energy(a, b, Deformation(g, up, validate=False), params)
                - E.pair_energy(a, b, Deformation(g, um, validate=False), params)
            ) / (2 * step)
            errs.append(abs(grad[i, j, c] - fd))
            scale.append(abs(fd))
        assert max(errs) <= 2e-4 * max(max(scale), 1e-12)

    def test_matches_euclidean_ssd_reference(self, params, rng):
        # independent scalar-image implementation of the data-term
        # gradient: 2/delta * w * (J(phi(x)) - I(x)) * dJ/dpos, with the
        # interpolant's in-cell derivative
        g = GridSpec((9, 9))
        kind = ManifoldKind.euclidean(1)
        a = random_image(kind, g, rng)
        b = random_image(kind, g, rng)
        u = smooth_displacement(g, (0.035, -0.025))
        # keep positions off cell faces so the interpolant is smooth there
        defm = Deformation(g, u, epsilon=params.coupling.epsilon)
        grad = E.pair_energy_gradient(a, b, defm, params)
        pos = defm.positions()
        warped = F.sample_linear(g, b.values, pos)[..., 0]
        dJ = F.interp_jacobian(g, b.values, pos)[..., 0, :]
        ref = (
            2.0
            / params.coupling.delta
            * g.quad_weights()[..., None]
            * (warped - a.values[..., 0])[..., None]
            * dJ
        )
        ref[g.boundary_mask()] = 0.0
        elastic_reg = grad - E._data_term_gradient(a, b, defm, params.coupling.delta)
        elastic_reg[g.boundary_mask()] = 0.0
        data_grad = grad - elastic_reg
        assert np.max(np.abs(data_grad - ref)) < 1e-5

    def test_boundary_rows_zero(self, params, rng):
        g = GridSpec((8, 8))
        a = random_image(SPD2, g, rng)
        b = random_image(SPD2, g, rng)
        defm = Deformation(g, smooth_displacement(g, (0.03, 0.02)), epsilon=0.05)
        grad = E.pair_energy_gradient(a, b, defm, params)
        assert np.all(grad[g.boundary_mask()] == 0.0)


class TestDissipation:
    def test_zero_velocity(self, dp):
        g = GridSpec((9, 9))
        assert E.dissipation(g, np.zeros(g.shape + (2,)), dp, RegParams(1.0, 3)) == 0.0

    def test_rigid_rotation_vanishes(self, dp):
        g = GridSpec((9, 9))
        S = np.array([[0.0, 0.4], [-0.4, 0.0]])
        v = np.einsum("ij,...j->...i", S, g.nodes())
        assert E.dissipation(g, v, dp, RegParams(1.0, 3)) < 1e-24

    def test_polynomial_symbolic_value(self, dp):
        # v = (x1^2, 0): e[v] = [[2 x1, 0], [0, 0]], tr e = 2 x1;
        # L = (lam/2) 4 x1^2 + mu 4 x1^2 + gamma |D^3 v|^2 (= 0)
        vals = []
        for n in (17, 33):
            g = GridSpec((n, n))
            v = np.zeros(g.shape + (2,))
            v[..., 0] = g.nodes()[..., 0] ** 2
            vals.append(E.dissipation(g, v, dp, RegParams(1.0, 3)))
        want = (2.0 * dp.lam + 4.0 * dp.mu) / 3.0
        assert vals[-1] == pytest.approx(want, rel=1e-10)


class TestTaylorResidual:
    def test_zero_displacement(self, dp):
        g = GridSpec((9, 9))
        assert E.taylor_residual(g, np.zeros(g.shape + (2,)), 8, dp) == 0.0

    def test_first_order_decay(self, dp):
        g = GridSpec((17, 17))
        u = smooth_displacement(g, (0.1, -0.06))
        res = {K: E.taylor_residual(g, u, K, dp) for K in (16, 32, 64, 128)}
        for K in (16, 32, 64):
            assert res[2 * K] == pytest.approx(res[K] / 2.0, rel=0.25)

    def test_affine_becomes_exact_quadratic(self, dp):
        # affine u with zero trace-free... the quadratic form is matched
        # exactly in the K -> infinity limit
        g = GridSpec((9, 9))
        A = np.array([[0.05, 0.02], [-0.01, 0.03]])
        u = np.einsum("ij,...j->...i", A, g.nodes())
        assert E.taylor_residual(g, u, 10**6, dp) < 1e-9


class TestThetaDiagnostic:
    def test_identity(self):
        g = GridSpec((9, 9))
        lhs, bound = E.theta_diagnostic(Deformation.identity(g), 0.5, RegParams(1e-4, 3))
        assert lhs == 0.0
        assert bound == pytest.approx(np.sqrt(0.75))

    def test_norm_homogeneity(self):
        g = GridSpec((9, 9))
        u = smooth_displacement(g, (0.02, 0.01))
        l1, _ = E.theta_diagnostic(Deformation(g, u, validate=False), 1.0, RegParams(1e-4, 3))
        l2, _ = E.theta_diagnostic(Deformation(g, 2 * u, validate=False), 1.0, RegParams(1e-4, 3))
        assert l2 == pytest.approx(2 * l1, rel=1e-12)
