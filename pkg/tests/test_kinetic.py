"""Tests for the mean-field kinetic solver."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sohns.coefficients import (
    ModelParams,
    assemble_coefficients,
    compute_c1,
    compute_c4,
    vmf_density,
)
from sohns.errors import (
    CflViolation,
    DegenerateCurrent,
    NegativeMass,
    RangeError,
)
from sohns.geometry import stereo_to_sphere
from sohns.kinetic import (
    KineticState,
    collision_Q,
    force_term,
    moments,
    run_kinetic,
    step_kinetic,
)
from sohns.macro import SolverConfig
from sohns.sphere import SphereGrid
from sohns.torus import TorusGrid

COEFFS = assemble_coefficients(ModelParams())
SPHERE = SphereGrid(12)
TORUS = TorusGrid(dim=2, n=8)


def vmf_coeffs(sphere, rho, omega, kappa=COEFFS.kappa):
    """Coefficients of rho(x) M_Omega(x): the local equilibrium family."""
    rho = np.asarray(rho, dtype=float)
    om_nodes = sphere.omega.reshape((3,) + (1,) * rho.ndim + (-1,))
    m = vmf_density(kappa, om_nodes, np.asarray(omega)[..., None])
    return sphere.analyze(rho[..., None] * m)


def aligned_state(torus, epsilon, rho_amp=0.1):
    """Smooth equilibrium-aligned data: the kinetic twin of benchmark_state."""
    x1, x2 = torus.xs[0], torus.xs[-1]
    rho = 1.0 + rho_amp * np.cos(x1)
    omega = stereo_to_sphere(0.2 * np.sin(x2), 0.1 * np.cos(x1))
    f = vmf_coeffs(SPHERE, rho, omega)
    v = np.zeros((3,) + torus.shape)
    v[0] = 0.05 * np.sin(x2)
    return KineticState(torus=torus, sphere=SPHERE, f=f, v=v, epsilon=epsilon)


def uniform_state(torus, epsilon):
    omega = np.broadcast_to(np.array([0.0, 0.0, 1.0])[:, None, None], (3,) + torus.shape)
    f = vmf_coeffs(SPHERE, np.ones(torus.shape), omega)
    return KineticState(
        torus=torus, sphere=SPHERE, f=f, v=np.zeros((3,) + torus.shape), epsilon=epsilon
    )


class TestState:
    def test_shape_validation(self):
        good = uniform_state(TORUS, 0.1)
        with pytest.raises(RangeError):
            KineticState(
                torus=TORUS, sphere=SPHERE, f=good.f[..., :-1], v=good.v, epsilon=0.1
            )
        with pytest.raises(RangeError):
            KineticState(torus=TORUS, sphere=SPHERE, f=good.f, v=good.v[:2], epsilon=0.1)

    @pytest.mark.parametrize("eps", [0.0, -0.5])
    def test_epsilon_positive(self, eps):
        good = uniform_state(TORUS, 0.1)
        with pytest.raises(RangeError):
            KineticState(torus=TORUS, sphere=SPHERE, f=good.f, v=good.v, epsilon=eps)

    def test_rho_property_matches_quadrature(self):
        state = aligned_state(TORUS, 0.1)
        direct = SPHERE.synth(state.f) @ SPHERE.weights
        assert_allclose(state.rho, direct, rtol=1e-13)


class TestMoments:
    @pytest.mark.parametrize("kappa", [0.5, 1.0, 2.0, 5.0])
    def test_vmf_moments_closed_forms(self, kappa):
        omega = np.array([0.6, -0.48, 0.64])
        omega = omega / np.linalg.norm(omega)
        rho = 1.7
        f = vmf_coeffs(SPHERE, np.array(rho), omega, kappa=kappa)
        mom = moments(f, SPHERE)
        assert_allclose(mom.rho, rho, rtol=1e-12)
        assert_allclose(mom.j, rho * compute_c1(kappa) * omega, atol=1e-12)
        assert_allclose(mom.omega_f, omega, atol=1e-12)
        q_exact = rho * compute_c4(kappa) * (np.outer(omega, omega) - np.eye(3) / 3.0)
        assert_allclose(mom.q_f, q_exact, atol=1e-12)

    def test_stress_coefficient_matches_c4(self):
        # the closure constant the macro stress uses, recovered from moments
        omega = np.array([0.0, 0.6, 0.8])
        f = vmf_coeffs(SPHERE, np.array(2.0), omega)
        mom = moments(f, SPHERE)
        c_tilde = 1.5 * np.einsum("c,cd,d->", omega, mom.q_f, omega) / mom.rho
        assert abs(c_tilde - COEFFS.c4) < 1e-9

    def test_stress_traceless(self):
        state = aligned_state(TORUS, 0.1)
        mom = moments(state.f, SPHERE)
        assert np.max(np.abs(np.trace(mom.q_f, axis1=0, axis2=1))) < 1e-13

    def test_isotropic_raises_degenerate(self):
        f = np.zeros(SPHERE.n_modes)
        f[0] = 1.0
        with pytest.raises(DegenerateCurrent):
            moments(f, SPHERE)


class TestCollision:
    @pytest.mark.parametrize("kappa", [0.5, 1.0, 2.0, 5.0])
    def test_equilibrium_annihilated(self, kappa):
        omega = np.array([0.6, -0.48, 0.64])
        omega = omega / np.linalg.norm(omega)
        f = vmf_coeffs(SPHERE, np.array(2.0), omega, kappa=kappa)
        q = collision_Q(f, kappa, 1.0, SPHERE)
        assert np.max(np.abs(q)) < 1e-8 * 2.0

    def test_equilibrium_field_annihilated(self):
        state = aligned_state(TORUS, 0.1, rho_amp=0.3)
        q = collision_Q(state.f, COEFFS.params.nu, COEFFS.params.d_noise, SPHERE)
        assert np.max(np.abs(q)) < 1e-8 * float(np.min(state.rho))

    def test_mass_row_exactly_zero(self):
        state = aligned_state(TORUS, 0.1)
        q = collision_Q(state.f, COEFFS.params.nu, COEFFS.params.d_noise, SPHERE)
        assert np.all(q[..., 0] == 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_dissipation_randomized(self, seed):
        rng = np.random.default_rng(seed)
        c = rng.standard_normal(SPHERE.n_modes) * 0.3 / (1.0 + SPHERE.l_of_mode) ** 2
        f_nodes = np.exp(SPHERE.synth(c)) * (1.0 + 0.5 * rng.random())
        f = SPHERE.analyze(f_nodes)
        mom = moments(f, SPHERE)
        om_nodes = SPHERE.omega
        m = vmf_density(COEFFS.kappa, om_nodes, mom.omega_f[:, None])
        q_nodes = SPHERE.synth(collision_Q(f, COEFFS.params.nu, COEFFS.params.d_noise, SPHERE))
        diss = float((q_nodes * SPHERE.synth(f) / m) @ SPHERE.weights)
        assert diss <= 1e-12

    def test_dissipation_near_equilibrium(self):
        rng = np.random.default_rng(11)
        pert = SPHERE.synth(rng.standard_normal(SPHERE.n_modes) * 1e-6 / (1.0 + SPHERE.l_of_mode))
        m = vmf_density(1.0, SPHERE.omega, np.array([0.0, 0.0, 1.0])[:, None])
        f = SPHERE.analyze(m * (1.0 + pert))
        mom = moments(f, SPHERE)
        m_f = vmf_density(1.0, SPHERE.omega, mom.omega_f[:, None])
        q_nodes = SPHERE.synth(collision_Q(f, 1.0, 1.0, SPHERE))
        diss = float((q_nodes * SPHERE.synth(f) / m_f) @ SPHERE.weights)
        assert diss <= 1e-12

    def test_nu_zero_is_pure_diffusion(self):
        rng = np.random.default_rng(4)
        f = rng.standard_normal(SPHERE.n_modes) / (1.0 + SPHERE.l_of_mode) ** 2
        q = collision_Q(f, 0.0, 0.7, SPHERE)
        assert_allclose(q, 0.7 * SPHERE.laplace_beltrami(f), rtol=1e-14)

    @pytest.mark.parametrize("nu,d", [(1.0, 0.0), (1.0, -1.0), (-0.5, 1.0)])
    def test_parameter_validation(self, nu, d):
        f = vmf_coeffs(SPHERE, np.array(1.0), np.array([0.0, 0.0, 1.0]))
        with pytest.raises(RangeError):
            collision_Q(f, nu, d, SPHERE)

    def test_overconcentrated_weight_raises(self):
        # at degree 12 the projected equilibrium loses positivity near kappa = 8
        omega = np.array([0.0, 0.0, 1.0])
        f = vmf_coeffs(SPHERE, np.array(1.0), omega, kappa=8.0)
        with pytest.raises(RangeError):
            collision_Q(f, 8.0, 1.0, SPHERE)


class TestForce:
    def test_tangency(self):
        state = aligned_state(TORUS, 0.1)
        force = force_term(state.f, state.v, COEFFS, SPHERE, TORUS)
        om_nodes = SPHERE.omega.reshape((3, 1, 1, -1))
        assert np.max(np.abs(np.sum(force * om_nodes, axis=0))) < 1e-12

    def test_drift_against_finite_differences(self):
        # second-order FD Laplacian of j reproduces the spectral drift term
        torus = TorusGrid(dim=2, n=16)
        x1, x2 = torus.xs
        rho = 1.0 + 0.2 * np.cos(x1)
        omega = stereo_to_sphere(0.3 * np.sin(x2), 0.1 * np.cos(x1 + x2))
        f = vmf_coeffs(SPHERE, rho, omega)
        v = np.zeros((3,) + torus.shape)
        force = force_term(f, v, COEFFS, SPHERE, torus)

        mom = moments(f, SPHERE)
        dx = torus.box / torus.n
        lap_fd = sum(
            (np.roll(mom.j, -1, axis=ax + 1) - 2.0 * mom.j + np.roll(mom.j, 1, axis=ax + 1))
            / dx**2
            for ax in range(2)
        )
        j_norm = np.sqrt(np.sum(mom.j**2, axis=0))
        proj = lap_fd - np.sum(lap_fd * mom.omega_f, axis=0) * mom.omega_f
        drift_fd = COEFFS.params.nu * COEFFS.k0 / j_norm * proj
        om_nodes = SPHERE.omega.reshape((3, 1, 1, -1))
        expect = drift_fd[..., None] - np.sum(drift_fd[..., None] * om_nodes, axis=0) * om_nodes
        rel = np.max(np.abs(force - expect)) / np.max(np.abs(force))
        assert rel < 5e-2


class TestEquilibriumStationarity:
    def test_uniform_equilibrium_stationary_explicit(self):
        state = uniform_state(TORUS, 0.2)
        f0 = state.f.copy()
        config = SolverConfig(dt=1e-3, t_end=0.0, imex=False)
        for _ in range(10):
            state = step_kinetic(state, COEFFS, config)
        assert np.max(np.abs(state.f - f0)) / state.t < 1e-8
        assert np.all(state.v == 0.0)

    def test_uniform_equilibrium_near_stationary_imex(self):
        # the splitting wobbles the equilibrium at its own order, nothing more
        state = uniform_state(TORUS, 0.2)
        f0 = state.f.copy()
        config = SolverConfig(dt=1e-3, t_end=0.0, imex=True)
        for _ in range(10):
            state = step_kinetic(state, COEFFS, config)
        assert np.max(np.abs(state.f - f0)) / state.t < 1e-5


class TestConservation:
    def test_mass_and_divergence(self):
        state = aligned_state(TORUS, 0.1)
        mass0 = TORUS.integrate(state.rho)
        config = SolverConfig(dt=2e-3, t_end=0.0, imex=True)
        for _ in range(200):
            state = step_kinetic(state, COEFFS, config)
        assert abs(TORUS.integrate(state.rho) - mass0) / mass0 < 1e-12
        assert TORUS.divergence_norm(state.v) < 1e-12


class TestFreeEnergy:
    def test_homogeneous_relaxation_monotone(self):
        om_a = stereo_to_sphere(np.full(TORUS.shape, 0.35), np.full(TORUS.shape, -0.2))
        om_b = stereo_to_sphere(np.full(TORUS.shape, -0.4), np.full(TORUS.shape, 0.3))
        ones = np.ones(TORUS.shape)
        f = 0.6 * vmf_coeffs(SPHERE, ones, om_a) + 0.4 * vmf_coeffs(SPHERE, ones, om_b)
        state = KineticState(
            torus=TORUS, sphere=SPHERE, f=f, v=np.zeros((3,) + TORUS.shape), epsilon=0.1
        )
        config = SolverConfig(dt=5e-4, t_end=0.1, imex=True, output_every=50)
        _, series, _ = run_kinetic(state, COEFFS, config)
        energies = [row["energy"] for row in series]
        assert len(energies) >= 3
        assert all(b < a for a, b in zip(energies, energies[1:]))


class TestAccuracy:
    def test_temporal_order_three(self):
        base = aligned_state(TORUS, 0.5)
        t_end = 0.05

        def march(n_steps):
            state = base
            config = SolverConfig(dt=t_end / n_steps, t_end=0.0, imex=True)
            for _ in range(n_steps):
                state = step_kinetic(state, COEFFS, config)
            return state

        ref = march(160)
        errors = []
        for n in (10, 20, 40):
            s = march(n)
            err_f = np.sqrt(TORUS.integrate(np.sum((s.f - ref.f) ** 2, axis=-1)))
            err_v = np.sqrt(TORUS.integrate(np.sum((s.v - ref.v) ** 2, axis=0)))
            errors.append((err_f, err_v))
        for i in range(2):
            for k in range(2):
                order = np.log2(errors[k][i] / errors[k + 1][i])
                assert order > 2.8


class TestEpsilonSweep:
    @pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
    def test_stable_at_fixed_dt(self, eps):
        state = aligned_state(TORUS, eps)
        config = SolverConfig(dt=2e-3, t_end=0.0, imex=True)
        for _ in range(25):
            state = step_kinetic(state, COEFFS, config)
        assert np.all(np.isfinite(state.f))
        assert np.min(state.rho) > 0.0


class TestGuards:
    def test_cfl_violation(self):
        state = aligned_state(TORUS, 0.1)
        with pytest.raises(CflViolation):
            step_kinetic(state, COEFFS, SolverConfig(dt=1.0, t_end=0.0))

    def test_explicit_cfl_stricter(self):
        state = aligned_state(TORUS, 0.1)
        step_kinetic(state, COEFFS, SolverConfig(dt=5e-3, t_end=0.0, imex=True))
        with pytest.raises(CflViolation):
            step_kinetic(state, COEFFS, SolverConfig(dt=5e-3, t_end=0.0, imex=False))

    def test_negative_mass(self):
        x1 = TORUS.xs[0]
        rho = 1.0 + 1.05 * np.cos(x1)
        omega = np.broadcast_to(
            np.array([0.0, 0.0, 1.0])[:, None, None], (3,) + TORUS.shape
        )
        f = vmf_coeffs(SPHERE, rho, omega)
        state = KineticState(
            torus=TORUS, sphere=SPHERE, f=f, v=np.zeros((3,) + TORUS.shape), epsilon=0.1
        )
        with pytest.raises(NegativeMass):
            step_kinetic(state, COEFFS, SolverConfig(dt=1e-4, t_end=0.0))


class TestRunKinetic:
    def test_endpoint_and_cadence(self):
        state = aligned_state(TORUS, 0.1)
        config = SolverConfig(dt=2e-3, t_end=0.02, imex=True, output_every=5)
        final, series, snapshots = run_kinetic(state, COEFFS, config)
        assert final.t == pytest.approx(0.02, abs=1e-14)
        assert len(series) == 3
        assert len(snapshots) == 3
        assert set(series[0]) == {"t", "mass", "energy", "dissipation", "div_norm", "max_w"}

    def test_series_gauge_matches_stereographic_w(self):
        # W = 2/(1 - Omega_f3): the gauge of the generating chart data, finite
        # even where Omega_f crosses the south pole (the chart-safe one)
        from sohns.geometry import w_of
        from sohns.kinetic import _series_row

        state = aligned_state(TORUS, 0.1)
        config = SolverConfig(dt=2e-3, t_end=0.02, imex=True)
        x1, x2 = TORUS.xs[0], TORUS.xs[-1]
        w_true = np.max(w_of(0.2 * np.sin(x2), 0.1 * np.cos(x1)))
        row = _series_row(state, COEFFS, config)
        assert np.isfinite(row["max_w"])
        assert row["max_w"] == pytest.approx(w_true, rel=1e-6)

    def test_fractional_final_step(self):
        state = aligned_state(TORUS, 0.1)
        config = SolverConfig(dt=3e-3, t_end=0.01, imex=True)
        final, _, _ = run_kinetic(state, COEFFS, config)
        assert final.t == pytest.approx(0.01, abs=1e-12)

    def test_deterministic(self):
        config = SolverConfig(dt=2e-3, t_end=0.01, imex=True, output_every=2)
        f_a, s_a, _ = run_kinetic(aligned_state(TORUS, 0.1), COEFFS, config)
        f_b, s_b, _ = run_kinetic(aligned_state(TORUS, 0.1), COEFFS, config)
        assert np.array_equal(f_a.f, f_b.f)
        assert np.array_equal(f_a.v, f_b.v)
        assert s_a == s_b
