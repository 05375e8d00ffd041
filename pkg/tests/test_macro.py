"""Macroscopic solver: exact fixed points, linear decay rates, the stress
identity between the stereographic and vector forms, conservation, RK3
order, and the vector-form cross-check on computed trajectories."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sohns.coefficients import ModelParams, assemble_coefficients
from sohns.errors import CflViolation, PoleGaugeExceeded, RangeError
from sohns.geometry import q_tensor, stereo_jacobians, stereo_to_sphere
from sohns.macro import (
    MacroState,
    SolverConfig,
    benchmark_state,
    cross_check_vector_form,
    rhs_phi,
    rhs_psi,
    rhs_rho_hat,
    rhs_velocity,
    run_macro,
    step,
)
from sohns.torus import TorusGrid

COEFFS = assemble_coefficients(ModelParams())
GRID = TorusGrid(dim=2, n=32)


def uniform_state(grid, rho_hat=0.0, phi=0.0, psi=0.0, t=0.0):
    return MacroState(
        grid=grid,
        rho_hat=np.full(grid.shape, rho_hat),
        phi=np.full(grid.shape, phi),
        psi=np.full(grid.shape, psi),
        v=np.zeros((3,) + grid.shape),
        t=t,
    )


def march(state, coeffs, dt, n):
    cfg = SolverConfig(dt=dt, t_end=0.0)
    for _ in range(n):
        state = step(state, coeffs, cfg, dt=dt)
    return state


class TestState:
    def test_shape_validation(self):
        z = np.zeros(GRID.shape)
        with pytest.raises(RangeError):
            MacroState(grid=GRID, rho_hat=np.zeros(5), phi=z, psi=z, v=np.zeros((3,) + GRID.shape))
        with pytest.raises(RangeError):
            MacroState(grid=GRID, rho_hat=z, phi=z, psi=z, v=np.zeros((2,) + GRID.shape))

    def test_omega_is_unit(self):
        st = benchmark_state(GRID)
        assert_allclose(np.sum(st.omega**2, axis=0), 1.0, atol=1e-14)

    def test_rho_positive(self):
        st = benchmark_state(GRID)
        assert np.all(st.rho > 0.0)
        assert_allclose(st.rho, 1.0 + 0.1 * np.cos(GRID.xs[0]), atol=1e-14)


class TestSolverConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"dt": 0.0, "t_end": 1.0},
            {"dt": 1e-3, "t_end": -1.0},
            {"dt": 1e-3, "t_end": 1.0, "cfl_safety": 0.0},
            {"dt": 1e-3, "t_end": 1.0, "output_every": -1},
        ],
    )
    def test_validation(self, kw):
        with pytest.raises(RangeError):
            SolverConfig(**kw)


class TestFixedPoints:
    def test_uniform_rhs_vanishes(self):
        st = uniform_state(GRID, rho_hat=np.log(2.0), phi=0.3, psi=-0.2)
        for rhs in (rhs_rho_hat, rhs_phi, rhs_psi, rhs_velocity):
            assert_allclose(rhs(st, COEFFS), 0.0, atol=1e-15)

    def test_uniform_step_is_exact(self):
        st = uniform_state(GRID, rho_hat=np.log(2.0), phi=0.3, psi=-0.2)
        out = step(st, COEFFS, SolverConfig(dt=1e-3, t_end=1e-3))
        assert_allclose(out.rho_hat, st.rho_hat, atol=1e-15)
        assert_allclose(out.phi, st.phi, atol=1e-15)
        assert_allclose(out.psi, st.psi, atol=1e-15)
        assert_allclose(out.v, 0.0, atol=1e-15)

    def test_transport_free_rhs_vanishes(self):
        # a = 0 kills the director-density coupling, v = 0 the rest
        c0 = assemble_coefficients(ModelParams(a=0.0, b=0.0))
        st = MacroState(
            grid=GRID,
            rho_hat=0.3 * np.cos(GRID.xs[0]),
            phi=np.full(GRID.shape, 0.2),
            psi=np.full(GRID.shape, -0.1),
            v=np.zeros((3,) + GRID.shape),
        )
        assert_allclose(rhs_rho_hat(st, c0), 0.0, atol=1e-15)
        assert_allclose(rhs_phi(st, c0), 0.0, atol=1e-15)
        assert_allclose(rhs_psi(st, c0), 0.0, atol=1e-15)
        assert_allclose(rhs_velocity(st, c0), 0.0, atol=1e-15)


class TestLinearRates:
    @pytest.mark.parametrize("imex,dt", [(True, 5e-3), (False, 2e-3)])
    def test_director_mode_decays_at_gamma_k2(self, imex, dt):
        # a = b = 0 isolates phi_t = gamma Lap phi at small amplitude
        c0 = assemble_coefficients(ModelParams(a=0.0, b=0.0))
        amp = 1e-4
        st = MacroState(
            grid=GRID,
            rho_hat=np.zeros(GRID.shape),
            phi=amp * np.sin(GRID.xs[1]),
            psi=np.zeros(GRID.shape),
            v=np.zeros((3,) + GRID.shape),
        )
        fin, _, _ = run_macro(st, c0, SolverConfig(dt=dt, t_end=0.5, imex=imex))
        rate = -np.log(np.max(np.abs(fin.phi)) / amp) / 0.5
        assert_allclose(rate, c0.gamma, rtol=1e-6)
        assert_allclose(fin.psi, 0.0, atol=1e-13)

    @pytest.mark.parametrize("imex,dt", [(True, 5e-3), (False, 2e-3)])
    def test_velocity_mode_decays_at_stokes_rate(self, imex, dt):
        v = np.zeros((3,) + GRID.shape)
        v[0] = 0.01 * np.sin(GRID.xs[1])
        st = MacroState(
            grid=GRID,
            rho_hat=np.zeros(GRID.shape),
            phi=np.zeros(GRID.shape),
            psi=np.zeros(GRID.shape),
            v=v,
        )
        fin, _, _ = run_macro(st, COEFFS, SolverConfig(dt=dt, t_end=0.5, imex=imex))
        rate = -np.log(np.max(np.abs(fin.v[0])) / 0.01) / 0.5
        assert_allclose(rate, 1.0 / COEFFS.params.reynolds, rtol=1e-6)
        # uniform director stays put: no back-reaction in 2-d
        assert_allclose(fin.phi, 0.0, atol=1e-14)
        assert_allclose(fin.rho_hat, 0.0, atol=1e-14)

    def test_taylor_green_decay_exact(self):
        x1, x2 = GRID.xs[0], GRID.xs[1]
        v = np.stack(
            [
                0.1 * np.cos(x1) * np.sin(x2),
                -0.1 * np.sin(x1) * np.cos(x2),
                np.zeros(GRID.shape),
            ]
        )
        st = MacroState(
            grid=GRID,
            rho_hat=np.zeros(GRID.shape),
            phi=np.zeros(GRID.shape),
            psi=np.zeros(GRID.shape),
            v=v,
        )
        fin, _, _ = run_macro(st, COEFFS, SolverConfig(dt=2e-3, t_end=0.25))
        assert_allclose(fin.v, v * np.exp(-2.0 * 0.25), atol=1e-12)


class TestStressIdentity:
    def test_exponential_form_matches_divergence_form(self):
        # b e^rho_hat G must equal div(rho Q(Omega)) pointwise
        g = TorusGrid(dim=2, n=64)
        x1, x2 = g.xs[0], g.xs[1]
        rho_hat = 0.3 * np.cos(x1) + 0.1 * np.sin(x2)
        phi = 0.2 * np.sin(x1 + x2) + 0.05 * np.cos(x1)
        psi = -0.15 * np.cos(x2) + 0.1 * np.sin(x1)
        om = stereo_to_sphere(phi, psi)
        om_phi, om_psi, _, _, _ = stereo_jacobians(phi, psi)
        g_rho, g_phi, g_psi = g.grad(rho_hat), g.grad(phi), g.grad(psi)
        dot = lambda p, q: np.sum(p * q, axis=0)
        q = q_tensor(om, COEFFS.c4)
        g_vec = np.einsum("ij...,i...->j...", q, g_rho) + COEFFS.c4 * (
            dot(om, g_phi) * om_phi
            + dot(om, g_psi) * om_psi
            + (dot(om_phi, g_phi) + dot(om_psi, g_psi)) * om
        )
        lhs = np.exp(rho_hat) * g_vec
        rhs = np.stack([g.div(np.exp(rho_hat) * q[:, j]) for j in range(3)])
        assert_allclose(lhs, rhs, atol=1e-10)


class TestConservation:
    def test_benchmark_run_conserves_mass(self):
        st = benchmark_state(GRID)
        fin, series, _ = run_macro(st, COEFFS, SolverConfig(dt=2e-3, t_end=0.5))
        m0, m1 = series[0]["mass"], series[-1]["mass"]
        assert abs(m1 - m0) / m0 < 1e-11
        assert series[-1]["div_norm"] < 1e-12
        assert fin.t == pytest.approx(0.5, abs=1e-12)

    def test_director_stays_unit(self):
        st = benchmark_state(GRID)
        fin = march(st, COEFFS, 2e-3, 100)
        assert_allclose(np.sum(fin.omega**2, axis=0), 1.0, atol=1e-14)


class TestAccuracy:
    def test_rk3_order(self):
        st = benchmark_state(GRID)
        T = 0.1

        def err(m, ref):
            fin, _, _ = run_macro(st, COEFFS, SolverConfig(dt=T / m, t_end=T))
            e2 = GRID.sobolev_norm(fin.v - ref.v, 0.0) ** 2
            for f in ("rho_hat", "phi", "psi"):
                e2 += GRID.sobolev_norm(getattr(fin, f) - getattr(ref, f), 0.0) ** 2
            return np.sqrt(e2)

        ref, _, _ = run_macro(st, COEFFS, SolverConfig(dt=T / 320, t_end=T))
        errs = [err(m, ref) for m in (20, 40, 80)]
        orders = np.log2([errs[0] / errs[1], errs[1] / errs[2]])
        assert np.all(orders > 2.8)


class TestCrossCheck:
    def trajectory(self, dt):
        s0 = march(benchmark_state(GRID), COEFFS, dt, 5)
        s1 = march(s0, COEFFS, dt, 1)
        s2 = march(s1, COEFFS, dt, 1)
        return s0, s1, s2

    def test_uniform_residuals_vanish(self):
        states = [
            uniform_state(GRID, rho_hat=0.1, phi=0.2, psi=-0.3, t=t) for t in (0.0, 1e-3, 2e-3)
        ]
        res = cross_check_vector_form(*states, COEFFS)
        for val in res.values():
            assert val < 1e-12

    def test_residuals_shrink_second_order(self):
        # the vector form shares no algebra with the stereographic solver,
        # so O(dt^2) agreement adjudicates both formulations at once
        coarse = cross_check_vector_form(*self.trajectory(4e-3), COEFFS)
        fine = cross_check_vector_form(*self.trajectory(2e-3), COEFFS)
        for key in ("r_rho", "r_Omega", "r_v"):
            assert coarse[key] < 1e-4
            assert coarse[key] / fine[key] > 3.2

    def test_requires_equispaced_states(self):
        s0, s1, s2 = self.trajectory(2e-3)
        s2_shift = MacroState(
            grid=GRID, rho_hat=s2.rho_hat, phi=s2.phi, psi=s2.psi, v=s2.v, t=s2.t + 1e-3
        )
        with pytest.raises(RangeError):
            cross_check_vector_form(s0, s1, s2_shift, COEFFS)


class TestGuards:
    def test_cfl_violation(self):
        st = benchmark_state(GRID)
        with pytest.raises(CflViolation):
            step(st, COEFFS, SolverConfig(dt=1.0, t_end=1.0))

    def test_explicit_cfl_is_stricter(self):
        st = benchmark_state(GRID)
        cfg = SolverConfig(dt=5e-2, t_end=1.0, imex=False)
        with pytest.raises(CflViolation):
            step(st, COEFFS, cfg)
        step(st, COEFFS, SolverConfig(dt=5e-2, t_end=1.0, imex=True))

    def test_pole_gauge_guard(self):
        st = uniform_state(GRID, phi=3.0)
        with pytest.raises(PoleGaugeExceeded):
            step(st, COEFFS, SolverConfig(dt=1e-3, t_end=1.0, pole_gauge=1.0))


class TestRunMacro:
    def test_endpoint_and_cadence(self):
        st = benchmark_state(GRID)
        fin, series, snaps = run_macro(
            st, COEFFS, SolverConfig(dt=2e-3, t_end=0.1, output_every=10)
        )
        assert fin.t == pytest.approx(0.1, abs=1e-12)
        assert len(series) == len(snaps)
        assert series[0]["t"] == 0.0
        assert series[-1]["t"] == pytest.approx(0.1, abs=1e-12)
        assert len(series) == 6  # t = 0, 0.02, 0.04, 0.06, 0.08, 0.1
        for row in series:
            assert set(row) == {"t", "mass", "energy", "dissipation", "div_norm", "max_w"}

    def test_fractional_final_step(self):
        st = benchmark_state(GRID)
        fin, _, _ = run_macro(st, COEFFS, SolverConfig(dt=3e-3, t_end=0.01))
        assert fin.t == pytest.approx(0.01, abs=1e-12)

    def test_deterministic(self):
        st = benchmark_state(GRID)
        f1, _, _ = run_macro(st, COEFFS, SolverConfig(dt=2e-3, t_end=0.05))
        f2, _, _ = run_macro(st, COEFFS, SolverConfig(dt=2e-3, t_end=0.05))
        assert np.array_equal(f1.rho_hat, f2.rho_hat)
        assert np.array_equal(f1.phi, f2.phi)
        assert np.array_equal(f1.v, f2.v)
