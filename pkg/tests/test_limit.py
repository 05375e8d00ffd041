"""Tests for the hydrodynamic-limit harness."""

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sohns.coefficients import ModelParams, assemble_coefficients, vmf_density
from sohns.errors import PoleGaugeExceeded, RangeError, TimeMismatch
from sohns.limit import (
    _restrict_field,
    benchmark_remainder,
    benchmark_velocity_remainder,
    extract_remainder,
    prepare_well_prepared_data,
    resample_macro_state,
    run_convergence_study,
)
from sohns.macro import MacroState, benchmark_state
from sohns.sphere import SphereGrid
from sohns.torus import TorusGrid

COEFFS = assemble_coefficients(ModelParams())
SPHERE = SphereGrid(12)
TORUS = TorusGrid(dim=2, n=8)


def smooth_perturbation(shape, seed=0):
    """A remainder with exactly vanishing mass and current moments."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(shape + (SPHERE.n_modes,)) / (1.0 + SPHERE.l_of_mode) ** 2
    g[..., :4] = 0.0
    return g


class TestPrepare:
    def test_uniform_data_gives_uniform_vmf(self):
        grid = TORUS
        state = MacroState(
            grid=grid,
            rho_hat=np.zeros(grid.shape),
            phi=np.full(grid.shape, 0.3),
            psi=np.full(grid.shape, -0.2),
            v=np.zeros((3,) + grid.shape),
        )
        kin = prepare_well_prepared_data(state, COEFFS, SPHERE, 0.1)
        assert np.max(np.abs(kin.f - kin.f[0, 0])) == 0.0

    def test_prepared_moments_match_closed_forms(self):
        state = benchmark_state(TORUS)
        kin = prepare_well_prepared_data(state, COEFFS, SPHERE, 0.1)
        from sohns.geometry import stereo_to_sphere
        from sohns.kinetic import moments

        mom = moments(kin.f, SPHERE)
        rho0 = np.exp(state.rho_hat)
        omega0 = stereo_to_sphere(state.phi, state.psi)
        assert np.max(np.abs(mom.rho - rho0)) < 1e-8
        assert np.max(np.abs(mom.j - COEFFS.c1 * rho0 * omega0)) < 1e-8

    def test_velocity_and_time_carried(self):
        state = benchmark_state(TORUS)
        kin = prepare_well_prepared_data(state, COEFFS, SPHERE, 0.2)
        assert np.array_equal(kin.v, state.v)
        assert kin.t == state.t
        assert kin.epsilon == 0.2

    def test_pole_gauge_enforced(self):
        state = benchmark_state(TORUS)
        state = replace(state, phi=np.full(TORUS.shape, 200.0))
        with pytest.raises(PoleGaugeExceeded):
            prepare_well_prepared_data(state, COEFFS, SPHERE, 0.1)

    def test_valid_perturbation_scaled_in(self):
        state = benchmark_state(TORUS)
        pert = smooth_perturbation(TORUS.shape)
        base = prepare_well_prepared_data(state, COEFFS, SPHERE, 0.25)
        kin = prepare_well_prepared_data(state, COEFFS, SPHERE, 0.25, perturbation=pert)
        assert_allclose(kin.f - base.f, 0.5 * pert, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("mode", [0, 2])
    def test_moment_carrying_perturbation_rejected(self, mode):
        # mode 0 carries mass, modes 1..3 carry current
        state = benchmark_state(TORUS)
        pert = smooth_perturbation(TORUS.shape)
        pert[..., mode] = 0.05
        with pytest.raises(RangeError):
            prepare_well_prepared_data(state, COEFFS, SPHERE, 0.25, perturbation=pert)

    def test_wrong_shape_rejected(self):
        state = benchmark_state(TORUS)
        with pytest.raises(RangeError):
            prepare_well_prepared_data(
                state, COEFFS, SPHERE, 0.25, perturbation=np.zeros((3, 3))
            )


class TestExtract:
    def test_identical_states_zero_remainder(self):
        state = benchmark_state(TORUS)
        kin = prepare_well_prepared_data(state, COEFFS, SPHERE, 0.1)
        f_R, v_R, phi0 = extract_remainder(kin, state, COEFFS)
        assert np.max(np.abs(f_R)) == 0.0
        assert np.max(np.abs(v_R)) == 0.0
        assert phi0 == 0.0

    def test_known_remainder_recovered(self):
        state = benchmark_state(TORUS)
        pert = smooth_perturbation(TORUS.shape, seed=3)
        kin = prepare_well_prepared_data(state, COEFFS, SPHERE, 0.16, perturbation=pert)
        f_R, v_R, phi0 = extract_remainder(kin, state, COEFFS)
        assert_allclose(f_R, pert, rtol=0, atol=1e-13)
        assert np.max(np.abs(v_R)) == 0.0
        assert phi0 < 1e-12

    def test_phi0_reports_moment_content(self):
        state = benchmark_state(TORUS)
        kin = prepare_well_prepared_data(state, COEFFS, SPHERE, 1.0)
        bumped = replace(kin, f=kin.f + np.eye(1, SPHERE.n_modes, 0).ravel() * 0.25)
        f_R, _, phi0 = extract_remainder(bumped, state, COEFFS)
        # independent quadrature of the mass moment
        expected = float(np.max(np.abs(SPHERE.synth(f_R) @ SPHERE.weights)))
        assert phi0 == pytest.approx(expected, rel=1e-12)
        assert phi0 > 0.1

    def test_time_mismatch_raises(self):
        state = benchmark_state(TORUS)
        kin = prepare_well_prepared_data(state, COEFFS, SPHERE, 0.1)
        with pytest.raises(TimeMismatch):
            extract_remainder(kin, replace(state, t=0.5), COEFFS)

    def test_grid_mismatch_raises(self):
        state = benchmark_state(TORUS)
        kin = prepare_well_prepared_data(state, COEFFS, SPHERE, 0.1)
        other = benchmark_state(TorusGrid(dim=2, n=16))
        with pytest.raises(RangeError):
            extract_remainder(kin, other, COEFFS)


class TestRestriction:
    def test_band_limited_exact(self):
        fine = TorusGrid(dim=2, n=32)
        x1, x2 = fine.xs
        g = 1.0 + 0.3 * np.cos(x1) + 0.2 * np.sin(2.0 * x2) + 0.1 * np.cos(x1 + 3.0 * x2)
        coarse = TorusGrid(dim=2, n=16)
        y1, y2 = coarse.xs
        exact = 1.0 + 0.3 * np.cos(y1) + 0.2 * np.sin(2.0 * y2) + 0.1 * np.cos(y1 + 3.0 * y2)
        assert_allclose(_restrict_field(g, 16), exact, atol=1e-14)

    def test_subsampling_identity_for_low_modes(self):
        fine = TorusGrid(dim=2, n=16)
        x1, x2 = fine.xs
        g = np.cos(2.0 * x1) * np.sin(3.0 * x2)
        assert_allclose(_restrict_field(g, 8), g[::2, ::2], atol=1e-14)

    def test_refinement_rejected(self):
        with pytest.raises(RangeError):
            _restrict_field(np.zeros((8, 8)), 16)

    def test_resample_state_fields_and_time(self):
        fine = TorusGrid(dim=2, n=16)
        state = replace(benchmark_state(fine), t=0.75)
        out = resample_macro_state(state, TORUS)
        assert out.t == 0.75
        assert out.rho_hat.shape == TORUS.shape
        # benchmark fields are single modes, so restriction is subsampling
        assert_allclose(out.phi, state.phi[::2, ::2], atol=1e-14)
        assert_allclose(out.v, state.v[:, ::2, ::2], atol=1e-14)


class TestBenchmarkRemainder:
    def test_f_profile_accepted_by_prepare(self):
        state = benchmark_state(TORUS)
        pert = benchmark_remainder(state, COEFFS, SPHERE)
        kin = prepare_well_prepared_data(state, COEFFS, SPHERE, 0.2, perturbation=pert)
        f_R, _, phi0 = extract_remainder(kin, state, COEFFS)
        assert_allclose(f_R, pert, rtol=0, atol=1e-13)
        assert phi0 < 1e-12

    def test_f_profile_scales_with_amplitude(self):
        state = benchmark_state(TORUS)
        one = benchmark_remainder(state, COEFFS, SPHERE, amplitude=0.2)
        two = benchmark_remainder(state, COEFFS, SPHERE, amplitude=0.4)
        assert_allclose(two, 2.0 * one, rtol=1e-14)

    def test_velocity_profile_solenoidal(self):
        state = benchmark_state(TORUS)
        v_R = benchmark_velocity_remainder(state)
        assert v_R.shape == (3,) + TORUS.shape
        assert TORUS.divergence_norm(v_R) < 1e-13
        assert np.max(np.abs(v_R)) == pytest.approx(0.5)

    def test_velocity_profile_scales_with_amplitude(self):
        state = benchmark_state(TORUS)
        assert_allclose(
            benchmark_velocity_remainder(state, amplitude=1.0),
            2.0 * benchmark_velocity_remainder(state, amplitude=0.5),
            rtol=1e-14,
        )


class TestStudy:
    @pytest.mark.parametrize(
        "eps", [[0.2, 0.1], [0.2, -0.1, 0.05], [0.05, 0.1, 0.2], [0.2, 0.0, 0.1]]
    )
    def test_sweep_validation(self, eps):
        with pytest.raises(RangeError):
            run_convergence_study(eps, COEFFS, SPHERE, t_end=0.01, n_kinetic=8, n_reference=8)

    def test_tiny_study_runs_and_fits(self):
        study = run_convergence_study(
            [0.4, 0.2, 0.1],
            COEFFS,
            SPHERE,
            t_end=0.02,
            dt=2e-3,
            n_kinetic=8,
            n_reference=16,
            output_every=5,
        )
        assert study.epsilons == (0.4, 0.2, 0.1)
        assert all(not r.failed for r in study.runs)
        assert np.isfinite(study.slope)
        assert np.isfinite(study.energy_ratio)
        assert study.slope_band[0] <= study.slope <= study.slope_band[1]
        for run in study.runs:
            assert run.times[0] == 0.0
            assert run.times[-1] == pytest.approx(0.02)
            assert all(np.isfinite(v) for v in run.energy)
        # the pinned O(1) remainder pair enters every run: the initial v_R is
        # the same benchmark mode for all eps, so norm_vR starts identical
        starts = [run.norm_vR[0] for run in study.runs]
        assert starts[0] > 0.1
        assert_allclose(starts, starts[0], rtol=1e-12)

    def test_exactly_prepared_study_has_zero_initial_remainder(self):
        study = run_convergence_study(
            [0.4, 0.2, 0.1],
            COEFFS,
            SPHERE,
            t_end=0.01,
            dt=2e-3,
            n_kinetic=8,
            n_reference=8,
            output_every=5,
            initial_remainder=None,
        )
        for run in study.runs:
            assert run.norm_vR[0] == 0.0
            assert run.norm_fR[0] == 0.0

    def test_duplicate_epsilon_rows_identical(self):
        study = run_convergence_study(
            [0.2, 0.2, 0.1],
            COEFFS,
            SPHERE,
            t_end=0.01,
            dt=2e-3,
            n_kinetic=8,
            n_reference=8,
            output_every=0,
        )
        assert study.runs[0].err_rho == study.runs[1].err_rho
        assert study.runs[0].norm_fR == study.runs[1].norm_fR

    def test_deterministic(self):
        kwargs = dict(
            t_end=0.01, dt=2e-3, n_kinetic=8, n_reference=8, output_every=0
        )
        a = run_convergence_study([0.4, 0.2, 0.1], COEFFS, SPHERE, **kwargs)
        b = run_convergence_study([0.4, 0.2, 0.1], COEFFS, SPHERE, **kwargs)
        assert a.slope == b.slope
        for ra, rb in zip(a.runs, b.runs):
            assert ra == rb

    def test_failed_epsilon_recorded_study_continues(self):
        # the third entry violates the collision-drift step bound
        study = run_convergence_study(
            [0.4, 0.2, 1e-4],
            COEFFS,
            SPHERE,
            t_end=0.01,
            dt=2e-3,
            n_kinetic=8,
            n_reference=8,
            output_every=0,
        )
        assert not study.runs[0].failed
        assert not study.runs[1].failed
        assert study.runs[2].failed
        assert "CflViolation" in study.runs[2].error
        assert np.isfinite(study.slope)
