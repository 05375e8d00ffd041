"""Hydrodynamic-limit experiment: well-prepared kinetic runs over an epsilon
sweep, remainder extraction against a single macroscopic reference
trajectory, and the sqrt(eps) rate fit.

The reference is one high-resolution closed-system run; its snapshots are
restricted spectrally to the kinetic grid. All runs in a sweep share dt and
output cadence, so reference and kinetic snapshot times match exactly and no
time interpolation is ever performed.
"""

from dataclasses import dataclass, replace

import numpy as np

from .coefficients import vmf_density
from .diagnostics import energy_functionals_kinetic, weighted_norm
from .errors import (
    CflViolation,
    DegenerateCurrent,
    InvariantViolation,
    NegativeMass,
    PoleGaugeExceeded,
    RangeError,
    TimeMismatch,
)
from .geometry import stereo_to_sphere, w_of
from .kinetic import KineticState, _moment_arrays, moments, run_kinetic
from .macro import MacroState, SolverConfig, benchmark_state, run_macro
from .torus import TorusGrid

__all__ = [
    "ConvergenceStudy",
    "EpsilonRun",
    "benchmark_remainder",
    "benchmark_velocity_remainder",
    "prepare_well_prepared_data",
    "extract_remainder",
    "resample_macro_state",
    "run_convergence_study",
]


@dataclass(frozen=True)
class EpsilonRun:
    """Remainder and moment-error series for one value of epsilon."""

    eps: float
    times: tuple = ()
    norm_vR: tuple = ()
    norm_fR: tuple = ()
    err_rho: tuple = ()
    err_j: tuple = ()
    phi0: tuple = ()
    energy: tuple = ()
    error: str = None

    @property
    def failed(self):
        return self.error is not None

    def sup(self, name):
        return max(getattr(self, name))


@dataclass(frozen=True)
class ConvergenceStudy:
    """Fitted rate and per-epsilon records of one sweep."""

    epsilons: tuple
    runs: tuple
    slope: float
    intercept: float
    r_squared: float
    slope_band: tuple
    slope_j: float
    energy_ratio: float


def _equilibrium_nodes(state, kappa, sphere):
    om_nodes = sphere.omega.reshape((3,) + (1,) * state.grid.dim + (-1,))
    omega = stereo_to_sphere(state.phi, state.psi)
    m = vmf_density(kappa, om_nodes, omega[..., None])
    return np.exp(state.rho_hat)[..., None] * m, omega, om_nodes


def _equilibrium_coeffs(state, kappa, sphere):
    """Coefficients of rho0 M_Omega0 built from a closed-system state."""
    return sphere.analyze(_equilibrium_nodes(state, kappa, sphere)[0])


def benchmark_remainder(macro_state, coeffs, sphere, amplitude=0.2):
    """The pinned initial remainder of the benchmark study.

    The theorem's data class is rho0 M_Omega0 + sqrt(eps) f_R with f_R
    bounded uniformly in eps; a vanishing f_R is a degenerate member whose
    moment error superconverges, so the rate experiment injects this fixed,
    smooth, constraint-compliant profile: amplitude * rho0 M (mu^2 - b1 mu -
    b0), mu = omega . Omega0, with b0, b1 chosen so mass and current moments
    vanish identically in x.
    """
    kappa = coeffs.kappa
    mu_ax = sphere.omega[2]
    m_ax = vmf_density(kappa, sphere.omega, np.array([0.0, 0.0, 1.0])[:, None])
    mom = [float((mu_ax**k * m_ax) @ sphere.weights) for k in range(4)]
    b0, b1 = np.linalg.solve([[mom[0], mom[1]], [mom[1], mom[2]]], [mom[2], mom[3]])
    eq_nodes, omega0, om_nodes = _equilibrium_nodes(macro_state, kappa, sphere)
    mu = np.sum(omega0[..., None] * om_nodes, axis=0)
    return sphere.analyze(amplitude * eq_nodes * (mu * mu - b1 * mu - b0))


def benchmark_velocity_remainder(macro_state, amplitude=0.5):
    """The pinned initial velocity remainder of the benchmark study.

    The data class of the limit theorem carries v^in = v0 + sqrt(eps) v_R
    with v_R solenoidal and bounded uniformly in eps. The velocity remainder
    is the channel through which the sqrt(eps) scale reaches the moments: it
    transports mass at O(sqrt(eps)) relative to the reference, while a
    constraint-compliant f-remainder alone has its moments relaxed to O(eps)
    inside the initial collision layer. One smooth solenoidal mode, chosen to
    see the density gradient of the benchmark datum.
    """
    grid = macro_state.grid
    x2 = grid.xs[-1] if grid.dim > 1 else grid.xs[0]
    v_R = np.zeros((3,) + grid.shape)
    v_R[0] = amplitude * np.cos(x2)
    return v_R


def prepare_well_prepared_data(
    macro_initial, coeffs, sphere, epsilon, perturbation=None, pole_gauge=1e4
):
    """Kinetic initial state f = rho0 M_Omega0 (+ sqrt(eps) remainder), v = v0.

    A supplied perturbation must carry no mass or current moment anywhere:
    those are the constraints the expansion imposes on the initial remainder,
    and a violating one is rejected rather than projected out.
    """
    if np.max(w_of(macro_initial.phi, macro_initial.psi)) > pole_gauge:
        raise PoleGaugeExceeded("macro initial data outside the pole gauge")
    f = _equilibrium_coeffs(macro_initial, coeffs.kappa, sphere)
    if perturbation is not None:
        perturbation = np.asarray(perturbation, dtype=float)
        if perturbation.shape != f.shape:
            raise RangeError(f"perturbation must have shape {f.shape}")
        p0, p1, _ = _moment_arrays(sphere)
        mass = np.abs(perturbation @ p0)
        curr = np.sqrt(np.sum(np.einsum("...m,cm->c...", perturbation, p1) ** 2, axis=0))
        tol = 1e-12 * (1.0 + float(np.max(np.abs(perturbation))))
        if np.max(mass) > tol or np.max(curr) > tol:
            raise RangeError(
                "initial remainder carries mass or current moments; "
                "the expansion requires both to vanish"
            )
        f = f + np.sqrt(epsilon) * perturbation
    return KineticState(
        torus=macro_initial.grid,
        sphere=sphere,
        f=f,
        v=macro_initial.v.copy(),
        epsilon=epsilon,
        t=macro_initial.t,
    )


def extract_remainder(kinetic_state, macro_state, coeffs, eps=None, time_tol=1e-9):
    """(f_R, v_R, phi0_defect) of a kinetic state against the reference.

    f_R = (f - rho0 M_Omega0)/sqrt(eps) as coefficients, v_R likewise;
    phi0_defect is the largest mass-plus-current moment of f_R over the grid,
    the side constraint the expansion assumes. Reported, never enforced.
    """
    eps = kinetic_state.epsilon if eps is None else eps
    if abs(kinetic_state.t - macro_state.t) > time_tol:
        raise TimeMismatch(
            f"kinetic t = {kinetic_state.t} vs reference t = {macro_state.t}"
        )
    if kinetic_state.torus.shape != macro_state.grid.shape:
        raise RangeError("kinetic and reference states live on different grids")
    sphere = kinetic_state.sphere
    root = np.sqrt(eps)
    f_R = (kinetic_state.f - _equilibrium_coeffs(macro_state, coeffs.kappa, sphere)) / root
    v_R = (kinetic_state.v - macro_state.v) / root
    p0, p1, _ = _moment_arrays(sphere)
    mass = np.abs(f_R @ p0)
    curr = np.sqrt(np.sum(np.einsum("...m,cm->c...", f_R, p1) ** 2, axis=0))
    return f_R, v_R, float(np.max(mass) + np.max(curr))


def _restrict_field(field_fine, n_coarse):
    """Spectral restriction of a smooth periodic field to a coarser grid."""
    dim = field_fine.ndim
    n_fine = field_fine.shape[0]
    if n_coarse > n_fine:
        raise RangeError("restriction target must be no finer than the source")
    spec = np.fft.fftn(field_fine)
    keep = np.r_[0 : n_coarse // 2, n_fine - n_coarse // 2 : n_fine]
    for ax in range(dim):
        spec = np.take(spec, keep, axis=ax)
    out = np.fft.ifftn(spec).real
    return out * (n_coarse / n_fine) ** dim


def resample_macro_state(state, torus_coarse):
    """The reference state restricted to the kinetic grid, same time."""
    n_c = torus_coarse.n
    return MacroState(
        grid=torus_coarse,
        rho_hat=_restrict_field(state.rho_hat, n_c),
        phi=_restrict_field(state.phi, n_c),
        psi=_restrict_field(state.psi, n_c),
        v=np.stack([_restrict_field(state.v[c], n_c) for c in range(3)]),
        t=state.t,
    )


def _fit_rate(eps_list, err_list):
    """Least-squares slope of log err vs log eps with a 2-sigma band and R^2."""
    x = np.log(np.asarray(eps_list, dtype=float))
    y = np.log(np.asarray(err_list, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    dof = len(x) - 2
    if dof > 0:
        se = np.sqrt(ss_res / dof / float(np.sum((x - x.mean()) ** 2)))
    else:
        se = 0.0
    return float(slope), float(intercept), r2, (float(slope - 2 * se), float(slope + 2 * se))


_SOLVER_ERRORS = (
    CflViolation,
    NegativeMass,
    InvariantViolation,
    DegenerateCurrent,
    RangeError,
)


def _run_one_epsilon(
    eps, reference_states, coeffs, sphere, config, s, eta0, remainder, v_remainder
):
    initial = prepare_well_prepared_data(
        reference_states[0], coeffs, sphere, eps, perturbation=remainder
    )
    if v_remainder is not None:
        initial = replace(initial, v=initial.v + np.sqrt(eps) * v_remainder)
    _, _, snapshots = run_kinetic(initial, coeffs, config)
    if len(snapshots) != len(reference_states):
        raise TimeMismatch(
            f"{len(snapshots)} kinetic snapshots vs {len(reference_states)} reference"
        )
    torus = initial.torus
    rows = {k: [] for k in ("times", "norm_vR", "norm_fR", "err_rho", "err_j", "phi0", "energy")}
    for snap, ref in zip(snapshots, reference_states):
        f_R, v_R, phi0 = extract_remainder(snap, ref, coeffs, time_tol=config.dt / 2.0)
        omega0 = stereo_to_sphere(ref.phi, ref.psi)
        rho0 = np.exp(ref.rho_hat)
        mom = moments(snap.f, sphere)
        e_kin, _ = energy_functionals_kinetic(
            v_R, f_R, omega0, coeffs.kappa, eps, sphere, torus, s=s, eta0=eta0
        )
        rows["times"].append(snap.t)
        rows["norm_vR"].append(torus.sobolev_norm(v_R, s))
        rows["norm_fR"].append(weighted_norm(f_R, omega0, coeffs.kappa, sphere, torus))
        rows["err_rho"].append(np.sqrt(torus.integrate((mom.rho - rho0) ** 2)))
        rows["err_j"].append(
            np.sqrt(
                torus.integrate(
                    np.sum((mom.j - coeffs.c1 * rho0 * omega0) ** 2, axis=0)
                )
            )
        )
        rows["phi0"].append(phi0)
        rows["energy"].append(e_kin)
    return EpsilonRun(eps=eps, **{k: tuple(map(float, v)) for k, v in rows.items()})


def run_convergence_study(
    epsilons,
    coeffs,
    sphere,
    t_end=0.5,
    dt=2e-3,
    n_kinetic=32,
    n_reference=64,
    output_every=25,
    s=2.0,
    eta0=1.0,
    imex=True,
    macro_initial=None,
    initial_remainder="benchmark",
    remainder_amplitude=0.2,
    velocity_amplitude=0.5,
):
    """The sweep: one reference run, one kinetic run per epsilon, one fit.

    epsilons must be at least three positive values in non-increasing order.
    A failing epsilon is recorded with its error and excluded from the fit;
    the study continues. The fitted slope uses the sup-in-time moment error.

    initial_remainder: "benchmark" shares the pinned O(1) remainder pair
    across the sweep, a constraint-compliant f-profile plus a solenoidal
    velocity mode (the generic member of the limit theorem's data class,
    where the sqrt(eps) rate saturates); None runs exactly prepared data; an
    array is used as the f-remainder with no velocity part. The same
    remainder is reused for every epsilon.
    """
    eps_list = [float(e) for e in epsilons]
    if len(eps_list) < 3:
        raise RangeError("the sweep needs at least three epsilon values")
    if any(e <= 0.0 for e in eps_list):
        raise RangeError("epsilon values must be positive")
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise RangeError("epsilon values must be non-increasing")

    torus_ref = TorusGrid(dim=2, n=n_reference)
    initial_ref = benchmark_state(torus_ref) if macro_initial is None else macro_initial
    config = SolverConfig(dt=dt, t_end=t_end, output_every=output_every, imex=imex)
    _, _, ref_snapshots = run_macro(initial_ref, coeffs, config)

    torus_kin = TorusGrid(dim=2, n=n_kinetic)
    reference_states = [resample_macro_state(st, torus_kin) for st in ref_snapshots]

    v_remainder = None
    if isinstance(initial_remainder, str):
        if initial_remainder != "benchmark":
            raise RangeError(f"unknown initial remainder '{initial_remainder}'")
        remainder = benchmark_remainder(
            reference_states[0], coeffs, sphere, amplitude=remainder_amplitude
        )
        if velocity_amplitude != 0.0:
            v_remainder = benchmark_velocity_remainder(
                reference_states[0], amplitude=velocity_amplitude
            )
    else:
        remainder = initial_remainder

    runs = []
    for eps in eps_list:
        try:
            runs.append(
                _run_one_epsilon(
                    eps,
                    reference_states,
                    coeffs,
                    sphere,
                    config,
                    s,
                    eta0,
                    remainder,
                    v_remainder,
                )
            )
        except _SOLVER_ERRORS as exc:
            runs.append(EpsilonRun(eps=eps, error=f"{type(exc).__name__}: {exc}"))

    good = [r for r in runs if not r.failed]
    if len(good) >= 2:
        slope, intercept, r2, band = _fit_rate(
            [r.eps for r in good], [r.sup("err_rho") for r in good]
        )
        slope_j, _, _, _ = _fit_rate([r.eps for r in good], [r.sup("err_j") for r in good])
        sups = [r.sup("energy") for r in good]
        energy_ratio = max(sups) / min(sups)
    else:
        slope = intercept = r2 = slope_j = energy_ratio = float("nan")
        band = (float("nan"), float("nan"))
    return ConvergenceStudy(
        epsilons=tuple(eps_list),
        runs=tuple(runs),
        slope=slope,
        intercept=intercept,
        r_squared=r2,
        slope_band=band,
        slope_j=slope_j,
        energy_ratio=energy_ratio,
    )
