"""Macroscopic alignment-fluid solver in stereographic variables.

Unknowns on the periodic torus: rho_hat = ln rho (positivity for free),
the stereographic pair (phi, psi) representing the unit director Omega,
and the solenoidal velocity v. The right-hand sides below are the
reformulated system; ``cross_check_vector_form`` re-evaluates the original
vector-form equations along a computed trajectory, so the two formulations
police each other.

Time integration is RK3 with exact integrating factors for the three
Laplacian terms (gamma on phi/psi, 1/Re on v); rho_hat has no diffusion
and rides along with factor one.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import CflViolation, InvariantViolation, PoleGaugeExceeded, RangeError
from .geometry import q_tensor, stereo_jacobians, stereo_to_sphere, tangential_projector

__all__ = [
    "MacroState",
    "SolverConfig",
    "benchmark_state",
    "rhs_rho_hat",
    "rhs_phi",
    "rhs_psi",
    "rhs_velocity",
    "step",
    "run_macro",
    "cross_check_vector_form",
]


@dataclass(frozen=True)
class MacroState:
    """One snapshot: grid plus the four unknowns at time t."""

    grid: object
    rho_hat: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        shape = self.grid.shape
        for name in ("rho_hat", "phi", "psi"):
            if np.shape(getattr(self, name)) != shape:
                raise RangeError(f"{name} must have grid shape {shape}")
        if np.shape(self.v) != (3,) + shape:
            raise RangeError(f"v must have shape {(3,) + shape}")

    @property
    def omega(self):
        """Unit director reconstructed from the stereographic pair."""
        return stereo_to_sphere(self.phi, self.psi)

    @property
    def rho(self):
        return np.exp(self.rho_hat)


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    cfl_safety: float = 0.9
    imex: bool = True
    output_every: int = 0
    pole_gauge: float = 1e4
    series_sobolev_s: float = 2.0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise RangeError("dt must be positive")
        if self.t_end < 0.0:
            raise RangeError("t_end must be >= 0")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise RangeError("cfl_safety must be in (0, 1]")
        if self.output_every < 0:
            raise RangeError("output_every must be >= 0")


def benchmark_state(grid):
    """Default smooth initial data: weak density wave, gentle director tilt,
    one solenoidal velocity mode."""
    x1, x2 = grid.xs[0], grid.xs[-1] if grid.dim > 1 else grid.xs[0]
    rho_hat = np.log(1.0 + 0.1 * np.cos(x1))
    phi = 0.2 * np.sin(x2)
    psi = 0.1 * np.cos(x1)
    v = np.zeros((3,) + grid.shape)
    v[0] = 0.05 * np.sin(x2)
    return MacroState(grid=grid, rho_hat=rho_hat, phi=phi, psi=psi, v=v, t=0.0)


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


def _strain_couplings(grid, v, omega, om_phi, om_psi, lam_tilde):
    """Omega_phi . (lam S + A) Omega and the psi counterpart.

    dv[i, j] = d_i v_j, S = (dv + dv^T)/2, A = (dv - dv^T)/2.
    """
    dv = grid.grad(v)  # (i, j, ...) = d_i v_j
    B = 0.5 * (lam_tilde + 1.0) * dv + 0.5 * (lam_tilde - 1.0) * dv.swapaxes(0, 1)
    b_omega = np.einsum("ij...,j...->i...", B, omega)
    return (
        np.sum(om_phi * b_omega, axis=0),
        np.sum(om_psi * b_omega, axis=0),
    )


def _assemble_fields(state, coeffs):
    """Everything the four right-hand sides share."""
    grid = state.grid
    phi, psi = state.phi, state.psi
    w = 1.0 + phi * phi + psi * psi
    omega = stereo_to_sphere(phi, psi)
    om_phi, om_psi, _, _, _ = stereo_jacobians(phi, psi)
    g_rho = grid.grad(state.rho_hat)
    g_phi = grid.grad(phi)
    g_psi = grid.grad(psi)
    return grid, w, omega, om_phi, om_psi, g_rho, g_phi, g_psi


def _rhs_all(state, coeffs, include_diffusion=True):
    """(d_t rho_hat, d_t phi, d_t psi, d_t v) with nonlinearities dealiased.

    With include_diffusion=False the gamma and 1/Re Laplacians are left out
    (the time stepper integrates them exactly in Fourier space).
    """
    grid, w, omega, om_phi, om_psi, g_rho, g_phi, g_psi = _assemble_fields(state, coeffs)
    a, kappa, gamma = coeffs.params.a, coeffs.kappa, coeffs.gamma
    re = coeffs.params.reynolds
    v = state.v

    u_adv = a * coeffs.c1 * omega + v
    v_adv = a * coeffs.c2 * omega + v

    dot = lambda p, q: np.sum(p * q, axis=0)

    r_rho = -dot(u_adv, g_rho) - a * coeffs.c1 * (dot(om_phi, g_phi) + dot(om_psi, g_psi))

    coup_phi, coup_psi = _strain_couplings(grid, v, omega, om_phi, om_psi, coeffs.lambda_tilde)
    gp2, gs2, gps = dot(g_phi, g_phi), dot(g_psi, g_psi), dot(g_phi, g_psi)

    h_phi = (
        (a / (4.0 * kappa)) * w * w * dot(om_phi, g_rho)
        - 2.0 * gamma * dot(g_rho, g_phi)
        + (2.0 * gamma * state.phi / w) * gp2
        + (4.0 * gamma * state.psi / w) * gps
        - (2.0 * gamma * state.phi / w) * gs2
        - 0.25 * w * w * coup_phi
    )
    h_psi = (
        (a / (4.0 * kappa)) * w * w * dot(om_psi, g_rho)
        - 2.0 * gamma * dot(g_rho, g_psi)
        - (2.0 * gamma * state.psi / w) * gp2
        + (4.0 * gamma * state.phi / w) * gps
        + (2.0 * gamma * state.psi / w) * gs2
        - 0.25 * w * w * coup_psi
    )
    r_phi = -dot(v_adv, g_phi) - h_phi
    r_psi = -dot(v_adv, g_psi) - h_psi

    # orientational stress: G = grad(rho_hat).Q + c4[(Omega.grad phi)Omega_phi
    #   + (Omega.grad psi)Omega_psi + (Omega_phi.grad phi + Omega_psi.grad psi)Omega]
    q = q_tensor(omega, coeffs.c4)
    g_vec = (
        np.einsum("ij...,i...->j...", q, g_rho)
        + coeffs.c4
        * (
            dot(omega, g_phi) * om_phi
            + dot(omega, g_psi) * om_psi
            + (dot(om_phi, g_phi) + dot(om_psi, g_psi)) * omega
        )
    )
    dv = grid.grad(v)
    v_dot_grad_v = np.einsum("i...,ij...->j...", v, dv)
    r_v = -v_dot_grad_v - (coeffs.params.b / re) * np.exp(state.rho_hat) * g_vec

    r_rho = grid.dealias(r_rho)
    r_phi = grid.dealias(r_phi)
    r_psi = grid.dealias(r_psi)
    r_v = grid.leray_project(grid.dealias(r_v))

    if include_diffusion:
        r_phi = r_phi + gamma * grid.laplacian(state.phi)
        r_psi = r_psi + gamma * grid.laplacian(state.psi)
        r_v = r_v + grid.laplacian(v) / re
    return r_rho, r_phi, r_psi, r_v


def rhs_rho_hat(state, coeffs):
    """-U.grad(rho_hat) - a c1 (Omega_phi.grad phi + Omega_psi.grad psi)."""
    return _rhs_all(state, coeffs)[0]


def rhs_phi(state, coeffs):
    """-V.grad(phi) - H_phi, every term of the reformulation present."""
    return _rhs_all(state, coeffs)[1]


def rhs_psi(state, coeffs):
    """-V.grad(psi) - H_psi (the strain coupling contracts with Omega_psi)."""
    return _rhs_all(state, coeffs)[2]


def rhs_velocity(state, coeffs):
    """Leray-projected (1/Re)(-Re v.grad v + Lap v - b e^{rho_hat} G)."""
    return _rhs_all(state, coeffs)[3]


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


def _decay(grid, field, coef, tau):
    """Exact heat semigroup e^{coef tau Lap} applied per mode."""
    if coef == 0.0 or tau == 0.0:
        return field
    return grid.ifft(grid.fft(field) * np.exp(-coef * tau * grid.k2))


def _apply_semigroup(state_tuple, grid, coeffs, tau, imex):
    if not imex:
        return state_tuple
    r, p, s, v = state_tuple
    gamma = coeffs.gamma
    re = coeffs.params.reynolds
    return (
        r,
        _decay(grid, p, gamma, tau),
        _decay(grid, s, gamma, tau),
        _decay(grid, v, 1.0 / re, tau),
    )


def _check_cfl(state, coeffs, config):
    grid = state.grid
    omega = state.omega
    a = coeffs.params.a
    u_max = np.max(np.linalg.norm(a * coeffs.c1 * omega + state.v, axis=0))
    v_max = np.max(np.linalg.norm(a * coeffs.c2 * omega + state.v, axis=0))
    dx = grid.box / grid.n
    bound = dx / max(u_max, v_max, 1e-14)
    if not config.imex:
        d = grid.dim
        re = coeffs.params.reynolds
        bound = min(bound, dx * dx / (2.0 * d * max(coeffs.gamma, 1e-14)), re * dx * dx / (2.0 * d))
    if config.dt > config.cfl_safety * bound:
        raise CflViolation(
            f"dt = {config.dt} exceeds {config.cfl_safety} * {bound:.3e} "
            f"(advective bound at t = {state.t})"
        )


def step(state, coeffs, config, dt=None):
    """One RK3 step with exact diffusion factors; invariants re-checked."""
    dt = config.dt if dt is None else dt
    _check_cfl(state, coeffs, config)
    grid = state.grid
    imex = config.imex

    def rhs(tup, t):
        st = MacroState(grid=grid, rho_hat=tup[0], phi=tup[1], psi=tup[2], v=tup[3], t=t)
        return _rhs_all(st, coeffs, include_diffusion=not imex)

    u0 = (state.rho_hat, state.phi, state.psi, state.v)
    k1 = rhs(u0, state.t)

    stage2 = tuple(u + 0.5 * dt * k for u, k in zip(u0, k1))
    stage2 = _apply_semigroup(stage2, grid, coeffs, 0.5 * dt, imex)
    k2 = rhs(stage2, state.t + 0.5 * dt)

    e_full = _apply_semigroup(u0, grid, coeffs, dt, imex)
    ek1_full = _apply_semigroup(k1, grid, coeffs, dt, imex)
    ek2_half = _apply_semigroup(k2, grid, coeffs, 0.5 * dt, imex)
    stage3 = tuple(
        ef - dt * e1 + 2.0 * dt * e2 for ef, e1, e2 in zip(e_full, ek1_full, ek2_half)
    )
    k3 = rhs(stage3, state.t + dt)

    new = tuple(
        ef + dt / 6.0 * (e1 + 4.0 * e2 + k)
        for ef, e1, e2, k in zip(e_full, ek1_full, ek2_half, k3)
    )
    v_new = grid.leray_project(new[3])
    out = MacroState(
        grid=grid, rho_hat=new[0], phi=new[1], psi=new[2], v=v_new, t=state.t + dt
    )

    gauge = np.max(out.phi**2 + out.psi**2)
    if gauge > config.pole_gauge:
        raise PoleGaugeExceeded(
            f"max(phi^2+psi^2) = {gauge:.3e} above {config.pole_gauge:.1e} at t = {out.t}"
        )
    div = grid.divergence_norm(out.v)
    if div > 1e-10:
        raise InvariantViolation(f"velocity divergence {div:.3e} after step at t = {out.t}")
    return out


def run_macro(state, coeffs, config):
    """March to t_end; returns (final state, series rows, snapshots).

    Series rows are dicts (t, mass, energy, dissipation, div_norm, max_w)
    recorded at the output cadence and at both endpoints; snapshots are the
    states at those times.
    """
    from .diagnostics import energy_functionals_macro

    grid = state.grid

    def series_row(st):
        e_tot, d_tot = energy_functionals_macro(st, coeffs, config.series_sobolev_s)
        return {
            "t": st.t,
            "mass": grid.integrate(np.exp(st.rho_hat)),
            "energy": e_tot,
            "dissipation": d_tot,
            "div_norm": grid.divergence_norm(st.v),
            "max_w": float(np.max(1.0 + st.phi**2 + st.psi**2)),
        }

    n_steps = int(np.floor((config.t_end - state.t) / config.dt + 1e-12))
    remainder = config.t_end - state.t - n_steps * config.dt

    series = [series_row(state)]
    snapshots = [state]
    for i in range(n_steps):
        state = step(state, coeffs, config)
        if config.output_every and (i + 1) % config.output_every == 0 and i != n_steps - 1:
            series.append(series_row(state))
            snapshots.append(state)
    if remainder > 1e-12:
        state = step(state, coeffs, config, dt=remainder)
    if state.t != snapshots[-1].t:
        series.append(series_row(state))
        snapshots.append(state)
    return state, series, snapshots


# ---------------------------------------------------------------------------
# vector-form cross-check
# ---------------------------------------------------------------------------


def cross_check_vector_form(prev, mid, nxt, coeffs):
    """Residuals of the original vector-form system on a computed trajectory.

    Central time stencils over (prev, mid, nxt) and spectral space
    derivatives; the director equation is evaluated with Omega reconstructed
    pointwise, so this path shares no algebra with the stereographic
    right-hand sides. Expected O(dt^2 + spectral truncation).
    """
    if not (abs((mid.t - prev.t) - (nxt.t - mid.t)) < 1e-12):
        raise RangeError("cross check needs equispaced states")
    grid = mid.grid
    dt = mid.t - prev.t
    a, kappa, gamma = coeffs.params.a, coeffs.kappa, coeffs.gamma
    re = coeffs.params.reynolds

    rho_p, rho_m, rho_n = np.exp(prev.rho_hat), np.exp(mid.rho_hat), np.exp(nxt.rho_hat)
    om_p, om_m, om_n = prev.omega, mid.omega, nxt.omega
    v_m = mid.v

    # mass: d_t rho + div(rho U)
    u_adv = a * coeffs.c1 * om_m + v_m
    r_rho = (rho_n - rho_p) / (2.0 * dt) + grid.div(rho_m * u_adv)

    # director: rho d_t Omega + rho (V.grad)Omega + (a/kappa) P grad rho
    #           - gamma P Lap(rho Omega) - rho P (lam S + A) Omega
    v_adv = a * coeffs.c2 * om_m + v_m
    dt_omega = (om_n - om_p) / (2.0 * dt)
    grad_om = np.stack([grid.grad(om_m[j]) for j in range(3)], axis=1)  # (i, j, ...)
    conv = np.einsum("i...,ij...->j...", v_adv, grad_om)
    lap_rho_om = np.stack([grid.laplacian(rho_m * om_m[j]) for j in range(3)])
    dv = grid.grad(v_m)
    lam = coeffs.lambda_tilde
    B = 0.5 * (lam + 1.0) * dv + 0.5 * (lam - 1.0) * dv.swapaxes(0, 1)
    b_omega = np.einsum("ij...,j...->i...", B, om_m)
    r_omega = (
        rho_m * dt_omega
        + rho_m * conv
        + (a / kappa) * tangential_projector(om_m, grid.grad(rho_m))
        - gamma * tangential_projector(om_m, lap_rho_om)
        - rho_m * tangential_projector(om_m, b_omega)
    )

    # velocity: Leray[Re(d_t v + v.grad v) - Lap v + b div(rho Q(Omega))]
    dt_v = (nxt.v - prev.v) / (2.0 * dt)
    v_dot_grad_v = np.einsum("i...,ij...->j...", v_m, dv)
    q = q_tensor(om_m, coeffs.c4)
    div_rho_q = np.stack([grid.div(rho_m * q[:, j]) for j in range(3)])
    r_v = grid.leray_project(
        re * (dt_v + v_dot_grad_v) - grid.laplacian(v_m) + coeffs.params.b * div_rho_q
    )

    return {
        "r_rho": grid.sobolev_norm(r_rho, 0.0),
        "r_Omega": grid.sobolev_norm(r_omega, 0.0),
        "r_v": grid.sobolev_norm(r_v, 0.0),
    }
