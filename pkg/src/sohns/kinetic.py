"""Mean-field kinetic solver: the scaled alignment Fokker-Planck equation
for f(t, x, omega), coupled to incompressible Navier-Stokes through the
orientational stress.

f is stored as real spherical-harmonic coefficients per torus point,
shape (x-shape, n_modes); x-derivatives are Fourier-diagonal per mode and
omega-derivatives are harmonic-diagonal per point, so the mixed transport
term is the only place the two representations meet.

The collision operator is evaluated in its Fokker-Planck divergence form
Q(f) = D div_omega(Mt grad_omega(f/Mt)), where Mt is the degree-L projection
of the von Mises-Fisher density at the current direction Omega_f.
Analytically this is identical (as L grows) to -nu div(P Omega_f f) + D Lap f;
using the projected weight instead of the exact one makes f = analyze(rho M)
the exact discrete kernel, so equilibria are annihilated to roundoff at any
kappa the degree resolves, and the weak divergence's Green identity keeps the
dissipation sign and mass conservation exact. Mt must stay positive on the
nodes: at L = 12 that holds through kappa = 5 and beyond; the operator raises
when concentration outruns the resolution. Time stepping is the same
integrating-factor RK3 as the macro solver, with factors e^{-D l(l+1) dt/eps}
on f and the viscous factor on v; the collision drift stays explicit.
"""

from dataclasses import dataclass

import numpy as np

from .coefficients import vmf_density
from .errors import (
    CflViolation,
    DegenerateCurrent,
    InvariantViolation,
    NegativeMass,
    RangeError,
)
from .geometry import tangential_projector

__all__ = [
    "KineticState",
    "MeanFieldQuantities",
    "moments",
    "collision_Q",
    "force_term",
    "step_kinetic",
    "run_kinetic",
]

J_FLOOR = 1e-8


@dataclass(frozen=True)
class KineticState:
    """Distribution coefficients and fluid velocity at time t."""

    torus: object
    sphere: object
    f: np.ndarray
    v: np.ndarray
    epsilon: float
    t: float = 0.0

    def __post_init__(self):
        shape = self.torus.shape
        if np.shape(self.f) != shape + (self.sphere.n_modes,):
            raise RangeError(f"f must have shape {shape + (self.sphere.n_modes,)}")
        if np.shape(self.v) != (3,) + shape:
            raise RangeError(f"v must have shape {(3,) + shape}")
        if not self.epsilon > 0.0:
            raise RangeError("epsilon must be positive")

    @property
    def rho(self):
        return self.f @ _moment_arrays(self.sphere)[0]


@dataclass(frozen=True)
class MeanFieldQuantities:
    """Low moments of f: density, current, direction, orientational stress."""

    rho: np.ndarray
    j: np.ndarray
    omega_f: np.ndarray
    q_f: np.ndarray


def _moment_arrays(sphere):
    """Quadrature-exact projection vectors for the l <= 2 moments."""
    cached = getattr(sphere, "_moment_arrays_cache", None)
    if cached is None:
        w = sphere.weights
        y = sphere._Y
        om = sphere.omega
        p0 = w @ y
        p1 = (om * w) @ y
        outer = om[:, None, :] * om[None, :, :]
        outer[0, 0] -= 1.0 / 3.0
        outer[1, 1] -= 1.0 / 3.0
        outer[2, 2] -= 1.0 / 3.0
        p2 = (outer * w) @ y
        cached = (p0, p1, p2)
        sphere._moment_arrays_cache = cached
    return cached


def moments(f, sphere, j_floor=J_FLOOR):
    """Density, current j, direction Omega_f = j/|j|, and traceless stress.

    Computed from coefficients by exact quadrature vectors. Raises
    DegenerateCurrent wherever |j| < j_floor * |rho|: the drift direction is
    undefined there and regularizing it would corrupt limit studies.
    """
    f = np.asarray(f, dtype=float)
    p0, p1, p2 = _moment_arrays(sphere)
    rho = f @ p0
    j = np.einsum("...m,cm->c...", f, p1)
    q_f = np.einsum("...m,cdm->cd...", f, p2)
    j_norm = np.sqrt(np.sum(j * j, axis=0))
    if np.any(j_norm < j_floor * np.abs(rho)):
        raise DegenerateCurrent(
            f"|j| below {j_floor:g} * rho at {int(np.sum(j_norm < j_floor * np.abs(rho)))} points"
        )
    return MeanFieldQuantities(rho=rho, j=j, omega_f=j / j_norm, q_f=q_f)


def _omega_nodes(sphere, spatial_dim):
    return sphere.omega.reshape((3,) + (1,) * spatial_dim + (-1,))


def _vmf_at_nodes(sphere, omega_f, kappa):
    om_nodes = _omega_nodes(sphere, np.ndim(omega_f) - 1)
    return vmf_density(kappa, om_nodes, np.asarray(omega_f)[..., None])


def _projected_weight(m_nodes, sphere):
    """Degree-L projection of the equilibrium density; must stay positive."""
    m_tilde = sphere.synth(sphere.analyze(m_nodes))
    if np.min(m_tilde) <= 0.0:
        raise RangeError(
            "projected equilibrium weight loses positivity: "
            "concentration nu/d_noise too large for the spherical degree"
        )
    return m_tilde


def _collision_fp(f_nodes, m_nodes, d_noise, sphere):
    """D div_omega(Mt grad_omega(f/Mt)) as coefficients, Mt the projected weight."""
    m_tilde = _projected_weight(m_nodes, sphere)
    quotient = f_nodes / m_tilde
    grad_q = sphere.grad(sphere.analyze(quotient))
    return d_noise * sphere.div_weak(m_tilde * grad_q)


def collision_Q(f, nu, d_noise, sphere, j_floor=J_FLOOR):
    """Alignment Fokker-Planck operator, coefficients in, coefficients out."""
    if d_noise <= 0.0:
        raise RangeError("d_noise must be positive")
    if nu < 0.0:
        raise RangeError("nu must be >= 0")
    f = np.asarray(f, dtype=float)
    if nu == 0.0:
        return d_noise * sphere.laplace_beltrami(f)
    mom = moments(f, sphere, j_floor=j_floor)
    m_nodes = _vmf_at_nodes(sphere, mom.omega_f, nu / d_noise)
    return _collision_fp(sphere.synth(f), m_nodes, d_noise, sphere)


def _force_from_moments(mom, v, coeffs, sphere, torus):
    """P_{omega perp}[nu (k0/|j|) P_{Omega_f perp} Lap_x j + (lam S + A) omega]."""
    nu = coeffs.params.nu
    lam = coeffs.params.lam
    j_norm = np.sqrt(np.sum(mom.j * mom.j, axis=0))
    lap_j = np.stack([torus.laplacian(mom.j[c]) for c in range(3)])
    drift_x = nu * coeffs.k0 / j_norm * tangential_projector(mom.omega_f, lap_j)
    dv = torus.grad(v)
    B = 0.5 * (lam + 1.0) * dv + 0.5 * (lam - 1.0) * dv.swapaxes(0, 1)
    force = drift_x[..., None] + np.einsum("ij...,jn->i...n", B, sphere.omega)
    om_nodes = _omega_nodes(sphere, torus.dim)
    return force - np.sum(force * om_nodes, axis=0) * om_nodes


def force_term(f, v, coeffs, sphere, torus, j_floor=J_FLOOR):
    """Orientation force at every (x, node); tangent to omega pointwise."""
    mom = moments(f, sphere, j_floor=j_floor)
    return _force_from_moments(mom, v, coeffs, sphere, torus)


def _x_dealias(torus, coeffs_arr):
    moved = np.moveaxis(coeffs_arr, -1, 0)
    return np.moveaxis(torus.dealias(moved), 0, -1)


def _transport_nodes(torus, sphere, f, v, a):
    """(v + a omega) . grad_x f evaluated in the mixed (x, node) layout."""
    fh = torus.fft(np.moveaxis(f, -1, 0))
    out = 0.0
    for c in range(torus.dim):
        df = torus.ifft(1j * torus.k[c] * fh)
        df_nodes = sphere.synth(np.moveaxis(df, 0, -1))
        out = out + (v[c][..., None] + a * sphere.omega[c]) * df_nodes
    return out


def _rhs_kinetic(f, v, coeffs, eps, sphere, torus, include_diffusion):
    """(d_t f, d_t v) with the stiff diagonal diffusion optionally left out."""
    a, b = coeffs.params.a, coeffs.params.b
    nu, d_noise = coeffs.params.nu, coeffs.params.d_noise
    re = coeffs.params.reynolds

    mom = moments(f, sphere)
    f_nodes = sphere.synth(f)

    transport = _transport_nodes(torus, sphere, f, v, a)
    force = _force_from_moments(mom, v, coeffs, sphere, torus)
    div_force = sphere.div_weak(force * f_nodes)

    if nu == 0.0:
        q_coll = d_noise * sphere.laplace_beltrami(f)
    else:
        m_nodes = _vmf_at_nodes(sphere, mom.omega_f, nu / d_noise)
        q_coll = _collision_fp(f_nodes, m_nodes, d_noise, sphere)
    if not include_diffusion:
        q_coll = q_coll - d_noise * sphere.laplace_beltrami(f)

    r_f = _x_dealias(torus, -sphere.analyze(transport) - div_force + q_coll / eps)

    dv = torus.grad(v)
    v_adv = np.einsum("i...,ij...->j...", v, dv)
    div_q = np.stack([torus.div(mom.q_f[:, j]) for j in range(3)])
    r_v = torus.leray_project(torus.dealias(-v_adv - (b / re) * div_q))
    if include_diffusion:
        r_v = r_v + torus.laplacian(v) / re
    return r_f, r_v


def _decay_f(sphere, f, d_noise, eps, tau):
    l = sphere.l_of_mode
    return f * np.exp(-d_noise * l * (l + 1.0) * tau / eps)


def _decay_v(torus, v, re, tau):
    return torus.ifft(torus.fft(v) * np.exp(-tau / re * torus.k2))


def _apply_semigroup(pair, state, coeffs, tau, imex):
    if not imex or tau == 0.0:
        return pair
    f, v = pair
    return (
        _decay_f(state.sphere, f, coeffs.params.d_noise, state.epsilon, tau),
        _decay_v(state.torus, v, coeffs.params.reynolds, tau),
    )


def _check_cfl(state, coeffs, config):
    torus, sphere = state.torus, state.sphere
    dx = torus.box / torus.n
    u_max = coeffs.params.a + np.max(np.linalg.norm(state.v, axis=0))
    bound = dx / max(u_max, 1e-14)
    nu, d_noise = coeffs.params.nu, coeffs.params.d_noise
    L = sphere.degree_max
    if nu > 0.0:
        # the collision drift is explicit in either mode
        bound = min(bound, state.epsilon / (nu * (L + 1.0)))
    if not config.imex:
        bound = min(bound, state.epsilon / (d_noise * L * (L + 1.0)))
        re = coeffs.params.reynolds
        bound = min(bound, re * dx * dx / (2.0 * torus.dim))
    if config.dt > config.cfl_safety * bound:
        raise CflViolation(
            f"dt = {config.dt} exceeds {config.cfl_safety} * {bound:.3e} at t = {state.t}"
        )


def step_kinetic(state, coeffs, config, dt=None):
    """One integrating-factor RK3 step of the coupled system."""
    dt = config.dt if dt is None else dt
    _check_cfl(state, coeffs, config)
    torus, sphere, eps = state.torus, state.sphere, state.epsilon
    imex = config.imex

    def rhs(pair):
        return _rhs_kinetic(pair[0], pair[1], coeffs, eps, sphere, torus, not imex)

    u0 = (state.f, state.v)
    k1 = rhs(u0)

    stage2 = tuple(u + 0.5 * dt * k for u, k in zip(u0, k1))
    stage2 = _apply_semigroup(stage2, state, coeffs, 0.5 * dt, imex)
    k2 = rhs(stage2)

    e_full = _apply_semigroup(u0, state, coeffs, dt, imex)
    ek1_full = _apply_semigroup(k1, state, coeffs, dt, imex)
    ek2_half = _apply_semigroup(k2, state, coeffs, 0.5 * dt, imex)
    stage3 = tuple(
        ef - dt * e1 + 2.0 * dt * e2 for ef, e1, e2 in zip(e_full, ek1_full, ek2_half)
    )
    k3 = rhs(stage3)

    f_new, v_new = (
        ef + dt / 6.0 * (e1 + 4.0 * e2 + k)
        for ef, e1, e2, k in zip(e_full, ek1_full, ek2_half, k3)
    )
    v_new = torus.leray_project(v_new)
    out = KineticState(
        torus=torus, sphere=sphere, f=f_new, v=v_new, epsilon=eps, t=state.t + dt
    )

    rho_new = out.rho
    if np.min(rho_new) <= 0.0:
        raise NegativeMass(f"min rho = {np.min(rho_new):.3e} after step at t = {out.t}")
    div = torus.divergence_norm(out.v)
    if div > 1e-10:
        raise InvariantViolation(f"velocity divergence {div:.3e} after step at t = {out.t}")
    return out


def _series_row(state, coeffs, config):
    torus, sphere = state.torus, state.sphere
    mom = moments(state.f, sphere)
    kappa = coeffs.params.nu / coeffs.params.d_noise
    m_tilde = _projected_weight(_vmf_at_nodes(sphere, mom.omega_f, kappa), sphere)
    f_nodes = sphere.synth(state.f)
    quotient = f_nodes / m_tilde
    grad_q = sphere.grad(sphere.analyze(quotient))
    free_grad = (np.sum(grad_q * grad_q, axis=0) * m_tilde) @ sphere.weights
    weighted_sq = (f_nodes * f_nodes / m_tilde) @ sphere.weights
    s = config.series_sobolev_s
    re = coeffs.params.reynolds
    # W = 2/(1 - Omega_3) is the stereographic gauge of Omega_f: the chart's
    # projection pole is north, so the gauge diverges only as Omega_3 -> 1
    with np.errstate(divide="ignore"):
        w_gauge = 2.0 / (1.0 - mom.omega_f[2])
    return {
        "t": state.t,
        "mass": torus.integrate(mom.rho),
        "energy": re * torus.sobolev_norm(state.v, s) ** 2 + torus.integrate(weighted_sq),
        "dissipation": torus.sobolev_norm(torus.grad(state.v), s) ** 2
        + torus.integrate(free_grad),
        "div_norm": torus.divergence_norm(state.v),
        "max_w": float(np.max(w_gauge)),
    }


def run_kinetic(state, coeffs, config):
    """March to t_end; (final state, series rows, snapshots), as run_macro."""
    n_steps = int(np.floor((config.t_end - state.t) / config.dt + 1e-12))
    remainder = config.t_end - state.t - n_steps * config.dt

    series = [_series_row(state, coeffs, config)]
    snapshots = [state]
    for i in range(n_steps):
        state = step_kinetic(state, coeffs, config)
        if config.output_every and (i + 1) % config.output_every == 0 and i != n_steps - 1:
            series.append(_series_row(state, coeffs, config))
            snapshots.append(state)
    if remainder > 1e-12:
        state = step_kinetic(state, coeffs, config, dt=remainder)
    if state.t != snapshots[-1].t:
        series.append(_series_row(state, coeffs, config))
        snapshots.append(state)
    return state, series, snapshots
