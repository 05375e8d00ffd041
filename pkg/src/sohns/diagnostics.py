"""Analysis functionals: Sobolev norms, equilibrium-weighted norms, the
energy/dissipation pairs for both solvers, collision-invariant projections
of the consistency term, and the Gronwall self-consistency envelope.

Everything here is read-only over states and cheap relative to a solve, so
runs can be re-analyzed after the fact from stored snapshots.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import FitFailed, RangeError
from .geometry import tangential_projector

__all__ = [
    "EnergyReport",
    "sobolev_norm",
    "weighted_norm",
    "weighted_grad_norm",
    "energy_functionals_macro",
    "energy_functionals_kinetic",
    "eta0_default",
    "gci_projections_h0",
    "gronwall_envelope",
]


def sobolev_norm(grid, values, s):
    """Spectral H^s norm on the torus; leading axes are summed over."""
    if s < 0:
        raise RangeError("s must be >= 0")
    return grid.sobolev_norm(values, s)


# ---------------------------------------------------------------------------
# equilibrium-weighted norms
# ---------------------------------------------------------------------------


def _vmf_nodes(sphere, Omega0, kappa):
    """M_{Omega0} at the sphere nodes; Omega0 is (3,) or (3, x-shape)."""
    om0 = np.asarray(Omega0, dtype=float)
    mu = np.einsum("c...,cn->...n", om0, sphere.omega)
    if kappa == 0.0:
        return np.full_like(mu, 1.0 / (4.0 * np.pi))
    return kappa * np.exp(kappa * (mu - 1.0)) / (2.0 * np.pi * (-np.expm1(-2.0 * kappa)))


def _x_grad(torus, values):
    """Torus gradient of an array whose LAST axis is sphere nodes."""
    moved = np.moveaxis(values, -1, 0)
    g = torus.grad(moved)
    return np.moveaxis(g, 1, -1)


def _wnorm_sq_values(values, m_nodes, sphere, torus):
    """int int |g/M|^2 M = int int g^2 / M, over all leading axes."""
    per_x = (values * values / m_nodes) @ sphere.weights
    axes = tuple(range(-torus.dim, 0))
    return float(np.sum(np.mean(per_x, axis=axes)) * torus.volume)


def _wgrad_sq_values(values, m_nodes, sphere, torus):
    """int int |grad_omega(g/M)|^2 M, over all leading axes."""
    quotient = values / m_nodes
    gq = sphere.grad(sphere.analyze(quotient))
    per_x = np.sum(gq * gq, axis=0) * m_nodes @ sphere.weights
    axes = tuple(range(-torus.dim, 0))
    return float(np.sum(np.mean(per_x, axis=axes)) * torus.volume)


def weighted_norm(f_coeffs, Omega0, kappa, sphere, torus):
    """( int int |g/M_{Omega0}|^2 M_{Omega0} domega dx )^{1/2}.

    g is given as sphere coefficients over the torus, shape
    (..., x-shape, n_modes); leading axes (tensor components) are summed.
    """
    m_nodes = _vmf_nodes(sphere, Omega0, kappa)
    return float(np.sqrt(_wnorm_sq_values(sphere.synth(f_coeffs), m_nodes, sphere, torus)))


def weighted_grad_norm(f_coeffs, Omega0, kappa, sphere, torus):
    """|| grad_omega (g / M_{Omega0}) ||_M, the dissipation building block."""
    m_nodes = _vmf_nodes(sphere, Omega0, kappa)
    return float(np.sqrt(_wgrad_sq_values(sphere.synth(f_coeffs), m_nodes, sphere, torus)))


# ---------------------------------------------------------------------------
# energy functionals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    t: float
    e_macro: float = np.nan
    d_macro: float = np.nan
    e_kinetic: float = np.nan
    d_kinetic: float = np.nan
    eta0: float = 1.0
    breakdown: dict = field(default_factory=dict)


def energy_functionals_macro(state, coeffs, s):
    """(E, D) of the macroscopic a-priori estimate.

    E = |rho_hat|_{H^s}^2 + |phi|^2 + |psi|^2 + Re |v|^2,
    D = gamma(|grad phi|_{H^s}^2 + |grad psi|^2) + |grad v|^2.
    """
    grid = state.grid
    re = coeffs.params.reynolds
    e_tot = (
        grid.sobolev_norm(state.rho_hat, s) ** 2
        + grid.sobolev_norm(state.phi, s) ** 2
        + grid.sobolev_norm(state.psi, s) ** 2
        + re * grid.sobolev_norm(state.v, s) ** 2
    )
    d_tot = coeffs.gamma * (
        grid.sobolev_norm(grid.grad(state.phi), s) ** 2
        + grid.sobolev_norm(grid.grad(state.psi), s) ** 2
    ) + grid.sobolev_norm(grid.grad(state.v), s) ** 2
    return float(e_tot), float(d_tot)


def _kl_fields(f_coeffs, sphere, torus, s):
    """Node values of grad_x^k grad_omega^l f for all k + l <= s.

    omega-derivatives iterate the componentwise Cartesian surface gradient
    (analyze + grad per order); x-derivatives iterate the spectral gradient.
    """
    by_l = {0: sphere.synth(f_coeffs)}
    for l in range(1, s + 1):
        prev = by_l[l - 1]
        by_l[l] = sphere.grad(sphere.analyze(prev))
    out = {}
    for l in range(0, s + 1):
        fld = by_l[l]
        for k in range(0, s + 1 - l):
            if k > 0:
                fld = _x_grad(torus, fld)
            out[(k, l)] = fld
    return out


def energy_functionals_kinetic(
    v_R, f_R, Omega0, kappa, eps, sphere, torus, s=2, eta0=1.0, breakdown=None
):
    """(E, D) of the uniform-in-eps kinetic estimate.

    E = |v_R|_{H^s_x}^2 + sum_{k+l=m<=s} eta0^m |grad_x^k grad_omega^l f_R / M0|_M^2,
    D = |grad_x v_R|_{H^s_x}^2 + (1/eps) sum eta0^m |grad_omega(... / M0)|_M^2.

    eta0 = 1 is the plain (unweighted) functional pair. f_R is in sphere
    coefficients over the torus; pass a dict as ``breakdown`` to receive the
    per-(k, l) weighted norms.
    """
    if eps <= 0.0:
        raise RangeError("eps must be positive")
    m_nodes = _vmf_nodes(sphere, Omega0, kappa)
    e_tot = torus.sobolev_norm(v_R, s) ** 2
    d_tot = torus.sobolev_norm(torus.grad(v_R), s) ** 2
    for (k, l), values in _kl_fields(f_R, sphere, torus, int(s)).items():
        wn = _wnorm_sq_values(values, m_nodes, sphere, torus)
        wg = _wgrad_sq_values(values, m_nodes, sphere, torus)
        e_tot += eta0 ** (k + l) * wn
        d_tot += eta0 ** (k + l) * wg / eps
        if breakdown is not None:
            breakdown[(k, l)] = float(np.sqrt(wn))
    return float(e_tot), float(d_tot)


def eta0_default(c0):
    """Largest eta0 with c0 * eta0^{1/2} <= 1/6, capped at 1."""
    if c0 <= 0.0:
        return 1.0
    return float(min(1.0, (1.0 / (6.0 * c0)) ** 2))


# ---------------------------------------------------------------------------
# collision-invariant projections of the consistency term
# ---------------------------------------------------------------------------


def gci_projections_h0(prev, mid, nxt, coeffs, gci, sphere):
    """Project h0 = d_t f0 + u0 . grad_x f0 + div_omega(F0 f0) on the
    collision invariants.

    f0 = rho0 M_{Omega0} is rebuilt from three consecutive macro states
    (central time stencil). Returns the scalar projection int h0 domega and
    the vector projection int h0 h(omega.Omega0) P_{Omega0 perp} omega domega
    per grid point; both vanish at the discretization order exactly when the
    macro trajectory solves the closed system with the same coefficients.
    """
    grid = mid.grid
    dt_f = mid.t - prev.t
    if abs((nxt.t - mid.t) - dt_f) > 1e-12:
        raise RangeError("gci projections need equispaced states")
    a = coeffs.params.a
    nu = coeffs.params.nu
    kappa = coeffs.kappa

    def f0_nodes(state):
        m = _vmf_nodes(sphere, state.omega, kappa)
        return np.exp(state.rho_hat)[..., None] * m

    f_prev, f_mid, f_nxt = f0_nodes(prev), f0_nodes(mid), f0_nodes(nxt)
    dt_f0 = (f_nxt - f_prev) / (2.0 * dt_f)

    # transport u0 . grad_x f0 with u0 = v0 + a omega
    gx = _x_grad(grid, f_mid)
    transport = np.zeros_like(f_mid)
    for c in range(3):
        transport += (mid.v[c][..., None] + a * sphere.omega[c]) * gx[c]

    # orientation force F0 f0 and its weak sphere divergence
    rho0 = np.exp(mid.rho_hat)
    omega0 = mid.omega
    j0 = coeffs.c1 * rho0 * omega0
    lap_j = np.stack([grid.laplacian(j0[c]) for c in range(3)])
    drift_x = nu * coeffs.k0 / (coeffs.c1 * rho0) * tangential_projector(omega0, lap_j)
    dv = grid.grad(mid.v)
    lam = coeffs.params.lam
    B = 0.5 * (lam + 1.0) * dv + 0.5 * (lam - 1.0) * dv.swapaxes(0, 1)
    # force at (x, node): P_{omega perp}[ drift_x + B omega ]
    force = drift_x[..., None] + np.einsum("ij...,jn->i...n", B, sphere.omega)
    omega_nodes = sphere.omega.reshape((3,) + (1,) * grid.dim + (-1,))
    force = force - np.sum(force * omega_nodes, axis=0) * omega_nodes
    div_flux = sphere.synth(sphere.div_weak(force * f_mid))

    h0 = dt_f0 + transport + div_flux
    scalar_defect = sphere.integrate(h0)

    mu = np.einsum("c...,cn->...n", omega0, sphere.omega)
    h_gci = gci.h_at(np.clip(mu, -1.0, 1.0))
    proj = omega_nodes - mu[None] * omega0[..., None]
    vector_defect = np.stack(
        [sphere.integrate(h0 * h_gci * proj[c]) for c in range(3)]
    )
    return scalar_defect, vector_defect


# ---------------------------------------------------------------------------
# Gronwall envelope
# ---------------------------------------------------------------------------


def gronwall_envelope(ts, energies, s=2.0, dissipations=None, fit_fraction=0.1, slack=1e-9):
    """Self-consistency against dE/dt + D <= C[1 + exp(C int E^{1/2})] E (1 + E^{3s}).

    Fits C by least squares on the leading ``fit_fraction`` of the series,
    integrates the envelope ODE from E(0), and checks the remainder stays
    below it. Returns a dict with the envelope, the constant, the margin,
    and the pass flag. A finite envelope is part of the check: an envelope
    that blows up before the end cannot certify anything and fails.
    """
    ts = np.asarray(ts, dtype=float)
    es = np.asarray(energies, dtype=float)
    if ts.ndim != 1 or ts.size < 4 or es.shape != ts.shape:
        raise FitFailed("need matching 1-d series with at least 4 samples")
    if np.any(np.diff(ts) <= 0.0):
        raise FitFailed("time grid must be strictly increasing")
    ds = np.zeros_like(es) if dissipations is None else np.asarray(dissipations, dtype=float)

    dedt = np.gradient(es, ts)
    lhs = dedt + ds
    sqrt_int = np.concatenate(
        [[0.0], np.cumsum(0.5 * (np.sqrt(es[1:]) + np.sqrt(es[:-1])) * np.diff(ts))]
    )

    n_fit = max(3, int(np.ceil(fit_fraction * ts.size)))

    def model(c, e, integral):
        with np.errstate(over="ignore"):
            out = (
                c
                * (1.0 + np.exp(np.minimum(c * integral, 700.0)))
                * e
                * (1.0 + e ** (3.0 * s))
            )
        return np.minimum(out, 1e150)

    def loss(c):
        r = np.minimum(np.abs(lhs[:n_fit] - model(c, es[:n_fit], sqrt_int[:n_fit])), 1e150)
        return float(np.sum(r * r))

    # the model overflows for large C, so a bounded scalar minimizer cannot be
    # trusted on the full range: coarse log-grid first, local refinement after
    grid_c = np.concatenate([[0.0], np.logspace(-8.0, 6.0, 141)])
    losses = np.array([loss(c) for c in grid_c])
    if not np.any(np.isfinite(losses)):
        raise FitFailed("envelope constant fit found no finite loss")
    c_best = float(grid_c[int(np.argmin(losses))])
    if c_best > 0.0:
        try:
            res = optimize.minimize_scalar(
                loss, bounds=(c_best / 10.0, c_best * 10.0), method="bounded"
            )
        except Exception as exc:
            raise FitFailed(str(exc)) from exc
        if not res.success or not np.isfinite(res.x):
            raise FitFailed("envelope constant fit did not converge")
        if res.fun <= losses.min():
            c_best = float(res.x)
    c_fit = c_best

    # envelope ODE, RK4 with substeps, overflow-guarded
    env = np.empty_like(es)
    env[0] = es[0]
    y = es[0]
    integral = 0.0
    blown = False
    for i in range(1, ts.size):
        if blown:
            env[i] = np.inf
            continue
        h_step = (ts[i] - ts[i - 1]) / 4.0
        for _ in range(4):
            with np.errstate(over="ignore", invalid="ignore"):
                k1 = model(c_fit, y, integral)
                k2 = model(c_fit, y + 0.5 * h_step * k1, integral + 0.5 * h_step * np.sqrt(max(y, 0.0)))
                k3 = model(c_fit, y + 0.5 * h_step * k2, integral + 0.5 * h_step * np.sqrt(max(y, 0.0)))
                k4 = model(c_fit, y + h_step * k3, integral + h_step * np.sqrt(max(y, 0.0)))
                y_new = y + h_step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.isfinite(y_new) or y_new > 1e150:
                blown = True
                break
            integral += h_step * 0.5 * (np.sqrt(max(y, 0.0)) + np.sqrt(max(y_new, 0.0)))
            y = y_new
        env[i] = np.inf if blown else y

    tail = slice(n_fit, None)
    finite = bool(np.all(np.isfinite(env)))
    ok = finite and bool(np.all(es[tail] <= env[tail] * (1.0 + slack) + slack))
    margin = float(np.min(env[tail] - es[tail])) if finite else -np.inf
    return {
        "envelope": env,
        "constant": c_fit,
        "passed": ok,
        "margin": margin,
        "fit_samples": n_fit,
    }
