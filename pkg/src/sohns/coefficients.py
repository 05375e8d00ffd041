"""Closure coefficients of the alignment-fluid model, from first principles.

Everything downstream (both solvers, the limit harness) takes its constants
from here: the von Mises-Fisher moments c1, c4, the generalized collision
invariant h and its moments c2, c3, the sensing-kernel moment k0, and the
derived gamma, lambda0, lambda_tilde.

All mu-integrals carry the exponential weight rescaled as exp(kappa (mu - 1)),
bounded by one, so concentrations up to kappa = 100 stay inside double
precision; every published quantity is a weight-scale-invariant ratio.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import integrate

from .errors import (
    DegenerateDenominator,
    EigensolveFailed,
    NonIntegrableKernel,
    RangeError,
    SolveFailed,
)
from .sphere import SphereGrid

__all__ = [
    "ModelParams",
    "GciSolution",
    "CoefficientSet",
    "vmf_density",
    "compute_c1",
    "compute_c4",
    "solve_gci",
    "compute_c2_c3",
    "compute_k0",
    "assemble_coefficients",
    "estimate_poincare_constant",
]

KAPPA_MIN, KAPPA_MAX = 1e-3, 100.0


def _check_kappa(kappa, allow_zero=False):
    if allow_zero and kappa == 0.0:
        return
    if not (KAPPA_MIN <= kappa <= KAPPA_MAX):
        raise RangeError(
            f"kappa = {kappa} outside the supported range [{KAPPA_MIN}, {KAPPA_MAX}]"
        )


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Raw model constants: propulsion a, stress coupling b, alignment nu,
    angular diffusion D, strain coupling lambda, sensing radius R, Reynolds
    number Re, and the radial sensing kernel."""

    a: float = 1.0
    b: float = 0.2
    nu: float = 1.0
    d_noise: float = 1.0
    lam: float = 1.0
    sensing_radius: float = 1.0
    reynolds: float = 1.0
    kernel: object = "gaussian"
    kernel_param: float = 1.0

    def __post_init__(self):
        for name in ("nu", "d_noise", "reynolds", "sensing_radius"):
            if getattr(self, name) <= 0.0:
                raise RangeError(f"{name} must be positive, got {getattr(self, name)}")
        if isinstance(self.kernel, str):
            if self.kernel not in ("gaussian", "tophat", "exponential"):
                raise RangeError(f"unknown kernel '{self.kernel}'")
            if self.kernel_param <= 0.0:
                raise RangeError("kernel_param must be positive")
        elif not (hasattr(self.kernel, "__len__") and len(self.kernel) == 2):
            raise RangeError("kernel must be a named kernel or an (r, K) table")


@dataclass(frozen=True)
class GciSolution:
    """Certified generalized-collision-invariant solve at one kappa.

    h = (1 - mu^2)^{-1/2} g is the polynomial p of the Galerkin ansatz
    g = (1 - mu^2)^{1/2} p(mu); ``p_coeffs`` holds its Legendre coefficients
    so h can be evaluated anywhere, not only on ``mu_nodes``.
    ``residual_norm`` is the strong-form defect in the weighted L^2 norm,
    normalized by the weighted norm of the right-hand side. ``h_sign`` is the
    realized sign of h on the node set (the solve certifies h never changes
    sign; with this right-hand side the sign comes out negative).
    """

    kappa: float
    mu_nodes: np.ndarray
    g_values: np.ndarray
    h_values: np.ndarray
    galerkin_degree: int
    residual_norm: float
    h_sign: int = -1
    p_coeffs: np.ndarray = field(repr=False, default=None)

    def h_at(self, mu):
        """Evaluate h at arbitrary mu in [-1, 1]."""
        return npleg.legval(np.asarray(mu), self.p_coeffs)


@dataclass(frozen=True)
class CoefficientSet:
    """All closure constants plus the raw parameters they came from."""

    c1: float
    c2: float
    c3: float
    c4: float
    k0: float
    kappa: float
    gamma: float
    lambda0: float
    lambda_tilde: float
    params: ModelParams

    def verify(self):
        """Recompute the three derived fields from parts; exact match required."""
        assert self.kappa == self.params.nu / self.params.d_noise
        assert self.gamma == self.k0 * self.params.nu * (self.c2 + 2.0 / self.kappa)
        assert self.lambda0 == (6.0 / self.kappa) * self.c2 + self.c3 - 1.0
        assert self.lambda_tilde == self.params.lam * self.lambda0
        return True


# ---------------------------------------------------------------------------
# von Mises-Fisher moments
# ---------------------------------------------------------------------------


def vmf_density(kappa, omega, Omega):
    """Von Mises-Fisher probability density M_Omega(omega) = Z^{-1} e^{kappa omega.Omega}.

    Evaluated in the overflow-safe form
    kappa e^{kappa(omega.Omega - 1)} / (2 pi (1 - e^{-2 kappa})).
    omega and Omega are component-first arrays broadcasting against each other.
    """
    _check_kappa(kappa, allow_zero=True)
    mu = np.sum(np.asarray(omega, dtype=float) * np.asarray(Omega, dtype=float), axis=0)
    if kappa == 0.0:
        return np.full_like(np.asarray(mu, dtype=float), 1.0 / (4.0 * np.pi))
    return kappa * np.exp(kappa * (mu - 1.0)) / (2.0 * np.pi * (-np.expm1(-2.0 * kappa)))


def _mu_quadrature(n=129):
    return npleg.leggauss(n)


def compute_c1(kappa):
    """Order parameter: the e^{kappa mu}-weighted average of mu on [-1, 1].

    Gauss-Legendre quadrature of the defining ratio; agrees with the
    closed form coth(kappa) - 1/kappa to ~1e-14. kappa = 0 is the exact
    uniform limit, value 0.
    """
    _check_kappa(kappa, allow_zero=True)
    if kappa == 0.0:
        return 0.0
    mu, w = _mu_quadrature()
    weight = w * np.exp(kappa * (mu - 1.0))
    return float(np.sum(mu * weight) / np.sum(weight))


def compute_c4(kappa):
    """Stress-tensor coefficient c4 = 1 - (3/2) <1 - mu^2>_{e^{kappa mu}}."""
    _check_kappa(kappa, allow_zero=True)
    if kappa == 0.0:
        return 0.0
    mu, w = _mu_quadrature()
    weight = w * np.exp(kappa * (mu - 1.0))
    return float(1.0 - 1.5 * np.sum((1.0 - mu * mu) * weight) / np.sum(weight))


# ---------------------------------------------------------------------------
# generalized collision invariant
# ---------------------------------------------------------------------------


def solve_gci(kappa, degree=64, residual_tol=1e-8):
    """Solve the singular two-point problem defining the collision invariant.

        -(1-mu^2) d/dmu ( e^{kappa mu} (1-mu^2) dg/dmu ) + e^{kappa mu} g
            = -(1-mu^2)^{3/2} e^{kappa mu}

    Galerkin in the ansatz g = (1-mu^2)^{1/2} p(mu) with Legendre modes for p:
    the ansatz carries the endpoint weights of the natural space, so no
    boundary conditions are imposed. The weak form in that space is

        a(p,q) = int e^{kappa mu} [ (1-mu^2)^2 p'q' - mu(1-mu^2)(p'q + pq')
                                    + (1+mu^2) pq ] dmu
        l(q)   = -int e^{kappa mu} (1-mu^2) q dmu

    which is symmetric and coercive, so the discrete solution is unique.

    Returns a GciSolution whose residual_norm certifies the strong form.
    """
    _check_kappa(kappa)
    if degree < 8:
        raise RangeError("galerkin degree must be >= 8")
    n = int(degree)
    nq = n + 8
    mu, w = _mu_quadrature(nq)
    weight = w * np.exp(kappa * (mu - 1.0))
    one_m = 1.0 - mu * mu

    # Legendre values and derivatives at the quadrature nodes
    V = npleg.legvander(mu, n)
    dV = np.zeros_like(V)
    for k in range(1, n + 1):
        dV[:, k] = k * (V[:, k - 1] - mu * V[:, k]) / one_m

    Wg = weight[:, None]
    A = (
        (one_m[:, None] ** 2 * dV * Wg).T @ dV
        - ((mu * one_m)[:, None] * dV * Wg).T @ V
        - ((mu * one_m)[:, None] * V * Wg).T @ dV
        + ((1.0 + mu * mu)[:, None] * V * Wg).T @ V
    )
    rhs = -(V * Wg).T @ one_m
    try:
        p_coeffs = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolveFailed(f"GCI Galerkin system singular at kappa={kappa}") from exc
    if not np.all(np.isfinite(p_coeffs)):
        raise SolveFailed(f"GCI solution not finite at kappa={kappa}")

    # strong-form residual: with r = (1-mu^2) p' - mu p the defect factors as
    # e^{kappa mu} (1-mu^2)^{1/2} R(mu),
    # R = -kappa (1-mu^2) r + mu r - (1-mu^2) r' + p + (1-mu^2)
    p_val = V @ p_coeffs
    # polynomial algebra for r and r' in Legendre form
    one_m_leg = np.array([2.0 / 3.0, 0.0, -2.0 / 3.0])  # 1 - mu^2
    mu_leg = np.array([0.0, 1.0])
    dp_leg = npleg.legder(p_coeffs)
    r_coeffs = npleg.legsub(npleg.legmul(one_m_leg, dp_leg), npleg.legmul(mu_leg, p_coeffs))
    dr_leg = npleg.legder(r_coeffs)
    R_coeffs = npleg.legadd(
        npleg.legsub(
            npleg.legadd(
                npleg.legmul(mu_leg, r_coeffs),
                npleg.legmul(one_m_leg, npleg.legsub(-kappa * r_coeffs, dr_leg)),
            ),
            -p_coeffs,
        ),
        one_m_leg,
    )
    R_val = npleg.legval(mu, R_coeffs)
    wsq = w * np.exp(2.0 * kappa * (mu - 1.0))
    resid = float(np.sqrt(np.sum(wsq * R_val**2) / np.sum(wsq * one_m**2)))
    if resid > residual_tol:
        raise SolveFailed(
            f"GCI residual {resid:.3e} above tolerance {residual_tol:.1e} "
            f"at kappa={kappa}, degree={n}; raise the degree"
        )
    if np.all(p_val < 0.0):
        sign = -1
    elif np.all(p_val > 0.0):
        sign = 1
    else:
        raise SolveFailed(f"GCI h changes sign on the node set at kappa={kappa}")

    g_val = np.sqrt(one_m) * p_val
    return GciSolution(
        kappa=float(kappa),
        mu_nodes=mu,
        g_values=g_val,
        h_values=p_val,
        galerkin_degree=n,
        residual_norm=resid,
        h_sign=sign,
        p_coeffs=p_coeffs,
    )


def compute_c2_c3(gci):
    """GCI-weighted first and second moments.

    c2 = <mu>, c3 = 2 <mu^2> under the measure (1-mu^2) e^{kappa mu} h(mu) dmu;
    invariant under any positive rescaling of h.
    """
    mu, w = _mu_quadrature(gci.galerkin_degree + 8)
    weight = w * np.exp(gci.kappa * (mu - 1.0)) * (1.0 - mu * mu) * gci.h_at(mu)
    den = np.sum(weight)
    scale = np.sum(np.abs(weight))
    if abs(den) < 1e-14 * max(scale, 1.0):
        raise DegenerateDenominator("h-weighted denominator vanishes")
    c2 = float(np.sum(mu * weight) / den)
    c3 = float(2.0 * np.sum(mu * mu * weight) / den)
    return c2, c3


# ---------------------------------------------------------------------------
# sensing-kernel moment
# ---------------------------------------------------------------------------


def _kernel_function(kernel, param):
    if kernel == "gaussian":
        return lambda r: np.exp(-(r * r) / (2.0 * param * param)), np.inf
    if kernel == "tophat":
        return lambda r: np.where(r <= param, 1.0, 0.0), param
    if kernel == "exponential":
        return lambda r: np.exp(-r / param), np.inf
    raise RangeError(f"unknown kernel '{kernel}'")


def _tabulated_moments(r_table, k_table):
    """Radial moments of the linear interpolant of a sampled kernel.

    Per-segment 3-point Gauss is exact for r^4 times a linear function,
    so the interpolant's moments carry no quadrature error at all.
    """
    r = np.asarray(r_table, dtype=float)
    k = np.asarray(k_table, dtype=float)
    if r.ndim != 1 or r.shape != k.shape or r.size < 2:
        raise NonIntegrableKernel("kernel table needs matching 1-d r and K arrays")
    if not (np.all(np.diff(r) > 0.0) and r[0] >= 0.0):
        raise NonIntegrableKernel("kernel table radii must be increasing and >= 0")
    if np.any(k < 0.0) or not np.all(np.isfinite(k)) or np.all(k == 0.0):
        raise NonIntegrableKernel("kernel table values must be finite, >= 0, not all zero")
    gx, gw = npleg.leggauss(3)
    mid = 0.5 * (r[1:] + r[:-1])
    half = 0.5 * (r[1:] - r[:-1])
    nodes = mid[:, None] + half[:, None] * gx[None, :]
    vals = np.array([np.interp(nodes[i], r, k) for i in range(nodes.shape[0])])
    wts = half[:, None] * gw[None, :]
    m2 = float(np.sum(wts * nodes**2 * vals))
    m4 = float(np.sum(wts * nodes**4 * vals))
    return m2, m4


def compute_k0(kernel, R, kernel_param=1.0):
    """Kernel moment k0 = (R^2/6) int K(|x|)|x|^2 dx / int K(|x|) dx in R^3.

    Radially: (R^2/6) * int r^4 K dr / int r^2 K dr. Named kernels go through
    adaptive quadrature; an (r, K) table is interpolated linearly and its
    moments integrated exactly.
    """
    if R <= 0.0:
        raise RangeError("sensing radius must be positive")
    if isinstance(kernel, str):
        import warnings

        K, upper = _kernel_function(kernel, kernel_param)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                m2, err2 = integrate.quad(lambda r: r**2 * K(r), 0.0, upper)
                m4, err4 = integrate.quad(lambda r: r**4 * K(r), 0.0, upper)
        except Exception as exc:
            raise NonIntegrableKernel(str(exc)) from exc
        del err2, err4  # divergence surfaces as IntegrationWarning or inf
    else:
        m2, m4 = _tabulated_moments(kernel[0], kernel[1])
    if not np.isfinite(m2) or not np.isfinite(m4) or m2 <= 0.0:
        raise NonIntegrableKernel("kernel moments are not finite and positive")
    return float(R * R / 6.0 * m4 / m2)


# ---------------------------------------------------------------------------
# assembly and the weighted Poincare constant
# ---------------------------------------------------------------------------


def assemble_coefficients(params, degree=64):
    """Full coefficient set for one parameter choice.

    kappa = nu/D; c1, c4 from the VMF moments; c2, c3 through the collision
    invariant; k0 from the kernel; then gamma = k0 nu (c2 + 2/kappa),
    lambda0 = (6/kappa) c2 + c3 - 1, lambda_tilde = lambda lambda0.
    """
    kappa = params.nu / params.d_noise
    _check_kappa(kappa)
    c1 = compute_c1(kappa)
    c4 = compute_c4(kappa)
    gci = solve_gci(kappa, degree)
    c2, c3 = compute_c2_c3(gci)
    k0 = compute_k0(params.kernel, params.sensing_radius, params.kernel_param)
    gamma = k0 * params.nu * (c2 + 2.0 / kappa)
    lambda0 = (6.0 / kappa) * c2 + c3 - 1.0
    return CoefficientSet(
        c1=c1,
        c2=c2,
        c3=c3,
        c4=c4,
        k0=k0,
        kappa=kappa,
        gamma=gamma,
        lambda0=lambda0,
        lambda_tilde=params.lam * lambda0,
        params=params,
    )


def estimate_poincare_constant(kappa, Omega=(0.0, 0.0, 1.0), degree=12):
    """Weighted Poincare constant Lambda on the sphere.

    Lambda^{-2} is the smallest nonzero eigenvalue of f -> -(1/M) div(M grad f)
    with M the VMF weight at (kappa, Omega), discretized on the harmonics
    basis: generalized problem K c = lambda B c with
    K_ij = int M grad Y_i . grad Y_j, B_ij = int M Y_i Y_j.
    """
    _check_kappa(kappa, allow_zero=True)
    if degree < 4:
        raise RangeError("degree must be >= 4")
    grid = SphereGrid(degree)
    Omega = np.asarray(Omega, dtype=float)
    m_nodes = vmf_density(kappa, grid.omega, Omega[:, None])
    wm = grid.weights * m_nodes
    B = grid._Y.T @ (wm[:, None] * grid._Y)
    K = np.zeros_like(B)
    for c in range(3):
        K += grid._Gcart[c].T @ (wm[:, None] * grid._Gcart[c])
    try:
        from scipy.linalg import eigh

        eigvals = eigh(K, B, eigvals_only=True)
    except Exception as exc:
        raise EigensolveFailed(str(exc)) from exc
    positive = eigvals[eigvals > 1e-8]
    if positive.size == 0:
        raise EigensolveFailed("no positive eigenvalue found")
    return float(1.0 / np.sqrt(positive[0]))
