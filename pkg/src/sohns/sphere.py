"""Real spherical harmonics on a Gauss-Legendre x uniform-azimuth grid.

Basis: orthonormal real harmonics without the Condon-Shortley phase,

    Y_{l,0}  = Ptilde_l^0(mu)
    Y_{l,m}  = sqrt(2) Ptilde_l^m(mu) cos(m az)      (m > 0)
    Y_{l,-m} = sqrt(2) Ptilde_l^m(mu) sin(m az)      (m > 0)

with Ptilde the fully normalized associated Legendre functions. Coefficients
are stored flat in order l = 0..L, m = -l..l (index l^2 + l + m).

The node set is (L+3) Gauss-Legendre points in mu times (2L+6) uniform
azimuths. That integrates spherical-polynomial products through degree 2L+5
exactly, two degrees more than the standard (L+1) x (2L+2) grid, so that the
degree-(L+2) drift fluxes of the kinetic solver are analyzed without aliasing.

All batch operations put the node/mode axis last, so fields over a spatial
grid pass through as (..., n_nodes) / (..., n_modes) stacks of matmuls.
"""

import numpy as np

from .errors import DegreeMismatch

__all__ = ["SphereGrid", "SphereSpectrum", "sph_index"]


def sph_index(l, m):
    """Flat coefficient index of the (l, m) harmonic."""
    return l * l + l + m


def _legendre_tables(degree_max, mu):
    """Normalized associated Legendre values and theta-derivatives at mu.

    Returns
    -------
    p : ndarray (n_mu, n_pairs)
        Ptilde_l^m(mu) for 0 <= m <= l <= degree_max, flat index l(l+1)/2 + m.
    dp_dtheta : ndarray (n_mu, n_pairs)
        d/dtheta Ptilde_l^m evaluated at theta = arccos(mu).
    p_over_s : ndarray (n_mu, n_pairs)
        Ptilde_l^m / sin(theta); zero column for m = 0 (never used there).
    """
    mu = np.asarray(mu, dtype=float)
    s = np.sqrt(1.0 - mu * mu)
    L = degree_max
    npairs = (L + 1) * (L + 2) // 2

    def pidx(l, m):
        return l * (l + 1) // 2 + m

    p = np.zeros((mu.size, npairs))
    # diagonal seeds: Ptilde_m^m = sqrt((2m+1)/(2m)) s Ptilde_{m-1}^{m-1}
    p[:, pidx(0, 0)] = np.sqrt(1.0 / (4.0 * np.pi))
    for m in range(1, L + 1):
        p[:, pidx(m, m)] = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * p[:, pidx(m - 1, m - 1)]
    # first off-diagonal, then upward three-term recurrence in l
    for m in range(0, L):
        p[:, pidx(m + 1, m)] = np.sqrt(2.0 * m + 3.0) * mu * p[:, pidx(m, m)]
    for m in range(0, L + 1):
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[:, pidx(l, m)] = a * (mu * p[:, pidx(l - 1, m)] - b * p[:, pidx(l - 2, m)])

    # d/dtheta Ptilde_l^m = [l mu Ptilde_l^m - sqrt((2l+1)(l-m)(l+m)/(2l-1)) Ptilde_{l-1}^m] / s
    dp = np.zeros_like(p)
    for m in range(0, L + 1):
        for l in range(m, L + 1):
            acc = l * mu * p[:, pidx(l, m)]
            if l > m:
                c = np.sqrt((2.0 * l + 1.0) * (l - m) * (l + m) / (2.0 * l - 1.0))
                acc = acc - c * p[:, pidx(l - 1, m)]
            dp[:, pidx(l, m)] = acc / s

    p_over_s = np.zeros_like(p)
    for m in range(1, L + 1):
        for l in range(m, L + 1):
            p_over_s[:, pidx(l, m)] = p[:, pidx(l, m)] / s
    return p, dp, p_over_s


class SphereSpectrum:
    """Coefficient vector of a sphere function up to degree L.

    Thin value type: ``degree_max`` plus a real array whose last axis has
    (L+1)^2 entries (leading axes are free, e.g. a spatial grid).
    """

    __slots__ = ("degree_max", "coefficients")

    def __init__(self, degree_max, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape[-1] != (degree_max + 1) ** 2:
            raise DegreeMismatch(
                f"expected {(degree_max + 1) ** 2} coefficients for L={degree_max}, "
                f"got {coefficients.shape[-1]}"
            )
        self.degree_max = degree_max
        self.coefficients = coefficients


class SphereGrid:
    """Quadrature grid and dense transform operators for one degree L.

    Attributes
    ----------
    degree_max : int
    n_modes, n_nodes : int
    omega : ndarray (3, n_nodes)
        Cartesian node directions.
    weights : ndarray (n_nodes,)
        Quadrature weights, summing to 4 pi.
    mu, sin_theta, az : ndarray (n_nodes,)
    l_of_mode, m_of_mode : ndarray (n_modes,)
    """

    def __init__(self, degree_max):
        L = int(degree_max)
        if L < 2:
            raise DegreeMismatch("degree_max must be >= 2")
        self.degree_max = L
        self.n_modes = (L + 1) ** 2

        n_mu = L + 3
        n_az = 2 * L + 6
        gl_nodes, gl_wts = np.polynomial.legendre.leggauss(n_mu)
        az = 2.0 * np.pi * np.arange(n_az) / n_az

        # flattened tensor grid, mu index slow
        self.mu = np.repeat(gl_nodes, n_az)
        self.az = np.tile(az, n_mu)
        self.sin_theta = np.sqrt(1.0 - self.mu**2)
        self.weights = np.repeat(gl_wts, n_az) * (2.0 * np.pi / n_az)
        self.n_nodes = n_mu * n_az

        cos_az, sin_az = np.cos(self.az), np.sin(self.az)
        self.omega = np.stack(
            [self.sin_theta * cos_az, self.sin_theta * sin_az, self.mu]
        )
        e_th = np.stack([self.mu * cos_az, self.mu * sin_az, -self.sin_theta])
        e_az = np.stack([-sin_az, cos_az, np.zeros_like(sin_az)])

        self.l_of_mode = np.concatenate(
            [np.full(2 * l + 1, l) for l in range(L + 1)]
        ).astype(float)
        self.m_of_mode = np.concatenate(
            [np.arange(-l, l + 1) for l in range(L + 1)]
        )

        p, dp, p_over_s = _legendre_tables(L, gl_nodes)

        def pidx(l, m):
            return l * (l + 1) // 2 + m

        # basis value, theta-derivative and (1/sin)(d/daz) matrices, (n_nodes, n_modes)
        Y = np.zeros((self.n_nodes, self.n_modes))
        Gth = np.zeros_like(Y)
        Gaz = np.zeros_like(Y)
        sqrt2 = np.sqrt(2.0)
        cos_m = {m: np.cos(m * self.az) for m in range(L + 1)}
        sin_m = {m: np.sin(m * self.az) for m in range(L + 1)}
        p_full = np.repeat(p, n_az, axis=0)
        dp_full = np.repeat(dp, n_az, axis=0)
        ps_full = np.repeat(p_over_s, n_az, axis=0)
        for l in range(L + 1):
            Y[:, sph_index(l, 0)] = p_full[:, pidx(l, 0)]
            Gth[:, sph_index(l, 0)] = dp_full[:, pidx(l, 0)]
            for m in range(1, l + 1):
                pc, dc, sc = p_full[:, pidx(l, m)], dp_full[:, pidx(l, m)], ps_full[:, pidx(l, m)]
                Y[:, sph_index(l, m)] = sqrt2 * pc * cos_m[m]
                Y[:, sph_index(l, -m)] = sqrt2 * pc * sin_m[m]
                Gth[:, sph_index(l, m)] = sqrt2 * dc * cos_m[m]
                Gth[:, sph_index(l, -m)] = sqrt2 * dc * sin_m[m]
                Gaz[:, sph_index(l, m)] = -m * sqrt2 * sc * sin_m[m]
                Gaz[:, sph_index(l, -m)] = m * sqrt2 * sc * cos_m[m]

        self._Y = Y
        self._Yw = Y * self.weights[:, None]
        # Cartesian surface-gradient operators, one (n_nodes, n_modes) block per component
        self._Gcart = np.stack(
            [e_th[c][:, None] * Gth + e_az[c][:, None] * Gaz for c in range(3)]
        )
        self._Gcart_w = self._Gcart * self.weights[None, :, None]
        self._lap_eig = -self.l_of_mode * (self.l_of_mode + 1.0)

    # ---- transforms -------------------------------------------------------

    def synth(self, coeffs):
        """Coefficients (..., n_modes) -> node values (..., n_nodes)."""
        return np.asarray(coeffs) @ self._Y.T

    def analyze(self, values):
        """Node values (..., n_nodes) -> coefficients (..., n_modes).

        Exact orthonormal projection for band-limited input.
        """
        return np.asarray(values) @ self._Yw

    def integrate(self, values):
        """Quadrature of node values over the sphere."""
        return np.asarray(values) @ self.weights

    def laplace_beltrami(self, coeffs):
        """Multiply each (l, m) coefficient by -l(l+1)."""
        return np.asarray(coeffs) * self._lap_eig

    def grad(self, coeffs):
        """Surface gradient at nodes, Cartesian components.

        coeffs (..., n_modes) -> (3, ..., n_nodes).
        """
        coeffs = np.asarray(coeffs)
        return np.stack([coeffs @ self._Gcart[c].T for c in range(3)])

    def div_weak(self, field):
        """Surface divergence of a tangent field, as coefficients.

        Adjoint form (Div F)_{lm} = -int F . grad Y_{lm} domega, so the
        discrete Green identity holds exactly and the l=0 output is zero to
        roundoff: the collision operator built on it conserves mass.

        field (3, ..., n_nodes) -> (..., n_modes).
        """
        field = np.asarray(field)
        out = -(field[0] @ self._Gcart_w[0])
        for c in (1, 2):
            out -= field[c] @ self._Gcart_w[c]
        return out

    # ---- helpers ----------------------------------------------------------

    def spectrum(self, coefficients):
        return SphereSpectrum(self.degree_max, coefficients)

    def require_degree(self, spec):
        if spec.degree_max != self.degree_max:
            raise DegreeMismatch(
                f"spectrum degree {spec.degree_max} != grid degree {self.degree_max}"
            )
        return spec.coefficients
