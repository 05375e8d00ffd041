"""Periodic pseudo-spectral machinery on the torus.

Fields live on a d-dimensional periodic box (d in {1,2,3}, default length
2 pi) sampled on n points per axis; vector fields keep 3 components in any
d, with derivatives along missing axes identically zero. All operators
broadcast over leading axes, so a (3, n, n) velocity and an (n, n) scalar
go through the same code paths.

Derivatives are exact per Fourier mode; nonlinear products formed pointwise
are re-truncated with the 2/3-rule mask by the callers.
"""

import numpy as np

from .errors import RangeError

__all__ = ["TorusGrid"]


class TorusGrid:
    """Spectral grid: wavenumbers, derivatives, projection, Sobolev norms."""

    def __init__(self, dim=2, n=64, box=2.0 * np.pi):
        if dim not in (1, 2, 3):
            raise RangeError(f"dim must be 1, 2 or 3, got {dim}")
        if n < 8 or (n & (n - 1)) != 0:
            raise RangeError(f"n must be a power of two >= 8, got {n}")
        if box <= 0.0:
            raise RangeError("box length must be positive")
        self.dim = dim
        self.n = int(n)
        self.box = float(box)
        self.shape = (self.n,) * dim
        self.volume = self.box**dim
        self.axes = tuple(range(-dim, 0))

        x1 = np.arange(self.n) * (self.box / self.n)
        self.xs = np.meshgrid(*([x1] * dim), indexing="ij")

        k1 = 2.0 * np.pi / self.box * np.fft.fftfreq(self.n, 1.0 / self.n)
        kg = np.meshgrid(*([k1] * dim), indexing="ij")
        # always 3 slots so vector calculus stays 3-component in any d
        self.k = np.zeros((3,) + self.shape)
        for c in range(dim):
            self.k[c] = kg[c]
        self.k2 = np.sum(self.k**2, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            self._inv_k2 = np.where(self.k2 > 0.0, 1.0 / np.where(self.k2 > 0, self.k2, 1.0), 0.0)

        kmax_keep = (self.n - 1) // 3
        keep = np.abs(np.fft.fftfreq(self.n, 1.0 / self.n)) <= kmax_keep
        mask = np.ones(self.shape, dtype=bool)
        for c in range(dim):
            mask &= keep.reshape((1,) * c + (-1,) + (1,) * (dim - 1 - c))
        self.dealias_mask = mask

    # -- transforms --------------------------------------------------------

    def fft(self, field):
        return np.fft.fftn(field, axes=self.axes)

    def ifft(self, coeffs):
        return np.fft.ifftn(coeffs, axes=self.axes).real

    def dealias(self, field):
        """Drop modes beyond the 2/3 cutoff (alias control for products)."""
        return self.ifft(self.fft(field) * self.dealias_mask)

    # -- calculus ----------------------------------------------------------

    def grad(self, field):
        """Spatial gradient, always 3 slots (missing axes give zeros)."""
        fh = self.fft(field)
        out = np.zeros((3,) + np.shape(field), dtype=float)
        for c in range(self.dim):
            out[c] = self.ifft(1j * self.k[c] * fh)
        return out

    def div(self, field):
        """Divergence of a (3, ...) vector field."""
        fh = self.fft(field)
        acc = np.zeros(np.shape(field)[1:], dtype=complex)
        for c in range(self.dim):
            acc = acc + 1j * self.k[c] * fh[c]
        return self.ifft(acc)

    def laplacian(self, field):
        return self.ifft(-self.k2 * self.fft(field))

    def integrate(self, field):
        """Box integral: mean times volume. Leading axes pass through."""
        out = np.mean(field, axis=self.axes) * self.volume
        return float(out) if np.ndim(out) == 0 else out

    # -- incompressibility --------------------------------------------------

    def leray_project(self, u):
        """Remove the gradient part: k -> (Id - k k^T/|k|^2) per mode."""
        uh = self.fft(u)
        k_dot = np.zeros(self.shape, dtype=complex)
        for c in range(self.dim):
            k_dot = k_dot + self.k[c] * uh[c]
        k_dot = k_dot * self._inv_k2
        out = uh.copy()
        for c in range(self.dim):
            out[c] = uh[c] - self.k[c] * k_dot
        return self.ifft(out)

    def solve_pressure(self, rhs):
        """Zero-mean p with grad p = (Id - Leray) rhs, from Delta p = div rhs."""
        rh = self.fft(rhs)
        k_dot = np.zeros(self.shape, dtype=complex)
        for c in range(self.dim):
            k_dot = k_dot + 1j * self.k[c] * rh[c]
        return self.ifft(-k_dot * self._inv_k2)

    def divergence_norm(self, u):
        """Spectral L^2 norm of div u (the solenoidality certificate)."""
        return self.sobolev_norm(self.div(u), 0.0)

    # -- norms and synthesis -------------------------------------------------

    def sobolev_norm(self, field, s):
        """H^s norm: sqrt( V * sum (1+|k|^2)^s |u_k|^2 ), u_k = fft/n^d.

        Leading axes (vector components, stacked fields) are summed over.
        """
        uh = self.fft(field) / float(self.n**self.dim)
        weight = (1.0 + self.k2) ** s
        total = np.sum(weight * np.abs(uh) ** 2)
        return float(np.sqrt(self.volume * total))

    def random_solenoidal(self, rng, amplitude=1.0, k_max=2):
        """Smooth random divergence-free 3-component field, exact amplitude.

        Random low-mode coefficients, Leray projection, then rescaling so
        max |u| equals ``amplitude``.
        """
        coeffs = np.zeros((3,) + self.shape, dtype=complex)
        sel = self.k2 <= k_max**2
        nsel = int(np.sum(sel))
        for c in range(3):
            coeffs[c][sel] = rng.standard_normal(nsel) + 1j * rng.standard_normal(nsel)
        u = self.ifft(coeffs)
        u = self.leray_project(u)
        peak = np.max(np.abs(u))
        if peak == 0.0:
            return u
        return u * (amplitude / peak)
