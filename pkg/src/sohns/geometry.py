"""Stereographic chart on the unit sphere and its derivative vectors.

The mean-orientation field Omega lives on S^2. All solvers work in the
stereographic coordinates (phi, psi), projected from the north pole, so that
the constraint |Omega| = 1 is built into the parametrization

    Omega = (2 phi / W, 2 psi / W, (phi^2 + psi^2 - 1) / W),   W = 1 + phi^2 + psi^2.

Every function is vectorized: scalar coordinates give scalar outputs, arrays
of shape ``s`` give component-first arrays of shape ``(3,) + s``.
"""

import numpy as np

from .errors import PoleSingular

__all__ = [
    "w_of",
    "stereo_to_sphere",
    "sphere_to_stereo",
    "stereo_jacobians",
    "tangential_projector",
    "projector_matrix",
    "q_tensor",
]


def w_of(phi, psi):
    """W = 1 + phi^2 + psi^2 (always >= 1)."""
    return 1.0 + np.asarray(phi) ** 2 + np.asarray(psi) ** 2


def stereo_to_sphere(phi, psi):
    """Map stereographic coordinates to the unit vector Omega.

    Parameters
    ----------
    phi, psi : array_like
        Chart coordinates, any matching shape.

    Returns
    -------
    ndarray of shape (3,) + shape(phi)
        Unit vector (2 phi/W, 2 psi/W, (phi^2 + psi^2 - 1)/W).
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    w = w_of(phi, psi)
    return np.stack([2.0 * phi / w, 2.0 * psi / w, (phi**2 + psi**2 - 1.0) / w])


def sphere_to_stereo(omega, pole_tol=1e-8):
    """Invert the chart: unit vector -> (phi, psi).

    The projection point is the north pole (0, 0, 1); data within
    ``pole_tol`` of it cannot be represented in this chart.

    Parameters
    ----------
    omega : array_like, shape (3,) + s
        Unit vectors (component axis first).
    pole_tol : float
        Raise PoleSingular when |omega_z - 1| < pole_tol anywhere.

    Returns
    -------
    (phi, psi) : pair of ndarrays of shape s
    """
    omega = np.asarray(omega, dtype=float)
    z = omega[2]
    if np.any(np.abs(z - 1.0) < pole_tol):
        raise PoleSingular("orientation within pole_tol of the chart pole (0,0,1)")
    # Z = 1 - 2/W  =>  W = 2/(1 - Z);  phi = X W / 2, psi = Y W / 2
    w = 2.0 / (1.0 - z)
    return omega[0] * w / 2.0, omega[1] * w / 2.0


def stereo_jacobians(phi, psi):
    """First and second derivative vectors of Omega(phi, psi).

    Returns
    -------
    tuple (Omega_phi, Omega_psi, Omega_phiphi, Omega_phipsi, Omega_psipsi)
        Each of shape (3,) + shape(phi). Closed forms:

        Omega_phi    = (2(1 - phi^2 + psi^2), -4 phi psi, 4 phi) / W^2
        Omega_psi    = (-4 phi psi, 2(1 + phi^2 - psi^2), 4 psi) / W^2
        Omega_phiphi = (4 phi(phi^2 - 3 psi^2 - 3), 4 psi(3 phi^2 - psi^2 - 1),
                        -4(3 phi^2 - psi^2 - 1)) / W^3
        Omega_phipsi = (4 psi(3 phi^2 - psi^2 - 1), 4 phi(3 psi^2 - phi^2 - 1),
                        -16 phi psi) / W^3
        Omega_psipsi = (4 phi(3 psi^2 - phi^2 - 1), 4 psi(psi^2 - 3 phi^2 - 3),
                        -4(3 psi^2 - phi^2 - 1)) / W^3
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    w = w_of(phi, psi)
    w2 = w * w
    w3 = w2 * w
    p2 = phi * phi
    q2 = psi * psi

    omega_phi = np.stack(
        [2.0 * (1.0 - p2 + q2) / w2, -4.0 * phi * psi / w2, 4.0 * phi / w2]
    )
    omega_psi = np.stack(
        [-4.0 * phi * psi / w2, 2.0 * (1.0 + p2 - q2) / w2, 4.0 * psi / w2]
    )
    omega_phiphi = np.stack(
        [
            4.0 * phi * (p2 - 3.0 * q2 - 3.0) / w3,
            4.0 * psi * (3.0 * p2 - q2 - 1.0) / w3,
            -4.0 * (3.0 * p2 - q2 - 1.0) / w3,
        ]
    )
    omega_phipsi = np.stack(
        [
            4.0 * psi * (3.0 * p2 - q2 - 1.0) / w3,
            4.0 * phi * (3.0 * q2 - p2 - 1.0) / w3,
            -16.0 * phi * psi / w3,
        ]
    )
    omega_psipsi = np.stack(
        [
            4.0 * phi * (3.0 * q2 - p2 - 1.0) / w3,
            4.0 * psi * (q2 - 3.0 * p2 - 3.0) / w3,
            -4.0 * (3.0 * q2 - p2 - 1.0) / w3,
        ]
    )
    return omega_phi, omega_psi, omega_phiphi, omega_phipsi, omega_psipsi


def tangential_projector(omega, a):
    """Project a onto the tangent plane at omega: P a = a - (omega . a) omega.

    Both arguments are component-first, shape (3,) + s.
    """
    omega = np.asarray(omega, dtype=float)
    a = np.asarray(a, dtype=float)
    return a - np.sum(omega * a, axis=0) * omega


def projector_matrix(omega):
    """The projector as a matrix field, P = I - omega otimes omega.

    Returns shape (3, 3) + s for omega of shape (3,) + s.
    """
    omega = np.asarray(omega, dtype=float)
    eye = np.eye(3).reshape((3, 3) + (1,) * (omega.ndim - 1))
    return eye - omega[:, None] * omega[None, :]


def q_tensor(omega, c4):
    """Orientational stress tensor Q(Omega) = c4 (Omega otimes Omega - Id/3).

    Returns shape (3, 3) + s; symmetric and trace-free by construction.
    """
    omega = np.asarray(omega, dtype=float)
    eye = np.eye(3).reshape((3, 3) + (1,) * (omega.ndim - 1))
    return c4 * (omega[:, None] * omega[None, :] - eye / 3.0)
