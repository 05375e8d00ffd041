"""Numerical laboratory for the coupled SOH-NS / SOK-NS alignment-fluid models.

Library layout:

- ``geometry``      stereographic chart on S^2 and its derivative vectors
- ``sphere``        real spherical harmonics, quadrature, surface calculus
- ``coefficients``  von Mises-Fisher moments, generalized collision invariant,
                    all closure coefficients
- ``torus``         periodic pseudo-spectral calculus and Leray projection
- ``macro``         the macroscopic (SOH-NS) solver in stereographic variables
- ``kinetic``       the mean-field kinetic (SOK-NS) solver
- ``diagnostics``   norms, energy functionals, consistency defects
- ``limit``         the hydrodynamic-limit convergence harness
- ``config``/``runio``/``cli``  reproducible run orchestration
"""

__version__ = "0.1.0"
