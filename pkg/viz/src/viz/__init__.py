"""Batch rendering of solver run directories into publication plots.

Reads only the documented artifacts: manifest.json, CSV series, and the
raw little-endian float64 snapshot pairs (.bin plus .json sidecar). It
never imports the solver and never recomputes physics; every number on a
plot traces to a file the solver wrote.
"""

__version__ = "0.1.0"
