"""Rendering of run artifacts into deterministic PNG or SVG images.

Fixed style, fixed figure geometry, color limits taken from the data
unless the spec pins them; text stays text in SVG output so annotations
are checkable. The only transformation applied to stored fields is the
documented stereographic chart map for orientation arrows; no solver
code is involved.
"""

import json
import os
from dataclasses import dataclass

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  backend must be pinned first

from .errors import MissingField, SchemaMismatch
from .reader import pick_snapshot, read_manifest, read_series, read_snapshot

__all__ = ["KINDS", "PlotSpec", "render"]

KINDS = ("field", "quiver", "series", "convergence")

_STYLE = {
    "figure.figsize": (6.4, 4.8),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "soh-viz",
    "svg.fonttype": "none",
}


@dataclass(frozen=True)
class PlotSpec:
    """One plot request: where to read, what to draw, where to write."""

    run_dir: str
    kind: str
    out: str
    field: str = None
    time: float = None
    vmin: float = None
    vmax: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaMismatch(f"kind must be one of {KINDS}, got {self.kind!r}")
        ext = os.path.splitext(self.out)[1].lower()
        if ext not in (".png", ".svg"):
            raise SchemaMismatch(f"output must end in .png or .svg, got {self.out!r}")


def _axes_extent(n):
    # the solver's grid is the 2 pi torus; cell centers at 2 pi k / n
    return (0.0, 2.0 * np.pi, 0.0, 2.0 * np.pi)


def _square_2d(name, arr, base):
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise SchemaMismatch(
            f"field {name} in {base} has shape {arr.shape}; field plots need a 2-d grid"
        )
    return arr


def _chart_to_sphere(phi, psi):
    # documented chart of the stored orientation: W = 1 + phi^2 + psi^2,
    # Omega = (2 phi, 2 psi, phi^2 + psi^2 - 1) / W
    w = 1.0 + phi**2 + psi**2
    return 2.0 * phi / w, 2.0 * psi / w, (phi**2 + psi**2 - 1.0) / w


def _draw_field(ax, spec, fields, sidecar, base):
    name = spec.field or ("rho_hat" if "rho_hat" in fields else None)
    if name is None or name not in fields:
        raise MissingField(f"field {name or spec.field!r} not in {base} ({sorted(fields)})")
    arr = fields[name]
    label = name
    if arr.ndim == 3 and arr.shape[0] == 3:
        arr = np.sqrt(np.sum(arr**2, axis=0))
        label = f"|{name}|"
    arr = _square_2d(name, arr, base)
    image = ax.imshow(
        arr.T,
        origin="lower",
        extent=_axes_extent(arr.shape[0]),
        cmap="viridis",
        vmin=spec.vmin,
        vmax=spec.vmax,
        interpolation="nearest",
    )
    ax.figure.colorbar(image, ax=ax, label=label)
    ax.set_title(f"{label} at t = {sidecar['time']:g}")
    ax.grid(False)


def _draw_quiver(ax, spec, fields, sidecar, base):
    name = spec.field or ("omega" if "phi" in fields else "v")
    if name == "omega":
        if "phi" not in fields or "psi" not in fields:
            raise MissingField(f"{base} stores no orientation chart (phi, psi)")
        phi = _square_2d("phi", fields["phi"], base)
        psi = _square_2d("psi", fields["psi"], base)
        u, w, out_of_plane = _chart_to_sphere(phi, psi)
        label = "Omega"
    else:
        if name not in fields:
            raise MissingField(f"field {name!r} not in {base} ({sorted(fields)})")
        vec = fields[name]
        if vec.ndim != 3 or vec.shape[0] != 3:
            raise SchemaMismatch(
                f"field {name} in {base} has shape {vec.shape}; quiver needs a vector field"
            )
        u = _square_2d(name, vec[0], base)
        w = _square_2d(name, vec[1], base)
        out_of_plane = vec[2]
        label = name
    n = u.shape[0]
    stride = max(1, n // 16)
    sl = slice(stride // 2, None, stride)
    xs = 2.0 * np.pi * np.arange(n) / n
    x1, x2 = np.meshgrid(xs[sl], xs[sl], indexing="ij")
    colors = ax.quiver(
        x1,
        x2,
        u[sl, sl],
        w[sl, sl],
        out_of_plane[sl, sl],
        cmap="coolwarm",
        clim=(spec.vmin, spec.vmax),
        pivot="middle",
        angles="xy",
    )
    ax.figure.colorbar(colors, ax=ax, label=f"{label}_3")
    ax.set_xlim(0.0, 2.0 * np.pi)
    ax.set_ylim(0.0, 2.0 * np.pi)
    ax.set_aspect("equal")
    ax.set_title(f"{label} (in-plane arrows) at t = {sidecar['time']:g}")
    ax.grid(False)


def _draw_series(ax, spec, run_dir):
    series = read_series(os.path.join(run_dir, "series.csv"))
    if "t" not in series:
        raise SchemaMismatch(f"{run_dir}/series.csv has no t column")
    name = spec.field or "energy"
    if name not in series:
        raise MissingField(f"column {name!r} not in series.csv ({sorted(series)})")
    ax.plot(series["t"], series[name], marker="o", markersize=3)
    ax.set_xlabel("t")
    ax.set_ylabel(name)
    ax.set_title(f"{name} over time")
    if spec.vmin is not None or spec.vmax is not None:
        ax.set_ylim(spec.vmin, spec.vmax)


def _draw_convergence(ax, spec, run_dir):
    study = read_series(os.path.join(run_dir, "study.csv"))
    path = os.path.join(run_dir, "fit.json")
    try:
        with open(path, encoding="utf-8") as fh:
            fit = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"no readable fit at {path}: {exc}") from exc
    if "eps" not in study:
        raise SchemaMismatch(f"{run_dir}/study.csv has no eps column")
    name = spec.field or "err_rho"
    if name not in study:
        raise MissingField(f"column {name!r} not in study.csv ({sorted(study)})")
    eps = study["eps"]
    ax.loglog(eps, study[name], "o", label=name)
    slope, intercept = fit.get("slope"), fit.get("intercept")
    if slope is not None and intercept is not None and np.isfinite(slope):
        grid = np.geomspace(eps.min(), eps.max(), 64)
        ax.loglog(
            grid,
            np.exp(intercept) * grid**slope,
            "-",
            label=f"slope = {slope:.3f}",
        )
    ax.set_xlabel("eps")
    ax.set_ylabel(name)
    ax.set_title("convergence under the scale separation")
    ax.legend()


def render(spec):
    """Draw one plot per spec; returns the written image path."""
    read_manifest(spec.run_dir)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        try:
            if spec.kind in ("field", "quiver"):
                base = pick_snapshot(spec.run_dir, spec.time)
                fields, sidecar = read_snapshot(base)
                if spec.kind == "field":
                    _draw_field(ax, spec, fields, sidecar, base)
                else:
                    _draw_quiver(ax, spec, fields, sidecar, base)
                ax.set_xlabel("x1")
                ax.set_ylabel("x2")
            elif spec.kind == "series":
                _draw_series(ax, spec, spec.run_dir)
            else:
                _draw_convergence(ax, spec, spec.run_dir)
            fig.savefig(spec.out, metadata={"Date": None} if spec.out.endswith(".svg") else None)
        finally:
            plt.close(fig)
    return spec.out
