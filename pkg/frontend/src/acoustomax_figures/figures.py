"""Render static figures from scattered quadrature-point CSV data.

Two figure kinds:

* heatmap — one field column of one CSV, interpolated from the scattered
  sample points to a raster over the disk (linear interpolation with
  nearest-neighbor fill, masked outside the sampled region);
* cross-section — the field sampled along a line (default ``y=x``) by
  nearest-point lookup, one curve per input CSV, so a truth file and a
  reconstruction file overlay directly.

Inputs are never modified, and the rasterized arrays are deterministic for
fixed inputs; the CLI is ``acoustomax-figures --input data.csv --field
re_u1 [--section y=x] --output fig.png``.
"""

import argparse
import re
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.interpolate import griddata
from scipy.spatial import cKDTree


class FigureError(Exception):
    """Bad figure specification or unusable input data."""


@dataclass
class FigureSpec:
    """What to render: inputs, column, range, section line, destination."""

    inputs: list
    fields: list
    output: str
    vmin: float = None
    vmax: float = None
    section: str = None  # e.g. "y=x", "y=-x+0.3"; None means heatmap
    grid_n: int = 256
    labels: list = field(default_factory=list)


def read_csv(path):
    """Load one artifact CSV; returns (column names, record array)."""
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except (OSError, ValueError) as exc:
        raise FigureError(f"cannot read CSV {path}: {exc}") from exc
    if data.dtype.names is None:
        raise FigureError(f"{path} has no header row")
    if data.size == 0:
        raise FigureError(f"{path} contains a header but no data rows")
    return list(data.dtype.names), np.atleast_1d(data)


def _column(data, names, column, path):
    if column not in names:
        raise FigureError(
            f"column {column!r} not in {path} (available: {', '.join(names)})"
        )
    return np.asarray(data[column], dtype=float)


def parse_section(text):
    """Parse a section line 'y=[-]x[+-c]' into (slope, offset)."""
    m = re.fullmatch(r"\s*y\s*=\s*(-?)x\s*([+-]\s*[0-9.eE+-]+)?\s*", text)
    if not m:
        raise FigureError(f"cannot parse section line {text!r}; expected 'y=x',"
                          " 'y=-x' or 'y=x+0.25'")
    slope = -1.0 if m.group(1) == "-" else 1.0
    offset = float(m.group(2).replace(" ", "")) if m.group(2) else 0.0
    return slope, offset


# ---------------------------------------------------------------------------
# rasterization (pure data -> arrays; figures are drawn from these)
# ---------------------------------------------------------------------------

def rasterize_heatmap(spec):
    """Interpolate the scattered samples to a raster; NaN outside the data."""
    if len(spec.inputs) != 1:
        raise FigureError("heatmap takes exactly one input CSV")
    path = spec.inputs[0]
    names, data = read_csv(path)
    x = _column(data, names, "x", path)
    y = _column(data, names, "y", path)
    v = _column(data, names, spec.fields[0], path)
    pts = np.stack([x, y], axis=1)
    r = float(np.linalg.norm(pts, axis=1).max())
    gx = np.linspace(-r, r, spec.grid_n)
    gy = np.linspace(-r, r, spec.grid_n)
    GX, GY = np.meshgrid(gx, gy)
    raster = griddata(pts, v, (GX, GY), method="linear")
    nearest = griddata(pts, v, (GX, GY), method="nearest")
    raster = np.where(np.isnan(raster), nearest, raster)
    tree = cKDTree(pts)
    dist, _ = tree.query(np.stack([GX.ravel(), GY.ravel()], axis=1))
    spacing = 2.0 * r / np.sqrt(len(pts))
    outside = dist.reshape(GX.shape) > 3.0 * spacing
    raster[outside] = np.nan
    return gx, gy, raster


def rasterize_section(spec):
    """Sample every input along the section line by nearest-point lookup.

    Returns (t values, list of sampled arrays, labels); t is the arclength
    coordinate along the line.
    """
    slope, offset = parse_section(spec.section or "y=x")
    curves = []
    labels = list(spec.labels)
    t_out = None
    for idx, path in enumerate(spec.inputs):
        names, data = read_csv(path)
        x = _column(data, names, "x", path)
        y = _column(data, names, "y", path)
        column = spec.fields[min(idx, len(spec.fields) - 1)]
        v = _column(data, names, column, path)
        pts = np.stack([x, y], axis=1)
        r = float(np.linalg.norm(pts, axis=1).max())
        direction = np.array([1.0, slope]) / np.hypot(1.0, slope)
        base = np.array([0.0, offset])
        t = np.linspace(-1.5 * r, 1.5 * r, 400)
        line_pts = base[None, :] + t[:, None] * direction[None, :]
        tree = cKDTree(pts)
        dist, nn = tree.query(line_pts)
        spacing = 2.0 * r / np.sqrt(len(pts))
        keep = dist <= 2.0 * spacing
        if not np.any(keep):
            raise FigureError(
                f"section '{spec.section}' has no sample points near it in {path}"
            )
        curves.append((t[keep], v[nn[keep]]))
        if idx >= len(labels):
            labels.append(path)
        t_out = t
    return curves, labels


# ---------------------------------------------------------------------------
# figure writers
# ---------------------------------------------------------------------------

def render_heatmap(spec):
    gx, gy, raster = rasterize_heatmap(spec)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(
        raster, origin="lower", extent=(gx[0], gx[-1], gy[0], gy[-1]),
        vmin=spec.vmin, vmax=spec.vmax, cmap="viridis",
    )
    ax.set_xlabel("x [cm]")
    ax.set_ylabel("y [cm]")
    ax.set_title(spec.fields[0])
    ax.set_aspect("equal")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output


def render_cross_section(spec):
    curves, labels = rasterize_section(spec)
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    styles = ["-", "--", ":", "-."]
    for (t, v), label, style in zip(curves, labels, styles * 4):
        ax.plot(t, v, style, label=label, linewidth=1.4)
    ax.set_xlabel(f"position along {spec.section or 'y=x'} [cm]")
    ax.set_ylabel(spec.fields[0])
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output


def render(spec):
    if spec.section:
        return render_cross_section(spec)
    return render_heatmap(spec)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def make_parser():
    p = argparse.ArgumentParser(
        prog="acoustomax-figures",
        description="render heatmaps and cross-sections from acoustomax CSVs",
    )
    p.add_argument("--input", action="append", required=True,
                   help="input CSV (repeat to overlay curves in a section)")
    p.add_argument("--field", action="append", required=True,
                   help="CSV column to plot (repeat per input if they differ)")
    p.add_argument("--section", help="cross-section line, e.g. 'y=x' or 'y=x+0.2';"
                                     " omit for a heatmap")
    p.add_argument("--output", required=True, help="output PNG path")
    p.add_argument("--vmin", type=float)
    p.add_argument("--vmax", type=float)
    p.add_argument("--label", action="append", default=[],
                   help="curve label (repeat per input)")
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    spec = FigureSpec(
        inputs=args.input,
        fields=args.field,
        output=args.output,
        vmin=args.vmin,
        vmax=args.vmax,
        section=args.section,
        labels=args.label,
    )
    try:
        out = render(spec)
    except FigureError as exc:
        print(f"figure error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
