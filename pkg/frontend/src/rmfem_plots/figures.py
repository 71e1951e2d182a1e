"""Figure renderers.

Every renderer takes input file paths and an output stem and writes the
figure as both PNG and SVG with a fixed deterministic style: no
timestamps or volatile metadata, so re-rendering the same inputs is
byte-stable.
"""

import json

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import matplotlib.tri as mtri
import numpy as np

from .csvio import column, read_csv

EDGE_ONLY_THRESHOLD = 50_000  # above this many elements, draw edges only

plt.rcParams.update({
    "figure.figsize": (4.8, 3.4),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "rmfem-plots",
    "savefig.dpi": 150,
})


def _save(fig, output_stem):
    paths = []
    for ext in ("png", "svg"):
        path = f"{output_stem}.{ext}"
        fig.savefig(path, metadata={"Software": None} if ext == "png"
                    else {"Date": None}, bbox_inches="tight")
        paths.append(path)
    plt.close(fig)
    return paths


def _load_mesh(path):
    data = json.loads(open(path).read())
    return (int(data["dim"]), np.asarray(data["vertices"], dtype=float),
            np.asarray(data["elements"], dtype=int))


def convergence_figure(adapt_csv, output_stem):
    """Global estimator and true error per adaptive iteration."""
    rows = read_csv(adapt_csv, required=("iteration", "n_elements", "estimator"))
    its = column(rows, "iteration")
    fig, ax = plt.subplots()
    ax.semilogy(its, column(rows, "estimator"), "o-", label="estimator")
    errs = column(rows, "true_error")
    if any(e is not None for e in errs):
        ax.semilogy(its, errs, "s--", label="true error")
    ax.set_xlabel("iteration")
    ax.set_ylabel("energy norm")
    ax.legend()
    return _save(fig, output_stem)


def effectivity_figure(adapt_csv, output_stem):
    rows = read_csv(adapt_csv, required=("iteration", "effectivity"))
    its = column(rows, "iteration")
    eff = column(rows, "effectivity")
    fig, ax = plt.subplots()
    if any(e is not None for e in eff):
        ax.plot(its, eff, "o-")
        ax.axhline(1.0, color="k", lw=0.8, alpha=0.5)
    else:
        ax.annotate("no data", (0.5, 0.5), xycoords="axes fraction",
                    ha="center", va="center")
    ax.set_xlabel("iteration")
    ax.set_ylabel("effectivity index")
    return _save(fig, output_stem)


def indicators_figure(estimators_csv, output_stem):
    """Local indicators (and true local errors when present) by position."""
    rows = read_csv(estimators_csv, required=("kind", "center_x", "local"))
    fig, ax = plt.subplots()
    locs = [r["local"] for r in rows]
    if not rows or all(v is None for v in locs):
        ax.annotate("no data", (0.5, 0.5), xycoords="axes fraction",
                    ha="center", va="center")
        ax.set_xlabel("x")
        return _save(fig, output_stem)
    kinds = sorted({r["kind"] for r in rows})
    for kind in kinds:
        sub = [r for r in rows if r["kind"] == kind and r["local"] is not None]
        ax.semilogy([r["center_x"] for r in sub], [max(r["local"], 1e-300) for r in sub],
                    ".", ms=3, label=str(kind))
    first = [r for r in rows if r["kind"] == kinds[0] and r.get("true_local") is not None]
    if first:
        ax.semilogy([r["center_x"] for r in first],
                    [max(r["true_local"], 1e-300) for r in first],
                    "k.", ms=2, alpha=0.5, label="true local error")
    ax.set_xlabel("element center x")
    ax.set_ylabel("local indicator")
    ax.legend(fontsize=7)
    return _save(fig, output_stem)


def solution_figure(mesh_json, field_json, output_stem):
    dim, vertices, elements = _load_mesh(mesh_json)
    values = np.asarray(json.loads(open(field_json).read())["nodal_values"], dtype=float)
    fig, ax = plt.subplots()
    if dim == 1:
        ax.plot(vertices[:, 0], values, "-", lw=1)
        ax.set_xlabel("x")
        ax.set_ylabel("u_h")
    else:
        tri = mtri.Triangulation(vertices[:, 0], vertices[:, 1], elements)
        tpc = ax.tripcolor(tri, values, shading="gouraud")
        fig.colorbar(tpc, ax=ax)
        ax.set_aspect("equal")
    return _save(fig, output_stem)


def mesh_figure(mesh_json, output_stem):
    dim, vertices, elements = _load_mesh(mesh_json)
    fig, ax = plt.subplots()
    if dim == 1:
        x = vertices[:, 0]
        ax.plot(x, np.zeros_like(x), "|", ms=12)
        ax.hist(x[:-1], bins=min(60, max(10, len(x) // 8)), weights=1.0 / np.diff(x),
                histtype="step", color="C1")
        ax.set_xlabel("x")
        ax.set_ylabel("local density 1/h")
    else:
        tri = mtri.Triangulation(vertices[:, 0], vertices[:, 1], elements)
        if len(elements) > EDGE_ONLY_THRESHOLD:
            ax.triplot(tri, lw=0.1, color="k")
        else:
            ax.triplot(tri, lw=0.3, color="k")
        ax.set_aspect("equal")
    return _save(fig, output_stem)


def posterior_figure(summary_json, output_stem):
    """Posterior mean with a +-2 std band against the true conductivity."""
    data = json.loads(open(summary_json).read())
    fig, axes = None, None
    by_mesh = data.get("by_mesh")
    if by_mesh:
        meshes = sorted(by_mesh, key=lambda s: int(s))
        fig, axes = plt.subplots(2, len(meshes), figsize=(2.8 * len(meshes), 4.6),
                                 sharex=True, sharey="row", squeeze=False)
        grid = np.asarray(data["grid"], dtype=float)
        truth = np.asarray(data["truth"]["kappa_grid"], dtype=float)
        for col, n in enumerate(meshes):
            for row, key in enumerate(("deterministic", "probabilistic")):
                ax = axes[row, col]
                s = by_mesh[n][key]
                mean = np.asarray(s["kappa_mean"])
                std = np.asarray(s["kappa_std"])
                ax.fill_between(grid, mean - 2 * std, mean + 2 * std,
                                color="0.8", label="confidence interval")
                ax.plot(grid, truth, "k-", lw=1, label="truth")
                ax.plot(grid, mean, "C0--", lw=1, label="posterior mean")
                if row == 0:
                    ax.set_title(f"N = {n}", fontsize=9)
        axes[0, 0].set_ylabel("deterministic")
        axes[1, 0].set_ylabel("randomized")
        axes[0, -1].legend(fontsize=6)
    else:
        fig, ax = plt.subplots()
        s = data["probabilistic"]
        mean = np.asarray(s["kappa_mean"])
        std = np.asarray(s["kappa_std"])
        idx = np.arange(len(mean))
        ax.fill_between(idx, mean - 2 * std, mean + 2 * std, color="0.8")
        ax.plot(idx, mean, "C0--", lw=1)
        ax.set_xlabel("grid index")
        ax.set_ylabel("conductivity")
    return _save(fig, output_stem)


def loglog_convergence_figure(convergence_csv, output_stem):
    """Deterministic and randomized errors against h, per damping exponent."""
    rows = read_csv(convergence_csv, required=("p", "h", "err_det", "dist_rm_rms"))
    fig, ax = plt.subplots()
    ps = sorted({r["p"] for r in rows})
    first = [r for r in rows if r["p"] == ps[0]]
    ax.loglog([r["h"] for r in first], [r["err_det"] for r in first], "k^-",
              label="deterministic error")
    for p in ps:
        sub = [r for r in rows if r["p"] == p]
        ax.loglog([r["h"] for r in sub], [r["dist_rm_rms"] for r in sub], "o--",
                  label=f"randomization, p={p:g}")
    ax.set_xlabel("h")
    ax.set_ylabel("energy norm")
    ax.legend(fontsize=7)
    return _save(fig, output_stem)
