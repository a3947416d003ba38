"""Figure rendering for the experiment CSV outputs.

Three figure kinds, one per CSV contract:

* ``me_vs_eta``    -- sweep_stepsize.csv (algorithm,eta,K,T,me,n_samples):
                      marginal error against stepsize, one labeled series
                      per algorithm, log-scale x.
* ``rounds_vs_T``  -- sweep_local.csv (T,rounds,converged): bar chart of
                      rounds to the error target per sync period.
* ``dim_scaling``  -- dim_vs_comm.csv (kind,d,rounds,rounds_sq,alpha,beta,r2):
                      squared rounds against dimension with the stored
                      least-squares line and its R^2 annotation.

Rendering is read-only over inputs and deterministic: no timestamps or
machine state enter the figure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGURE_KINDS = ("me_vs_eta", "rounds_vs_T", "dim_scaling")


class PlotError(ValueError):
    """Bad plot input: unknown kind, empty CSV, or missing columns."""


@dataclass(frozen=True)
class PlotSpec:
    csv_path: str
    kind: str
    out_path: str

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise PlotError(f"unknown figure kind {self.kind!r}; "
                            f"expected one of {FIGURE_KINDS}")


def read_rows(path, required_columns) -> list[dict]:
    """Read a CSV and check the column contract before any output is made."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required_columns if c not in header]
        if missing:
            raise PlotError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise PlotError(f"{path}: no data rows")
    return rows


def _save(fig, out_path) -> None:
    fig.savefig(out_path, dpi=120, metadata={"Software": "fahmc-plots"})
    plt.close(fig)


def render_me_vs_eta(spec: PlotSpec) -> dict:
    rows = read_rows(spec.csv_path, ["algorithm", "eta", "K", "me"])
    series = {}
    for row in rows:
        series.setdefault(row["algorithm"], []).append(
            (float(row["eta"]), float(row["me"])))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name in sorted(series):
        points = sorted(series[name])
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("stepsize eta")
    ax.set_ylabel("marginal error")
    ax.legend()
    fig.tight_layout()
    _save(fig, spec.out_path)
    return {"out_path": spec.out_path, "series": sorted(series)}


def render_rounds_vs_t(spec: PlotSpec) -> dict:
    rows = read_rows(spec.csv_path, ["T", "rounds", "converged"])
    done = [(int(r["T"]), int(r["rounds"])) for r in rows if r["converged"] == "1"]
    if not done:
        raise PlotError(f"{spec.csv_path}: no converged entries to plot")
    done.sort()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar([str(t) for t, _ in done], [r for _, r in done])
    ax.set_xlabel("local period T")
    ax.set_ylabel("rounds to error target")
    fig.tight_layout()
    _save(fig, spec.out_path)
    return {"out_path": spec.out_path, "bars": len(done)}


def render_dim_scaling(spec: PlotSpec) -> dict:
    rows = read_rows(spec.csv_path,
                     ["kind", "d", "rounds", "rounds_sq", "alpha", "beta", "r2"])
    points = [(float(r["d"]), float(r["rounds_sq"]))
              for r in rows if r["kind"] == "point" and r["rounds_sq"]]
    fits = [r for r in rows if r["kind"] == "fit"]
    if not points:
        raise PlotError(f"{spec.csv_path}: no point rows")
    if not fits:
        raise PlotError(f"{spec.csv_path}: no fit summary row")
    alpha = float(fits[0]["alpha"])
    beta = float(fits[0]["beta"])
    r2 = float(fits[0]["r2"])
    annotation = f"R^2 = {r2:.3f}"

    fig, ax = plt.subplots(figsize=(5, 3.5))
    xs = [p[0] for p in points]
    ax.scatter(xs, [p[1] for p in points], zorder=3, label="measured")
    grid = [min(xs) + (max(xs) - min(xs)) * i / 99 for i in range(100)]
    ax.plot(grid, [alpha * x + beta for x in grid], color="C1",
            label="least-squares fit")
    ax.annotate(annotation, xy=(0.05, 0.9), xycoords="axes fraction")
    ax.set_xlabel("dimension d")
    ax.set_ylabel("(rounds)^2 to W2 target")
    ax.legend()
    fig.tight_layout()
    _save(fig, spec.out_path)
    return {"out_path": spec.out_path, "annotation": annotation, "r2": r2}


_RENDERERS = {
    "me_vs_eta": render_me_vs_eta,
    "rounds_vs_T": render_rounds_vs_t,
    "dim_scaling": render_dim_scaling,
}


def render(spec: PlotSpec) -> dict:
    """Render one figure; returns the output path plus figure metadata."""
    return _RENDERERS[spec.kind](spec)
