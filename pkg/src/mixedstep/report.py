"""Figure and table generation from campaign results.

Each figure is produced in two steps: a table of plotted numbers is computed
from the complete tests of a :class:`ResultSet` and written as CSV, then the
SVG is drawn from that CSV alone. Re-running the plot step on the CSV twin
therefore regenerates the figure exactly.
"""

from __future__ import annotations

import csv
import os

import numpy as np
from matplotlib import rcParams
from matplotlib.figure import Figure

from .harness import ResultSet, complete_rows, summarize

__all__ = ["FIGURES", "figure_table", "write_table", "plot_from_csv", "make_figure"]

EMPTY_MARKER = "# no complete tests"

_TABLES = {
    "tol-error": ("variant", "N", "rel_tol", "count", "median", "p5", "p95"),
    "size-error": ("variant", "N", "rel_tol", "count", "p1", "q1", "median", "q3", "p99"),
    "local-error": ("variant", "rel_tol", "count", "median_ebs", "median_eanalytic"),
    "beta-table": ("benchmark", "variant", "count", "min", "q1", "median", "q3", "max"),
}
FIGURES = tuple(_TABLES)

_COLORS = {"single": "tab:red", "mixed1": "tab:orange", "mixed2": "tab:green", "double": "tab:blue"}


def _grouped(rows, keys, value):
    out: dict = {}
    for r in rows:
        v = r[value]
        if v is None:
            continue
        out.setdefault(tuple(r[k] for k in keys), []).append(v)
    return out


def _variant_order(rs: ResultSet):
    return {v: k for k, v in enumerate(rs.variants)}


def figure_table(rs: ResultSet, figure: str) -> list[tuple]:
    """Rows of plotted numbers for ``figure`` over the complete tests."""
    if figure not in _TABLES:
        raise ValueError(f"unknown figure {figure!r}; expected one of {', '.join(FIGURES)}")
    rows = complete_rows(rs)
    order = _variant_order(rs)
    out = []
    if figure in ("tol-error", "size-error"):
        groups = _grouped(rows, ("variant", "N", "rel_tol"), "final_error")
        for (v, n, tol), vals in sorted(groups.items(), key=lambda kv: (order.get(kv[0][0], 99), kv[0][1], -kv[0][2])):
            s = summarize(vals)
            if figure == "tol-error":
                out.append((v, n, tol, s.count, s.median, s.p5, s.p95))
            else:
                out.append((v, n, tol, s.count, s.p1, s.q1, s.median, s.q3, s.p99))
    elif figure == "local-error":
        rows = [r for r in rows if r["benchmark"] == "lco"]
        ebs = _grouped(rows, ("variant", "rel_tol"), "mean_ebs")
        ean = _grouped(rows, ("variant", "rel_tol"), "mean_eanalytic")
        for key in sorted(ebs, key=lambda k: (order.get(k[0], 99), -k[1])):
            a = summarize(ebs[key])
            b = summarize(ean[key]) if key in ean else None
            out.append((key[0], key[1], a.count, a.median, b.median if b else None))
    else:
        groups = _grouped(rows, ("benchmark", "variant"), "beta")
        for (bench, v), vals in sorted(groups.items(), key=lambda kv: (kv[0][0], order.get(kv[0][1], 99))):
            s = summarize(vals)
            out.append((bench, v, s.count) + s.five_number())
    return out


def write_table(path, figure: str, table) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_TABLES[figure])
        if not table:
            fh.write(EMPTY_MARKER + "\n")
        for row in table:
            w.writerow(["" if x is None else (repr(x) if isinstance(x, float) else x) for x in row])


def _read_table(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    for r in rows:
        for k, v in r.items():
            if k in ("variant", "benchmark"):
                continue
            r[k] = None if v == "" else (int(v) if k in ("N", "count") else float(v))
    return rows


def _new_figure(ncols=1):
    fig = Figure(figsize=(4.2 * ncols, 3.6), layout="constrained")
    axes = [fig.add_subplot(1, ncols, k + 1) for k in range(ncols)]
    return fig, axes


def _save(fig, path):
    with _FixedSalt():
        fig.savefig(path, format="svg", metadata={"Date": None})


class _FixedSalt:
    """Fixed SVG id salt so identical data gives byte-identical files."""

    def __enter__(self):
        self._old = rcParams["svg.hashsalt"]
        rcParams["svg.hashsalt"] = "mixedstep"

    def __exit__(self, *exc):
        rcParams["svg.hashsalt"] = self._old


def _empty(svg_path, title):
    fig, (ax,) = _new_figure()
    ax.set_axis_off()
    ax.text(0.5, 0.5, "no complete tests", ha="center", va="center")
    ax.set_title(title)
    _save(fig, svg_path)


def _plot_tol_error(rows, svg_path):
    sizes = sorted({r["N"] for r in rows})
    fig, axes = _new_figure(len(sizes))
    for ax, n in zip(axes, sizes):
        for v in dict.fromkeys(r["variant"] for r in rows):
            pts = sorted((r["rel_tol"], r["median"], r["p5"], r["p95"])
                         for r in rows if r["N"] == n and r["variant"] == v)
            tol, med, lo, hi = (np.array(c) for c in zip(*pts))
            ax.errorbar(tol, med, yerr=[med - lo, hi - med], marker="o", ms=3,
                        capsize=2, label=v, color=_COLORS.get(v))
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("relative tolerance")
        ax.set_ylabel("normalized final error")
        ax.set_title(f"N = {n}")
    axes[0].legend(fontsize="small")
    _save(fig, svg_path)


def _plot_size_error(rows, svg_path):
    tols = sorted({r["rel_tol"] for r in rows}, reverse=True)
    fig, axes = _new_figure(len(tols))
    for ax, tol in zip(axes, tols):
        sel = [r for r in rows if r["rel_tol"] == tol]
        stats, colors = [], []
        for r in sel:
            stats.append({"label": f"{r['variant']}\nN={r['N']}", "whislo": r["p1"], "q1": r["q1"],
                          "med": r["median"], "q3": r["q3"], "whishi": r["p99"], "fliers": []})
            colors.append(_COLORS.get(r["variant"], "k"))
        bp = ax.bxp(stats, showfliers=False, patch_artist=True)
        for patch, c in zip(bp["boxes"], colors):
            patch.set_facecolor(c)
            patch.set_alpha(0.5)
        ax.set_yscale("log")
        ax.tick_params(axis="x", labelsize=6, rotation=90)
        ax.set_title(f"tol = {tol:g}")
        ax.set_ylabel("normalized final error")
    _save(fig, svg_path)


def _plot_local_error(rows, svg_path):
    fig, (ax,) = _new_figure()
    for v in dict.fromkeys(r["variant"] for r in rows):
        pts = sorted((r["rel_tol"], r["median_ebs"], r["median_eanalytic"])
                     for r in rows if r["variant"] == v)
        tol = np.array([p[0] for p in pts])
        c = _COLORS.get(v)
        ax.plot(tol, [p[1] for p in pts], "o--", ms=3, color=c, label=f"{v} estimated")
        ean = [np.nan if p[2] is None else p[2] for p in pts]
        ax.plot(tol, ean, "s-", ms=3, color=c, label=f"{v} real")
    tols = sorted({r["rel_tol"] for r in rows})
    ax.plot(tols, tols, ":", color="gray", label="tolerance")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("relative tolerance")
    ax.set_ylabel("averaged local error")
    ax.legend(fontsize="x-small")
    _save(fig, svg_path)


def _plot_beta_table(rows, svg_path):
    fig, (ax,) = _new_figure()
    ax.set_axis_off()
    cells = [[r["benchmark"], r["variant"], str(r["count"]),
              "({:.3g}, {:.3g}, {:.3g}, {:.3g}, {:.3g})".format(
                  r["min"], r["q1"], r["median"], r["q3"], r["max"])] for r in rows]
    tab = ax.table(cellText=cells, colLabels=["benchmark", "solver", "tests", "beta (min, q1, median, q3, max)"],
                   loc="center")
    tab.auto_set_font_size(False)
    tab.set_fontsize(7)
    _save(fig, svg_path)


_PLOTTERS = {
    "tol-error": _plot_tol_error,
    "size-error": _plot_size_error,
    "local-error": _plot_local_error,
    "beta-table": _plot_beta_table,
}


def plot_from_csv(csv_path, svg_path, figure: str) -> bool:
    """Draw ``figure`` from its CSV twin; returns False for an empty table."""
    rows = _read_table(csv_path)
    if not rows:
        _empty(svg_path, figure)
        return False
    _PLOTTERS[figure](rows, svg_path)
    return True


def make_figure(rs: ResultSet, figure: str, out_dir) -> tuple[str, str, bool]:
    """Write ``<figure>.csv`` and ``<figure>.svg`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    table = figure_table(rs, figure)
    csv_path = os.path.join(out_dir, f"{figure}.csv")
    svg_path = os.path.join(out_dir, f"{figure}.svg")
    write_table(csv_path, figure, table)
    has_data = plot_from_csv(csv_path, svg_path, figure)
    return csv_path, svg_path, has_data
