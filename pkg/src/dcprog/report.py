"""Run reports and their JSON, CSV and SVG renderings."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

FORMATS = ("json", "csv", "svg")


class UnsupportedFormat(ValueError):
    pass


@dataclass
class RunReport:
    example: str
    params: dict
    seed: int
    ccp: dict
    status: str
    objective: float | None
    feasibility: dict
    trace: list
    metrics: dict
    best_restart: int = 0
    solution: dict = field(default_factory=dict)
    figure: dict = field(default_factory=dict)
    message: str = ""
    timing: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def max_violation(self) -> float:
        vals = [v for v in self.feasibility.values() if v is not None]
        return max(vals, default=math.inf if not self.solution else 0.0)

    def to_dict(self, timing: bool = True) -> dict:
        d = _clean(asdict(self))
        if not timing:
            d.pop("timing")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunReport:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> RunReport:
        return cls.from_dict(json.loads(text))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


TRACE_COLUMNS = ("k", "objective", "max_slack", "tau")


def trace_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for rec in report.trace:
        w.writerow(["" if rec.get(c) is None else repr(rec[c]) for c in TRACE_COLUMNS])
    return buf.getvalue()


def sweep_csv(reports: list[RunReport], param: str) -> str:
    metric_names = sorted({k for r in reports for k, v in r.metrics.items() if _scalar(v)})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([param, "seed", "status", "objective", "max_violation"] + metric_names)
    for r in reports:
        w.writerow([r.params[param], r.seed, r.status, _fmt(r.objective), _fmt(r.max_violation())]
                   + [_fmt(r.metrics.get(k)) for k in metric_names])
    return buf.getvalue()


def sweep_summary(reports: list[RunReport], param: str, metric: str) -> list[tuple[float, float]]:
    """Mean of ``metric`` per parameter value, ordered by value."""
    groups: dict = {}
    for r in reports:
        v = r.metrics.get(metric)
        if _scalar(v) and v is not None:
            groups.setdefault(r.params[param], []).append(float(v))
    return [(k, float(np.mean(groups[k]))) for k in sorted(groups)]


def _scalar(v) -> bool:
    return v is None or isinstance(v, (bool, int, float))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


# -- figures -----------------------------------------------------------------------


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "dcprog"
    return plt


def _draw_circles(ax, fig):
    import matplotlib.patches as mp

    c, r = np.array(fig["centers"]), np.array(fig["radii"])
    half = float(np.max(np.abs(c).max(axis=1) + r))
    for (cx, cy), ri in zip(c, r):
        ax.add_patch(mp.Circle((cx, cy), ri, fill=False))
    ax.add_patch(mp.Rectangle((-half, -half), 2 * half, 2 * half, fill=False, linestyle="--"))
    ax.set_xlim(-1.05 * half, 1.05 * half)
    ax.set_ylim(-1.05 * half, 1.05 * half)
    ax.set_aspect("equal")


def _draw_path(ax, fig):
    import matplotlib.patches as mp

    p = np.array(fig["path"])
    for c, r in zip(fig["centers"], fig["radii"]):
        ax.add_patch(mp.Circle(c[:2], r, color="0.8"))
    ax.plot(p[0], p[1], ".-")
    ax.set_aspect("equal")


def _draw_collision(ax, fig):
    for i, y in enumerate(fig["outputs"]):
        y = np.array(y)
        ax.plot(y[0], y[1], label=f"agent {i}")
        ax.plot(y[0, 0], y[1, 0], "ko")
    ax.legend()
    ax.set_aspect("equal")


def _draw_filter(ax, fig):
    w = np.array(fig["omega"])
    ax.plot(w, fig["magnitude"])
    ax.hlines([fig["L_pass"], fig["U_pass"]], 0, fig["pass_edge"], colors="k", linestyles="--")
    ax.hlines([fig["U_stop"]], fig["stop_edge"], np.pi, colors="k", linestyles="--")
    ax.set_xlabel("omega")
    ax.set_ylabel("|H|")


def _draw_recovery(ax, fig):
    ax.scatter(fig["x0"], fig["x"], s=8)
    top = max(max(fig["x0"]), 1e-9)
    ax.plot([0, top], [0, top], "k--")
    ax.set_xlabel("true")
    ax.set_ylabel("recovered")


def _draw_phase(ax, fig):
    x, x0 = np.array(fig["x"]), np.array(fig["x0"])
    xc, x0c = x[0] + 1j * x[1], x0[0] + 1j * x0[1]
    inner = np.vdot(xc, x0c)
    if abs(inner) > 0:
        xc = xc * inner / abs(inner)
    ax.scatter(x0c.real, x0c.imag, marker="o", facecolors="none", edgecolors="k", label="true")
    ax.scatter(xc.real, xc.imag, marker="x", label="recovered")
    ax.legend()
    ax.set_aspect("equal")


def _draw_entries(ax, fig):
    ax.stem(np.arange(len(fig["x"])), fig["x"])


_DRAW = {
    "circle-packing": _draw_circles,
    "path-planning": _draw_path,
    "collision-avoidance": _draw_collision,
    "filter-design": _draw_filter,
    "sparse-recovery": _draw_recovery,
    "phase-retrieval": _draw_phase,
    "sparse-singular-vectors": _draw_entries,
}


def _svg(draw) -> str:
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 5))
    draw(ax)
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def report_svg(report: RunReport) -> str:
    draw = _DRAW.get(report.example)
    if draw is None:
        raise UnsupportedFormat(f"no single-run figure for {report.example}; run a sweep instead")
    if not report.figure:
        raise UnsupportedFormat("report has no solution to draw")
    return _svg(lambda ax: draw(ax, report.figure))


def sweep_svg(reports: list[RunReport], param: str, metric: str) -> str:
    pts = sweep_summary(reports, param, metric)

    def draw(ax):
        ax.plot([p for p, _ in pts], [v for _, v in pts], "o-")
        ax.set_xlabel(param)
        ax.set_ylabel(metric)

    return _svg(draw)


def emit(report: RunReport, fmt: str, out_dir: str | Path, stem: str | None = None) -> Path:
    """Write one rendering of ``report`` to ``out_dir`` and return its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or report.example
    if fmt == "json":
        path, text = out_dir / f"{stem}.json", report.to_json()
    elif fmt == "csv":
        path, text = out_dir / f"{stem}-trace.csv", trace_csv(report)
    elif fmt == "svg":
        path, text = out_dir / f"{stem}.svg", report_svg(report)
    else:
        raise UnsupportedFormat(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
    path.write_text(text)
    return path


def emit_sweep(reports: list[RunReport], param: str, metric: str, fmt: str,
               out_dir: str | Path, stem: str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out_dir / f"{stem}.json"
        text = json.dumps({"param": param, "metric": metric,
                           "summary": [list(p) for p in sweep_summary(reports, param, metric)],
                           "runs": [r.to_dict() for r in reports]}, sort_keys=True, indent=2) + "\n"
    elif fmt == "csv":
        path, text = out_dir / f"{stem}.csv", sweep_csv(reports, param)
    elif fmt == "svg":
        path, text = out_dir / f"{stem}.svg", sweep_svg(reports, param, metric)
    else:
        raise UnsupportedFormat(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
    path.write_text(text)
    return path


__all__ = ["RunReport", "UnsupportedFormat", "FORMATS", "emit", "emit_sweep", "trace_csv",
           "sweep_csv", "sweep_summary", "report_svg", "sweep_svg"]
