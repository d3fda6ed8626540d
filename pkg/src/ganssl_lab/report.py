"""Artifact writers: density CSV, point CSV, static SVG plots and JSON summaries.

Everything written here is a deterministic function of its inputs: fixed
float formatting, LF line endings, sorted JSON keys and no timestamps.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .distributions import GridDensity
from .errors import ContractError, GansslError, ShapeError

SCHEMA_PATH = Path(__file__).with_name("schemas") / "summary.schema.json"


class ArtifactError(GansslError, OSError):
    """An artifact could not be written or read; the message names the path."""


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_text(path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


# -- CSV ------------------------------------------------------------------------------------

def density_csv_text(density: GridDensity) -> str:
    mid = density.midpoints()
    vals = density.array.reshape(-1)
    header = "x,density" if density.dims == 1 else "x,y,density"
    rows = [header]
    for m, v in zip(mid, vals):
        rows.append(",".join([*(_fmt(c) for c in m), _fmt(v)]))
    return "\n".join(rows) + "\n"


def emit_density_csv(density: GridDensity, path):
    """One row per cell midpoint (C order in 2-D), 17 significant digits."""
    return _write_text(path, density_csv_text(density.detach()))


def read_density_csv(path, lower=None, upper=None) -> GridDensity:
    """Inverse of :func:`emit_density_csv`.

    Bounds are inferred from the midpoints unless given explicitly.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc.strerror or exc}") from exc
    header = lines[0].split(",")
    if header not in (["x", "density"], ["x", "y", "density"]):
        raise ShapeError(f"{path}: unexpected header {lines[0]!r}")
    data = np.array([[float(t) for t in ln.split(",")] for ln in lines[1:]], dtype=np.float64)
    dims = len(header) - 1
    axes = [np.unique(data[:, i]) for i in range(dims)]
    cells = tuple(len(a) for a in axes)
    if math.prod(cells) != len(data):
        raise ShapeError(f"{path}: rows do not form a full grid")
    if lower is None or upper is None:
        widths = [(a[-1] - a[0]) / (len(a) - 1) for a in axes]
        lower = tuple(a[0] - w / 2 for a, w in zip(axes, widths))
        upper = tuple(a[-1] + w / 2 for a, w in zip(axes, widths))
    return GridDensity(lower, upper, cells, data[:, -1].reshape(cells))


def emit_table_csv(columns: dict, path):
    """Named equal-length columns; integers are written as integers."""
    names = list(columns)
    if not names:
        raise ContractError("table needs at least one column")
    cols = [np.asarray(columns[n]) for n in names]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ShapeError("table columns must have equal length")

    def cell(v):
        if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
            return str(int(v))
        return _fmt(v)

    rows = [",".join(names)]
    for i in range(n):
        rows.append(",".join(cell(c[i]) for c in cols))
    return _write_text(path, "\n".join(rows) + "\n")


def emit_points_csv(points, path, labels=None):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    cols = {"x": pts[:, 0], "y": pts[:, 1]}
    if labels is not None:
        cols["label"] = np.asarray(labels, dtype=np.int64)
    return emit_table_csv(cols, path)


# -- SVG ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class Series:
    """A line (``kind="line"``) or a marker set (``kind="scatter"``)."""

    name: str
    x: Sequence[float]
    y: Sequence[float]
    color: str = "black"
    kind: str = "line"
    marker: str = "dot"


_W, _H, _M = 640, 420, 50


def _num(v: float) -> str:
    return format(round(float(v), 3), "g")


def _ticks(lo: float, hi: float, n: int = 5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def svg_text(series: Sequence[Series], title: str = "", xlabel: str = "x", ylabel: str = "") -> str:
    if not series:
        raise ContractError("svg plot needs at least one series")
    for s in series:
        if len(s.x) == 0 or len(s.x) != len(s.y):
            raise ContractError(f"series {s.name!r} is empty or has mismatched x/y")
        if s.kind not in ("line", "scatter"):
            raise ContractError(f"unknown series kind {s.kind!r}")
    xs = np.concatenate([np.asarray(s.x, dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s.y, dtype=float) for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if all(s.kind == "line" for s in series):
        y0 = min(y0, 0.0)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    sx = lambda v: _M + (v - x0) / (x1 - x0) * (_W - 2 * _M)
    sy = lambda v: _H - _M - (v - y0) / (y1 - y0) * (_H - 2 * _M)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_M}" y="{_M}" width="{_W - 2 * _M}" height="{_H - 2 * _M}" fill="none" stroke="black" stroke-width="1"/>',
    ]
    if title:
        out.append(f'<text x="{_W / 2:g}" y="{_M / 2:g}" text-anchor="middle" font-size="14">{_escape(title)}</text>')
    for t in _ticks(x0, x1):
        out.append(f'<text x="{_num(sx(t))}" y="{_H - _M + 16}" text-anchor="middle" font-size="10">{_num(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{_M - 4}" y="{_num(sy(t) + 3)}" text-anchor="end" font-size="10">{_num(t)}</text>')
    if xlabel:
        out.append(f'<text x="{_W / 2:g}" y="{_H - 12}" text-anchor="middle" font-size="12">{_escape(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="14" y="{_H / 2:g}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {_H / 2:g})">{_escape(ylabel)}</text>'
        )

    for i, s in enumerate(series):
        xv = np.asarray(s.x, dtype=float)
        yv = np.asarray(s.y, dtype=float)
        out.append(f'<g id="series-{i}" class="{s.kind}">')
        if s.kind == "line":
            pts = " ".join(f"{_num(sx(a))},{_num(sy(b))}" for a, b in zip(xv, yv))
            out.append(f'<polyline fill="none" stroke="{s.color}" stroke-width="1.5" points="{pts}"/>')
        else:
            for a, b in zip(xv, yv):
                out.append(_marker(s.marker, sx(a), sy(b), s.color))
        out.append("</g>")

    # legend, top right
    lx, ly = _W - _M - 150, _M + 14
    out.append('<g id="legend">')
    for i, s in enumerate(series):
        y = ly + 16 * i
        if s.kind == "line":
            out.append(f'<line x1="{lx}" y1="{y - 4}" x2="{lx + 20}" y2="{y - 4}" stroke="{s.color}" stroke-width="2"/>')
        else:
            out.append(_marker(s.marker, lx + 10, y - 4, s.color))
        out.append(f'<text x="{lx + 26}" y="{y}" font-size="11">{_escape(s.name)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _marker(kind: str, x: float, y: float, color: str) -> str:
    if kind == "cross":
        a, b = _num(x - 3), _num(x + 3)
        c, d = _num(y - 3), _num(y + 3)
        return f'<path d="M{a},{c}L{b},{d}M{a},{d}L{b},{c}" stroke="{color}" stroke-width="1"/>'
    return f'<circle cx="{_num(x)}" cy="{_num(y)}" r="2" fill="{color}"/>'


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_svg_plot(series: Sequence[Series], path, title: str = "", xlabel: str = "x", ylabel: str = ""):
    return _write_text(path, svg_text(series, title, xlabel, ylabel))


def density_series(density: GridDensity, name: str, color: str) -> Series:
    if density.dims != 1:
        raise ShapeError("density plots are 1-D only")
    return Series(name, density.axes()[0], density.array, color, "line")


# -- JSON -----------------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    return v


def json_text(payload) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def build_summary(study: str, config, seed: int, metrics: dict, **extra) -> dict:
    """Common summary envelope; ``config`` is an ExperimentConfig."""
    out = {
        "tool": "ganssl-lab",
        "version": __version__,
        "study": study,
        "seed": int(seed),
        "config_digest": config.digest(),
        "metrics": metrics,
    }
    out.update(extra)
    return out


def verification_summary(config, reports) -> dict:
    by_prop: dict = {}
    for r in reports:
        entry = by_prop.setdefault(r.proposition, {"pass": 0, "fail": 0, "n/a": 0, "max_residual": 0.0})
        entry[r.status] += 1
        entry["max_residual"] = max(entry["max_residual"], float(r.max_residual))
    failures = sum(1 for r in reports if not r.passed)
    return build_summary(
        "verify", config, config.seed, {"propositions": by_prop, "reports": len(reports)}, failures=failures
    )


def emit_run_summary(summary: dict, path):
    """Write a summary dict (see :func:`build_summary`) with sorted keys."""
    for key in ("tool", "version", "study", "seed", "config_digest", "metrics"):
        if key not in summary:
            raise ContractError(f"summary is missing {key!r}")
    if summary["study"] == "case1d":
        eps = [row["eps"] for row in summary["metrics"].get("tv_by_eps", [])]
        if eps != sorted(eps):
            raise ContractError("tv_by_eps must be sorted by eps")
    return _write_text(path, json_text(summary))


def emit_json(payload, path):
    return _write_text(path, json_text(payload))


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


def default_out_root() -> Path:
    return Path(os.environ.get("GANSSL_LAB_OUT", "runs"))
