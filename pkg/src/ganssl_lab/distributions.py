"""Densities on uniform grids, samplers, and the disc-union data manifold."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DomainError, ShapeError

# Clamp applied to every density before it enters a logarithm.
DENSITY_FLOOR = 1e-12
UNLABELED = -1
_KDE_CHUNK = 4096


def _as_tuple(x, cast):
    if np.ndim(x) == 0:
        return (cast(x),)
    return tuple(cast(v) for v in x)


@dataclass(frozen=True)
class GridDensity:
    """Density values at the midpoints of a uniform 1-D or 2-D grid.

    ``values`` has shape ``cells``.  It is normally an ndarray; densities
    built from generator samples during training hold a :class:`Tensor` so
    gradients flow back to the samples.
    """

    lower: tuple
    upper: tuple
    cells: tuple
    values: object = field(repr=False)

    def __post_init__(self):
        lower = _as_tuple(self.lower, float)
        upper = _as_tuple(self.upper, float)
        cells = _as_tuple(self.cells, int)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "cells", cells)
        if not (len(lower) == len(upper) == len(cells)) or len(cells) not in (1, 2):
            raise ShapeError("a grid has 1 or 2 dimensions with matching bounds and cell counts")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise DomainError(f"bounds must be strictly ordered, got {lower} .. {upper}")
        if min(cells) < 1:
            raise DomainError("cell counts must be positive")
        values = self.values
        if not isinstance(values, Tensor):
            values = np.asarray(values, dtype=np.float64)
            object.__setattr__(self, "values", values)
        if tuple(values.shape) != cells:
            raise ShapeError(f"values shape {values.shape} does not match cells {cells}")
        raw = ad.value_of(values)
        if not np.all(np.isfinite(raw)) or np.any(raw < 0):
            raise DomainError("density values must be finite and non-negative")

    @property
    def dims(self) -> int:
        return len(self.cells)

    @property
    def widths(self):
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.cells))

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.widths))

    @property
    def array(self) -> np.ndarray:
        return ad.value_of(self.values)

    def axes(self):
        """Midpoint coordinates along each dimension."""
        return [lo + (np.arange(n) + 0.5) * w for lo, n, w in zip(self.lower, self.cells, self.widths)]

    def midpoints(self) -> np.ndarray:
        """``(n_cells, dims)`` array of midpoints in C order."""
        axes = self.axes()
        if self.dims == 1:
            return axes[0][:, None]
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def mass(self) -> float:
        return float(self.array.sum() * self.cell_measure)

    def same_grid(self, other: "GridDensity") -> bool:
        return self.lower == other.lower and self.upper == other.upper and self.cells == other.cells

    def with_values(self, values) -> "GridDensity":
        return GridDensity(self.lower, self.upper, self.cells, values)

    def normalized(self) -> "GridDensity":
        z = self.mass()
        if not z > 0:
            raise DomainError("cannot normalize a density with zero mass")
        return self.with_values(self.values * (1.0 / z) if isinstance(self.values, Tensor) else self.values / z)

    def detach(self) -> "GridDensity":
        return self.with_values(self.array.copy())


def check_same_grid(p: GridDensity, q: GridDensity):
    if not p.same_grid(q):
        raise ShapeError(
            f"grid mismatch: {p.lower}..{p.upper} x {p.cells} vs {q.lower}..{q.upper} x {q.cells}"
        )


def gaussian_pdf(mu, sigma, x):
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    z = (np.asarray(x, dtype=np.float64) - mu) / sigma
    out = np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))
    return float(out) if np.ndim(out) == 0 else out


def discretize(pdf: Callable, lower, upper, cells, normalize: bool = True) -> GridDensity:
    """Evaluate ``pdf`` at cell midpoints (``pdf(x)`` in 1-D, ``pdf(x, y)`` in 2-D)."""
    cells_t = _as_tuple(cells, int)
    if min(cells_t) < 2:
        raise DomainError("need at least 2 cells per dimension")
    shell = GridDensity(lower, upper, cells_t, np.zeros(cells_t))
    axes = shell.axes()
    if shell.dims == 1:
        values = np.asarray(pdf(axes[0]), dtype=np.float64)
    else:
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        values = np.asarray(pdf(xx, yy), dtype=np.float64)
    values = np.broadcast_to(values, cells_t).astype(np.float64)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        bad = np.argwhere(~(values >= 0))
        raise DomainError(f"pdf is negative or non-finite at cell {tuple(bad[0]) if len(bad) else '?'}")
    density = shell.with_values(values)
    return density.normalized() if normalize else density


def gaussian_grid(mu, sigma, lower=-2.0, upper=2.0, cells=400) -> GridDensity:
    return discretize(lambda x: gaussian_pdf(mu, sigma, x), lower, upper, cells)


def sample_gaussian(rng: np.random.Generator, mu, sigma, n) -> np.ndarray:
    if n < 1:
        raise ContractError("n must be at least 1")
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return mu + sigma * rng.standard_normal(n)


def sample_disc_uniform(rng: np.random.Generator, center, radius, n) -> np.ndarray:
    """Uniform points in a disc by the polar method (radius ~ R * sqrt(U))."""
    if not radius > 0:
        raise DomainError(f"radius must be positive, got {radius}")
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    c = np.asarray(center, dtype=np.float64)
    return np.column_stack([c[0] + r * np.cos(theta), c[1] + r * np.sin(theta)])


def silverman_bandwidth(samples) -> float:
    x = np.asarray(ad.value_of(samples), dtype=np.float64).reshape(len(samples), -1)[:, 0]
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(np.std(x), (q75 - q25) / 1.34)
    return float(0.9 * spread * len(x) ** (-0.2))


def kde_on_grid(samples, bandwidth, lower, upper, cells) -> GridDensity:
    """Gaussian-kernel density of ``samples`` at grid midpoints, renormalized on the grid.

    ``samples`` is ``(n,)`` or ``(n, 1)`` in 1-D and ``(n, 2)`` in 2-D.  When it
    is a Tensor the returned values are a Tensor differentiable with respect to
    the sample positions.  ``bandwidth="silverman"`` picks Silverman's rule.
    """
    if isinstance(bandwidth, str):
        if bandwidth != "silverman":
            raise DomainError(f"unknown bandwidth rule {bandwidth!r}")
        bandwidth = silverman_bandwidth(samples)
    if not bandwidth > 0:
        raise DomainError("bandwidth must be positive")
    tracked = isinstance(samples, Tensor)
    raw = ad.value_of(samples)
    n = raw.shape[0] if raw.ndim else 0
    if n == 0:
        raise DomainError("kde needs at least one sample")
    shell = GridDensity(lower, upper, cells, np.zeros(_as_tuple(cells, int)))
    x = raw.reshape(n, -1)
    if x.shape[1] != shell.dims:
        raise ShapeError(f"samples have dimension {x.shape[1]}, grid has {shell.dims}")
    h = float(bandwidth)
    mid = shell.midpoints()
    norm = 1.0 / ((h * math.sqrt(2.0 * math.pi)) ** shell.dims * n)
    if not tracked:
        flat = np.zeros(len(mid))
        for start in range(0, n, _KDE_CHUNK):
            diff = mid[None, :, :] - x[start : start + _KDE_CHUNK, None, :]
            flat += np.exp(-0.5 * np.sum(diff * diff, axis=2) / (h * h)).sum(axis=0)
        flat *= norm
    else:
        diff = mid[None, :, :] - x[:, None, :]
        kernel = np.exp(-0.5 * np.sum(diff * diff, axis=2) / (h * h))
        flat = norm * kernel.sum(axis=0)
    if not flat.sum() * shell.cell_measure > 0:
        raise DomainError("all samples are too far from the grid; kde has no mass")
    if tracked:
        sample_shape = raw.shape

        def fn(g):
            weighted = kernel * g.reshape(1, -1)
            grad = np.einsum("nm,nmd->nd", weighted, diff) * (norm / (h * h))
            return (grad.reshape(sample_shape),)

        values = Tensor(flat.reshape(shell.cells), (samples,), fn, "gaussian_kde")
        # renormalization stays inside the graph: mass leaving the grid matters
        return shell.with_values(values / (values.sum() * shell.cell_measure))
    return shell.with_values(flat.reshape(shell.cells) / (flat.sum() * shell.cell_measure))


# -- data manifold ------------------------------------------------------------------

@dataclass(frozen=True)
class Disc:
    center: tuple
    radius: float
    label: int
    subdomain: int = 1

    @property
    def name(self) -> str:
        return f"{self.label}{self.subdomain}"


@dataclass(frozen=True)
class ManifoldSpec:
    """A union of pairwise-disjoint labeled discs."""

    discs: tuple
    n_classes: int

    def __post_init__(self):
        discs = tuple(
            d if isinstance(d, Disc) else Disc(tuple(map(float, d[0])), float(d[1]), int(d[2]), int(d[3]) if len(d) > 3 else 1)
            for d in self.discs
        )
        object.__setattr__(self, "discs", discs)
        if self.n_classes < 1:
            raise DomainError("need at least one class")
        for d in discs:
            if not d.radius > 0:
                raise DomainError(f"disc {d.name} has non-positive radius")
            if not 1 <= d.label <= self.n_classes:
                raise DomainError(f"disc {d.name} has class {d.label} outside 1..{self.n_classes}")
        for i, a in enumerate(discs):
            for b in discs[i + 1 :]:
                gap = math.dist(a.center, b.center)
                if not gap > a.radius + b.radius:
                    raise DomainError(f"discs {a.name} and {b.name} overlap or touch")
        names = [d.name for d in discs]
        if len(set(names)) != len(names):
            raise DomainError("disc (class, subdomain) pairs must be unique")

    def locate(self, points) -> np.ndarray:
        """Index of the disc containing each point, or -1 outside every disc."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        where = np.full(len(pts), -1)
        for i, d in enumerate(self.discs):
            inside = np.sum((pts - np.asarray(d.center)) ** 2, axis=1) <= d.radius**2
            where[inside] = i
        return where

    def true_labels(self, points) -> np.ndarray:
        idx = self.locate(points)
        labels = np.array([d.label for d in self.discs] + [UNLABELED])
        return labels[idx]

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Uniform over the union (discs chosen in proportion to area)."""
        areas = np.array([d.radius**2 for d in self.discs])
        which = rng.choice(len(self.discs), size=n, p=areas / areas.sum())
        out = np.empty((n, 2))
        for i, d in enumerate(self.discs):
            mask = which == i
            out[mask] = sample_disc_uniform(rng, d.center, d.radius, int(mask.sum()))
        return out

    def bounding_box(self, margin: float = 0.0):
        lo = np.min([np.asarray(d.center) - d.radius for d in self.discs], axis=0) - margin
        hi = np.max([np.asarray(d.center) + d.radius for d in self.discs], axis=0) + margin
        return lo, hi


def default_manifold() -> ManifoldSpec:
    """Two class-1 discs and one class-2 disc on an equilateral triangle of side 4.

    Disc 12 is equally far from disc 11 and disc 21, so without labels in it
    nothing about the layout favours either class.
    """
    h = 2.0 * math.sqrt(3.0)
    return ManifoldSpec(
        (
            Disc((-2.0, 0.0), 0.5, 1, 1),
            Disc((0.0, h), 0.5, 1, 2),
            Disc((2.0, 0.0), 0.5, 2, 1),
        ),
        n_classes=2,
    )


@dataclass
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        self.points = pts.reshape(len(pts), -1) if pts.size else pts.reshape(len(pts), pts.shape[-1] if pts.ndim > 1 else 2)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.origin = np.asarray(self.origin, dtype=object)
        if not (len(self.points) == len(self.labels) == len(self.origin)):
            raise ShapeError("points, labels and origin must have equal length")
        labeled = self.origin == "labeled"
        if np.any(self.labels[labeled] < 1):
            raise ContractError("labeled points need a class index >= 1")
        if np.any(self.labels[~labeled] != UNLABELED):
            raise ContractError("unlabeled and generated points must carry the UNLABELED marker")

    def __len__(self):
        return len(self.points)

    def subset(self, origin: str) -> "LabeledDataset":
        mask = self.origin == origin
        return LabeledDataset(self.points[mask], self.labels[mask], self.origin[mask])

    @classmethod
    def build(cls, labeled_points=(), labels=(), unlabeled_points=(), generated_points=()):
        parts = [
            (np.asarray(labeled_points, dtype=np.float64).reshape(-1, 2), np.asarray(labels, dtype=np.int64), "labeled"),
            (np.asarray(unlabeled_points, dtype=np.float64).reshape(-1, 2), None, "unlabeled"),
            (np.asarray(generated_points, dtype=np.float64).reshape(-1, 2), None, "generated"),
        ]
        pts, labs, orig = [], [], []
        for p, lab, tag in parts:
            pts.append(p)
            labs.append(lab if lab is not None else np.full(len(p), UNLABELED))
            orig.append(np.full(len(p), tag, dtype=object))
        return cls(np.concatenate(pts), np.concatenate(labs), np.concatenate(orig))


def sample_labeled(
    rng: np.random.Generator, manifold: ManifoldSpec, per_subdomain: int, covered: Sequence[str] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """``per_subdomain`` labeled points in each covered disc (all discs by default)."""
    pts, labels = [], []
    for d in manifold.discs:
        if covered is not None and d.name not in covered:
            continue
        pts.append(sample_disc_uniform(rng, d.center, d.radius, per_subdomain))
        labels.append(np.full(per_subdomain, d.label))
    if not pts:
        return np.empty((0, 2)), np.empty(0, dtype=np.int64)
    return np.concatenate(pts), np.concatenate(labels)
