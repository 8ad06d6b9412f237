"""Collocation point sets: Latin hypercube interiors, boundary segments,
and tensor products with parameter grids."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError


@dataclass
class SamplingSet:
    """Tagged point collection.

    ``tag`` is ``"interior"``, ``"boundary:<name>"``, ``"interface:<name>"``
    or ``"data"``.  ``normal`` is the outward unit normal for boundary sets.
    """

    points: np.ndarray
    tag: str
    bounds: np.ndarray
    seed: int | None = None
    normal: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2:
            raise ContractError(f"points must be 2-D, got shape {self.points.shape}")
        self.bounds = np.asarray(self.bounds, dtype=np.float64).reshape(-1, 2)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class Segment:
    """A named straight boundary piece with its outward unit normal."""

    name: str
    start: tuple
    end: tuple
    normal: tuple

    @property
    def length(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))


def _check_bounds(bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    if np.any(b[:, 1] <= b[:, 0]):
        raise ContractError(f"degenerate bounds {b.tolist()}")
    return b


def latin_hypercube(n: int, bounds, seed: int) -> SamplingSet:
    """n points, exactly one in each of the n equal strata of every axis."""
    if n < 1:
        raise ContractError("latin_hypercube needs n >= 1")
    b = _check_bounds(bounds)
    rng = np.random.default_rng(seed)
    d = b.shape[0]
    u = np.empty((n, d))
    for k in range(d):
        strata = rng.permutation(n)
        u[:, k] = (strata + rng.uniform(size=n)) / n
    pts = b[:, 0] + u * (b[:, 1] - b[:, 0])
    return SamplingSet(pts, "interior", b, seed)


def latin_hypercube_masked(n: int, bounds, seed: int, keep: Callable[[np.ndarray], np.ndarray]) -> SamplingSet:
    """LHS on the bounding box with points outside ``keep`` rejected.

    Draws are repeated with seed, seed+1, ... until n points survive; the
    first n survivors (in draw order) are returned.
    """
    b = _check_bounds(bounds)
    chunks = []
    total = 0
    s = seed
    while total < n:
        draw = latin_hypercube(n, b, s).points
        draw = draw[keep(draw)]
        chunks.append(draw)
        total += draw.shape[0]
        s += 1
        if s - seed > 1000:
            raise ContractError("rejection sampling kept too few points; check the mask")
    pts = np.concatenate(chunks)[:n]
    return SamplingSet(pts, "interior", b, seed)


def boundary_sample(segment: Segment, n: int, mode: str = "equispaced", seed: int = 0,
                    endpoints: bool = True) -> SamplingSet:
    """Points on a line segment.

    ``equispaced`` includes both endpoints unless ``endpoints`` is False,
    in which case the points are the interior nodes i / (n + 1), i = 1..n
    (used where a corner belongs to the neighbouring segment).
    """
    if segment.length == 0.0:
        raise ContractError(f"segment {segment.name!r} has zero length")
    a = np.asarray(segment.start, dtype=np.float64)
    c = np.asarray(segment.end, dtype=np.float64)
    if mode == "equispaced":
        if endpoints:
            if n < 2:
                raise ContractError("equispaced sampling with endpoints needs n >= 2")
            t = np.linspace(0.0, 1.0, n)
        else:
            if n < 1:
                raise ContractError("need n >= 1")
            t = np.arange(1, n + 1) / (n + 1)
    elif mode == "uniform_random":
        if n < 1:
            raise ContractError("need n >= 1")
        t = np.random.default_rng(seed).uniform(size=n)
    else:
        raise ContractError(f"unknown boundary sampling mode {mode!r}")
    pts = a + t[:, None] * (c - a)
    # exact coordinates on axis-aligned segments
    for k in range(2):
        if a[k] == c[k]:
            pts[:, k] = a[k]
    bounds = np.stack([np.minimum(a, c), np.maximum(a, c)], axis=1)
    return SamplingSet(pts, f"boundary:{segment.name}", bounds, seed, normal=tuple(segment.normal))


def tensor_with_parameters(spatial: SamplingSet, param_grid: Sequence[Sequence[float]]) -> SamplingSet:
    """Every spatial point extended by every parameter combination.

    Ordering is spatial-major: all combinations for point 0, then point 1...
    """
    grids = [np.asarray(g, dtype=np.float64).reshape(-1) for g in param_grid]
    if any(g.size == 0 for g in grids):
        raise ContractError("parameter lists must be non-empty")
    combos = np.array(list(itertools.product(*grids)), dtype=np.float64).reshape(-1, len(grids))
    n_sp, n_c = len(spatial), combos.shape[0]
    pts = np.concatenate([
        np.repeat(spatial.points, n_c, axis=0),
        np.tile(combos, (n_sp, 1)),
    ], axis=1)
    extra = np.array([[g.min(), g.max()] for g in grids]).reshape(-1, 2)
    bounds = np.concatenate([spatial.bounds, extra])
    return SamplingSet(pts, spatial.tag, bounds, spatial.seed, spatial.normal, dict(spatial.meta))


def equidistributed(lo: float, hi: float, n: int) -> list[float]:
    """n values spread evenly over [lo, hi], endpoints included."""
    return np.linspace(lo, hi, n).tolist()


def grid_points(bounds, nx: int, ny: int) -> np.ndarray:
    """Row-major cartesian grid (y outer, x inner), endpoints included."""
    b = _check_bounds(bounds)
    xs = np.linspace(b[0, 0], b[0, 1], nx) if nx > 1 else np.array([0.5 * (b[0, 0] + b[0, 1])])
    ys = np.linspace(b[1, 0], b[1, 1], ny) if ny > 1 else np.array([0.5 * (b[1, 0] + b[1, 1])])
    X, Y = np.meshgrid(xs, ys)
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def write_csv(path, sset: SamplingSet) -> None:
    d = sset.dim
    header = ",".join(f"dim{k}" for k in range(d)) + ",tag"
    lines = [header]
    for p in sset.points:
        lines.append(",".join(f"{v:.17g}" for v in p) + f",{sset.tag}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> SamplingSet:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    header = lines[0].split(",")
    d = len(header) - 1
    pts = np.array([[float(v) for v in ln.split(",")[:d]] for ln in lines[1:]]).reshape(-1, d)
    tags = {ln.rsplit(",", 1)[1] for ln in lines[1:]}
    tag = tags.pop() if len(tags) == 1 else "mixed"
    bounds = np.stack([pts.min(axis=0), pts.max(axis=0)], axis=1) if len(pts) else np.zeros((d, 2))
    return SamplingSet(pts, tag, bounds)
