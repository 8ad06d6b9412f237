"""Shared pieces of the case builders: grids of predictions, observation
tables, and boundary helpers."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError
from ..network import InputMap
from ..optim import Phase
from ..sampling import SamplingSet, grid_points

PRESSURE_CHANNELS = ("p", "P")


def input_map_for(bounds) -> InputMap:
    b = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    lo, hi = b[:, 0].copy(), b[:, 1].copy()
    # degenerate parameter ranges (single-value grids) map to 0
    flat = hi <= lo
    hi[flat] = lo[flat] + 1.0
    lo[flat] = lo[flat] - 1.0
    return InputMap(tuple(lo), tuple(hi))


def parse_schedule(text: str) -> tuple[Phase, ...]:
    """``"adam:3000:lr=1e-3,lbfgs:7000"`` -> phases.

    Each phase is ``kind:epochs[:key=value...]`` with options separated by
    ``:`` or ``;``; keys are lr,
    line_search, memory, gtol, on_stall.
    """
    phases = []
    for chunk in filter(None, (c.strip() for c in text.split(","))):
        parts = chunk.split(":")
        if len(parts) < 2:
            raise ContractError(f"schedule phase {chunk!r} must look like kind:epochs")
        kind = parts[0].strip().lower()
        try:
            epochs = int(parts[1])
        except ValueError as exc:
            raise ContractError(f"schedule phase {chunk!r}: epochs must be an integer") from exc
        kw = {}
        for opt in (o for part in parts[2:] for o in part.split(";")):
            if not opt:
                continue
            k, _, v = opt.partition("=")
            k = k.strip()
            if k in ("lr", "gtol"):
                kw[k] = float(v)
            elif k == "memory":
                kw[k] = int(v)
            elif k in ("line_search", "on_stall"):
                kw[k] = v.strip()
            else:
                raise ContractError(f"unknown schedule option {k!r} in {chunk!r}")
        phases.append(Phase(kind, epochs, **kw))
    if not phases:
        raise ContractError("schedule needs at least one phase")
    return tuple(phases)


def format_schedule(phases: Sequence[Phase]) -> str:
    out = []
    for p in phases:
        opts = []
        if p.kind == "adam":
            opts.append(f"lr={p.lr!r}")
        elif p.line_search:
            opts.append(f"line_search={p.line_search}")
        if p.kind == "lbfgs" and p.memory != 10:
            opts.append(f"memory={p.memory}")
        if p.gtol:
            opts.append(f"gtol={p.gtol!r}")
        if p.on_stall != "abort":
            opts.append(f"on_stall={p.on_stall}")
        out.append(":".join([p.kind, str(p.epochs)] + ([";".join(opts)] if opts else [])))
    return ",".join(out)


# ----------------------------------------------------------- field grids

@dataclass
class FieldGrid:
    """Channel values on a row-major (y outer) grid of spatial points."""

    points: np.ndarray
    channels: dict
    shape: tuple = ()

    def write_csv(self, path) -> None:
        names = list(self.channels)
        cols = [self.points[:, 0], self.points[:, 1]] + [np.asarray(self.channels[c]) for c in names]
        lines = [",".join(["x", "y"] + names)]
        for row in np.stack(cols, axis=1):
            lines.append(",".join(f"{v:.17g}" for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path) -> "FieldGrid":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
        header = [h.strip() for h in lines[0].split(",")]
        if header[:2] != ["x", "y"]:
            raise ContractError(f"{path}: field grid header must start with x,y")
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(header))
        return cls(data[:, :2].copy(), {h: data[:, k].copy() for k, h in enumerate(header) if k >= 2})


def predict_grid(network, bounds, nx: int, ny: int, fixed=(), points=None,
                 center_pressure: bool = True) -> FieldGrid:
    """Evaluate ``network`` (anything with ``values``) on an nx x ny grid.

    ``fixed`` are parametric input values appended to every spatial point.
    Pressure channels are returned with their mean removed unless
    ``center_pressure`` is off.
    """
    pts = grid_points(bounds, nx, ny) if points is None else np.asarray(points, dtype=np.float64)
    return predict_points(network, pts, fixed, shape=(ny, nx), center_pressure=center_pressure)


def predict_points(network, pts, fixed=(), shape=(), center_pressure: bool = True) -> FieldGrid:
    pts = np.asarray(pts, dtype=np.float64)
    full = pts
    if len(fixed):
        full = np.concatenate([pts, np.tile(np.asarray(fixed, dtype=np.float64), (pts.shape[0], 1))], axis=1)
    vals = network.values(full)
    out = {}
    for k, v in vals.items():
        v = np.asarray(v, dtype=np.float64)
        out[k] = v - v.mean() if center_pressure and k in PRESSURE_CHANNELS else v
    return FieldGrid(pts, out, shape)


# ---------------------------------------------------------- observations

@dataclass
class Observations:
    """Observed values of one channel at points; ``section`` labels the
    x-section each row came from (nan when unknown)."""

    points: np.ndarray
    values: np.ndarray
    channel: str = "U"
    section: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.points.shape[0] != self.values.shape[0]:
            raise ContractError("observation points and values differ in length")
        if self.section is None:
            self.section = np.full(self.values.shape, np.nan)

    def __len__(self):
        return self.values.shape[0]

    def sampling(self) -> SamplingSet:
        if len(self) == 0:
            raise ContractError("no observations")
        b = np.stack([self.points.min(axis=0), self.points.max(axis=0)], axis=1)
        return SamplingSet(self.points, "data", b)


def write_observations(path, obs: Observations) -> None:
    lines = [f"x,y,{obs.channel}"]
    for (x, y), u in zip(obs.points, obs.values):
        lines.append(f"{x:.17g},{y:.17g},{u:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_observations(path) -> Observations:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ContractError(f"{path}: empty observation file")
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) != 3 or header[:2] != ["x", "y"]:
        raise ContractError(f"{path}: observation header must be x,y,<channel>, got {lines[0]!r}")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 3:
            raise ContractError(f"{path}: row {i} has {len(parts)} fields")
        rows.append([float(p) for p in parts])
    data = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return Observations(data[:, :2], data[:, 2], header[2])


def generate_synthetic_observations(truth, sections: Sequence[float], n_per_section: int,
                                    sigma: float = 0.0, seed: int = 0,
                                    y_range: Callable[[float], tuple] = lambda x: (0.0, 1.0),
                                    channel: str = "U") -> Observations:
    """Sample ``channel`` of ``truth`` on vertical sections.

    On each section the y-locations are the n cell centres of the flow
    interval returned by ``y_range(x)``; Gaussian noise of std ``sigma`` is
    added to the values.
    """
    if n_per_section < 1:
        raise ContractError("need at least one point per section")
    pts, sec = [], []
    for x in sections:
        lo, hi = y_range(float(x))
        ys = lo + (np.arange(n_per_section) + 0.5) * (hi - lo) / n_per_section
        pts.append(np.stack([np.full(n_per_section, float(x)), ys], axis=1))
        sec.append(np.full(n_per_section, float(x)))
    pts = np.concatenate(pts)
    vals = np.asarray(truth.values(pts)[channel], dtype=np.float64).copy()
    if sigma > 0:
        vals += np.random.default_rng(seed).normal(0.0, sigma, size=vals.shape)
    return Observations(pts, vals, channel, np.concatenate(sec))
