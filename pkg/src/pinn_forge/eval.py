"""Error metrics on evaluation grids, assimilation quality metrics, and
multi-trial summaries."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .autodiff import value_of
from .cases.common import FieldGrid, PRESSURE_CHANNELS
from .errors import ContractError
from .loss import PdeTerm
from .physics import boussinesq_correlation
from .sampling import SamplingSet, boundary_sample, grid_points, latin_hypercube_masked

FIELD_LABELS = {"T": "Temperature", "u": "Velocity (u)", "v": "Velocity (v)", "p": "Pressure",
                "U": "Velocity (U)", "V": "Velocity (V)", "P": "Pressure", "nu": "Eddy viscosity root"}


@dataclass
class MetricsReport:
    """Per-network MSE rows in three groups: fields against a reference,
    boundary conditions on dense boundary samples, and PDE residual
    components on the grid.  A field value of None means no reference."""

    grid: tuple
    provenance: str
    sections: dict = field(default_factory=dict)

    def rows(self, network: str) -> list:
        sec = self.sections[network]
        return [(g, label, v) for g in ("field", "bc", "residual") for label, v in sec[g].items()]

    def value(self, network: str, group: str, label: str):
        return self.sections[network][group][label]

    def as_dict(self) -> dict:
        out = {"grid": f"{self.grid[0]}x{self.grid[1]}", "provenance": self.provenance}
        for net, sec in self.sections.items():
            for group in ("field", "bc", "residual"):
                for label, v in sec[group].items():
                    out[f"{net}.{group}.{label}"] = v
        return out

    def write(self, path) -> None:
        write_metrics(path, self.as_dict())


def _fmt(v) -> str:
    if v is None:
        return "absent"
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def write_metrics(path, metrics: Mapping) -> None:
    """``key = value`` lines; keys may not contain '='."""
    lines = []
    for k, v in metrics.items():
        if "=" in k or "\n" in k:
            raise ContractError(f"bad metric key {k!r}")
        lines.append(f"{k} = {_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics(path) -> dict:
    out = {}
    for ln in Path(path).read_text().splitlines():
        if not ln.strip() or ln.lstrip().startswith("#"):
            continue
        k, sep, v = ln.partition(" = ")
        if not sep:
            raise ContractError(f"{path}: malformed metrics line {ln!r}")
        v = v.strip()
        if v == "absent":
            out[k] = None
            continue
        try:
            out[k] = float(v)
        except ValueError:
            out[k] = v
    return out


# ------------------------------------------------------------ grid metrics

def _pooled(values_counts):
    total = sum(n for _, n in values_counts)
    return sum(v * n for v, n in values_counts) / total


def _append_fixed(pts, fixed):
    if not fixed:
        return pts
    return np.concatenate([pts, np.tile(np.asarray(fixed, dtype=np.float64), (pts.shape[0], 1))], axis=1)


def _reference_values(reference, pts, channels):
    if reference is None:
        return None
    if isinstance(reference, FieldGrid):
        if reference.points.shape != pts.shape or not np.allclose(reference.points, pts, atol=1e-9):
            raise ContractError("reference grid does not match the evaluation grid")
        vals = reference.channels
    else:
        vals = reference.values(pts)
    out = {}
    for c in channels:
        if c in vals:
            v = np.asarray(vals[c], dtype=np.float64)
            out[c] = v - v.mean() if c in PRESSURE_CHANNELS else v
    return out


def grid_metrics(problem, theta, reference=None, nx: int = 100, ny: int = 100, n_boundary: int = 200,
                 fixed=None, provenance: str | None = None, fields: Mapping | None = None) -> MetricsReport:
    """Fine-grid report for every network of ``problem``.

    ``reference`` maps network name to a FieldGrid (on the same grid) or
    an analytic field; a bare object applies to the first network.
    ``fixed`` are parametric input values appended to grid and boundary
    points (parametric networks only).  ``fields`` replaces the trained
    networks by any objects with ``jets``/``values`` (e.g. analytic fields).
    """
    meta = problem.meta
    domains = meta.get("domains") or {problem.networks[0].name: meta["domain"]}
    layout = meta.get("report_rows", {})
    boundaries = meta.get("boundary_pieces", {})
    in_domain = meta.get("in_domain")
    if reference is not None and not isinstance(reference, dict):
        reference = {problem.networks[0].name: reference}
    fields = {**problem.fields(theta), **(fields or {})}
    extras = problem.split(theta)[1]
    fixed = tuple(fixed or ())
    report = MetricsReport((nx, ny), provenance or (
        "reference: " + (meta.get("reference_provenance", "user supplied") if reference else "none")))

    for slot in problem.networks:
        name = slot.name
        net = fields[name]
        pts = grid_points(domains[name], nx, ny)
        if in_domain is not None:
            pts = pts[in_domain(pts)]
        rows = layout.get(name, {})
        # fields
        channels = rows.get("fields", [c for c in slot.channels if c not in PRESSURE_CHANNELS])
        pred = net.values(_append_fixed(pts, fixed))
        ref = _reference_values((reference or {}).get(name), pts, channels)
        fsec = {}
        for c in channels:
            label = FIELD_LABELS.get(c, c)
            if ref is None or c not in ref:
                fsec[label] = None
                continue
            p = np.asarray(pred[c])
            p = p - p.mean() if c in PRESSURE_CHANNELS else p
            fsec[label] = float(np.mean((p - ref[c]) ** 2))
        # boundary conditions
        bsec = {}
        own = [t for t in problem.terms if t.networks and t.networks[0] == name and not isinstance(t, PdeTerm)
               and t.kind not in ("data",)]
        groups = rows.get("bc") or [(t.name, [t.name]) for t in own]
        for label, term_names in groups:
            acc = []
            for tn in term_names:
                term = next((t for t in problem.terms if t.name == tn), None)
                if term is None:
                    continue
                pieces = boundaries.get(tn)
                if pieces:
                    parts = [boundary_sample(seg, n_boundary, endpoints=False) for seg in pieces]
                    dense = [SamplingSet(_append_fixed(p.points, fixed), p.tag, p.bounds, normal=p.normal)
                             for p in parts]
                else:
                    dense = [term.sampling]
                for s in dense:
                    v = float(value_of(term.with_sampling(s).evaluate(fields, extras)))
                    acc.append((v, len(s)))
            bsec[label] = _pooled(acc) if acc else None
        # residuals
        rsec = {}
        interior = SamplingSet(_append_fixed(pts, fixed), "interior", np.zeros((pts.shape[1], 2)))
        pde_terms = [t for t in problem.terms if isinstance(t, PdeTerm) and t.network == name]
        comp_rows = rows.get("residual")
        comps = {t.name: t.with_sampling(interior).component_mse(fields, extras) for t in pde_terms}
        if comp_rows:
            for label, tn, comp in comp_rows:
                rsec[label] = comps[tn][comp]
        else:
            for tn, d in comps.items():
                for comp, v in d.items():
                    rsec[f"{tn}.{comp}"] = v
        report.sections[name] = {"field": fsec, "bc": bsec, "residual": rsec}
    return report


# ------------------------------------------------------- assimilation

def section_points(x: float, y_range: tuple, n: int = 50) -> np.ndarray:
    lo, hi = y_range
    ys = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    return np.stack([np.full(n, float(x)), ys], axis=1)


def correlation_rmse(network, reference, sections: Sequence[float], y_range, n: int = 50) -> float:
    """RMSE of the Boussinesq correlation -nu_t (U_y + V_x) on vertical
    sections.  ``reference`` is a field with (U, V, nu) channels or an
    array of values in section order."""
    pts = np.concatenate([section_points(x, y_range(x), n) for x in sections])
    pred = value_of(boussinesq_correlation(network.jets(pts, order=1), pts))
    if hasattr(reference, "jets"):
        ref = value_of(boussinesq_correlation(reference.jets(pts, order=1), pts))
    else:
        ref = np.asarray(reference, dtype=np.float64)
    return float(np.sqrt(np.mean((np.asarray(pred) - ref) ** 2)))


def profile_rmse(network, truth, sections, y_range, channel="U", n: int = 50) -> float:
    pts = np.concatenate([section_points(x, y_range(x), n) for x in sections])
    return float(np.sqrt(np.mean((network.values(pts)[channel] - truth.values(pts)[channel]) ** 2)))


def assimilation_metrics(problem, theta, n_eval: int = 4000, eval_seed: int = 104729,
                         held_out=(9.0, 18.0), x_range=(0.0, 22.0)) -> dict:
    """Scores of a backward-facing-step run with a known truth.

    * ``residual_rmse``: RMSE of the residual on fresh interior points
    * ``data_rmse``: RMSE of the fit to the training observations
    * ``correlation_rmse``: Boussinesq correlation on held-out sections
    * ``nut_rel_l2``: relative L2 error of nu_t = nu_tilde^2 on a grid over
      the data-covered part of the channel (``x_range``)
    * ``profile_rmse``: U on the held-out sections
    """
    cfg = problem.meta["config"]
    truth = problem.meta.get("truth")
    net = problem.fields(theta)["net"]
    extras = problem.split(theta)[1]
    pde = next(t for t in problem.terms if isinstance(t, PdeTerm))
    fresh = latin_hypercube_masked(n_eval, cfg.bounds, eval_seed,
                                   lambda p: ~((p[:, 0] < cfg.step_x) & (p[:, 1] < cfg.step_h)))
    res = pde.with_sampling(fresh).residuals({"net": net}, extras)
    out = {"residual_rmse": float(np.sqrt(np.mean(sum(np.square(value_of(r)) for r in res))))}
    data = next(t for t in problem.terms if t.kind == "data")
    out["data_rmse"] = float(np.sqrt(value_of(data.evaluate({"net": net}, extras))))
    if truth is not None:
        out["correlation_rmse"] = correlation_rmse(net, truth, held_out, cfg.flow_interval)
        out["profile_rmse"] = profile_rmse(net, truth, held_out, cfg.flow_interval)
        g = grid_points([list(x_range), [0.0, cfg.height]], 111, 31)
        g = g[cfg.in_flow(g)]
        nut_p = np.square(net.values(g)["nu"])
        nut_t = np.square(truth.values(g)["nu"])
        out["nut_rel_l2"] = float(np.linalg.norm(nut_p - nut_t) / np.linalg.norm(nut_t))
    return out


# ------------------------------------------------------ trial statistics

SUMMARY_KEYS = ("min", "q1", "median", "q3", "max")


@dataclass
class TrialStatistics:
    """Five-number summaries per configuration and metric, kept next to
    the raw per-trial values they were computed from."""

    raw: dict
    summary: dict

    def write_csv(self, path) -> None:
        lines = ["config,metric,min,q1,median,q3,max"]
        for cfg, metrics in self.summary.items():
            for m, s in metrics.items():
                lines.append(",".join([cfg, m] + [f"{s[k]:.17g}" for k in SUMMARY_KEYS]))
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def read_csv(path) -> dict:
        out = {}
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        for ln in lines[1:]:
            cfg, m, *vals = ln.split(",")
            out.setdefault(cfg, {})[m] = dict(zip(SUMMARY_KEYS, map(float, vals)))
        return out


def five_numbers(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ContractError("no values to summarise")
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return dict(zip(SUMMARY_KEYS, (float(x) for x in q)))


def trial_statistics(grouped: Mapping[str, Sequence[Mapping[str, float]]]) -> TrialStatistics:
    """``grouped`` maps a configuration name to one metrics dict per trial
    (e.g. RunRecord.metrics).  Metrics missing from some trials are
    summarised over the trials that have them."""
    raw, summary = {}, {}
    for cfg, trials in grouped.items():
        keys = []
        for t in trials:
            keys.extend(k for k in t if k not in keys)
        raw[cfg] = {k: [float(t[k]) for t in trials if t.get(k) is not None] for k in keys}
        summary[cfg] = {k: five_numbers(v) for k, v in raw[cfg].items() if v}
    return TrialStatistics(raw, summary)
