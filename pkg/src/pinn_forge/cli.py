"""Command line: ``pinn-forge {train,evaluate,sweep,sample}``.

Run configurations are INI-style text.  Top-level keys come first, then
optional ``[case]`` and ``[network]`` sections::

    case = conjugate_heat
    seed = 3
    schedule = adam:5000:lr=1e-3,bfgs:500

    [case]
    mu = 0.01

    [network]
    fluid_hidden = 50,50,50

Unknown keys are rejected.  Tuple values take ``,`` or ``/`` separators
(sweep axes need ``/`` since ``,`` separates axis values).
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cases import (BfsConfig, CavityConfig, ConjugateConfig, ManufacturedNsConfig, PoissonGammaConfig,
                    RansTwinConfig, SlabConfig, build_bfs_assimilation, build_conduction_slabs,
                    build_conjugate_heat, build_manufactured_ns, build_parametric_cavity, build_poisson_gamma,
                    build_rans_twin)
from .cases.common import FieldGrid, format_schedule, parse_schedule, predict_grid, read_observations
from .cases.conjugate import slab_solution
from .errors import ContractError, NumericError, PhaseAborted
from .eval import assimilation_metrics, grid_metrics, trial_statistics, write_metrics
from .network import load_checkpoint, save_checkpoint
from .optim import HistoryEntry, Phase, RunRecord, run_schedule
from .sampling import write_csv as write_sampling_csv

log = logging.getLogger("pinn_forge")

EXIT_OK, EXIT_CONFIG, EXIT_OBSERVATIONS, EXIT_ABORTED = 0, 2, 3, 4
TOP_KEYS = ("case", "seed", "schedule", "observations")
NETWORK_KEYS = ("hidden", "fluid_hidden", "solid_hidden", "activation")

CASES = {
    "parametric_cavity": CavityConfig,
    "conjugate_heat": ConjugateConfig,
    "bfs_assimilation": BfsConfig,
    "manufactured:ns_thermal": ManufacturedNsConfig,
    "manufactured:rans_twin": RansTwinConfig,
    "manufactured:poisson_gamma": PoissonGammaConfig,
    "manufactured:conduction_slabs": SlabConfig,
}

OPTIMIZERS = {
    "adam": None,
    "bfgs_armijo": ("bfgs", "armijo"),
    "bfgs_wolfe": ("bfgs", "wolfe"),
    "lbfgs_wolfe": ("lbfgs", "wolfe"),
    "lbfgs_armijo": ("lbfgs", "armijo"),
}


class ConfigError(Exception):
    def __init__(self, key, message):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


class MissingObservations(Exception):
    pass


# ------------------------------------------------------------------ config

def _case_fields(case: str) -> dict:
    """Settable field name -> default value, flattening the twin's nested
    step configuration."""
    cls = CASES[case]
    out = {f.name: f.default for f in dataclasses.fields(cls)}
    if cls is RansTwinConfig:
        bfs = out.pop("bfs")
        for f in dataclasses.fields(BfsConfig):
            out.setdefault(f.name, getattr(bfs, f.name))
    return out


def _coerce(key: str, raw: str, default):
    text = raw.strip()
    try:
        if key == "schedule":
            return parse_schedule(text)
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError("expected a boolean")
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [s for s in text.replace("/", ",").split(",") if s.strip()]
            as_int = bool(default) and all(isinstance(v, int) and not isinstance(v, bool) for v in default)
            return tuple(int(s) if as_int else float(s) for s in items)
        return text
    except (ValueError, ContractError) as exc:
        raise ConfigError(key, f"cannot use {raw!r}: {exc}") from exc


@dataclass
class RunConfig:
    case: str
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    observations: Path | None = None
    source: Path | None = None

    def settings(self) -> dict:
        """Every case field with overrides applied and coerced."""
        defaults = _case_fields(self.case)
        out = dict(defaults)
        for k, raw in self.overrides.items():
            if k not in defaults:
                raise ConfigError(k, f"not a setting of case {self.case!r}")
            out[k] = _coerce(k, raw, defaults[k])
        return out

    def case_config(self):
        s = self.settings()
        cls = CASES[self.case]
        try:
            if cls is RansTwinConfig:
                bfs_names = {f.name for f in dataclasses.fields(BfsConfig)}
                twin = {k: v for k, v in s.items() if k not in bfs_names or k in ("sections", "n_per_section")}
                bfs = BfsConfig(**{k: v for k, v in s.items() if k in bfs_names})
                return RansTwinConfig(bfs=bfs, **twin)
            return cls(**s)
        except ContractError as exc:
            raise ConfigError(_first_key(str(exc), s), str(exc)) from exc

    def schedule(self) -> tuple:
        return tuple(self.settings()["schedule"])

    def canonical(self) -> dict:
        def norm(k, v):
            if k == "schedule":
                return format_schedule(v)
            if isinstance(v, tuple):
                return [norm(k, x) for x in v]
            return v
        out = {"case": self.case, "seed": self.seed,
               "settings": {k: norm(k, v) for k, v in self.settings().items()}}
        if self.observations is not None and self.observations.exists():
            out["observations_sha256"] = hashlib.sha256(self.observations.read_bytes()).hexdigest()
        return out

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, **kv) -> "RunConfig":
        return dataclasses.replace(self, overrides={**self.overrides, **kv})


def _first_key(message: str, settings: dict) -> str:
    for k in settings:
        if k in message:
            return k
    return "case"


def parse_config(text: str, source: Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError("syntax", str(exc).replace("\n", " ")) from exc
    unknown_sections = set(cp.sections()) - {"run", "case", "network"}
    if unknown_sections:
        raise ConfigError(sorted(unknown_sections)[0], "unknown section")
    top = dict(cp["run"])
    for k in top:
        if k not in TOP_KEYS:
            raise ConfigError(k, "unknown top-level key")
    case = top.get("case")
    if case is None:
        raise ConfigError("case", "missing")
    if case not in CASES:
        raise ConfigError("case", f"unknown case {case!r}; choose from {sorted(CASES)}")
    try:
        seed = int(top.get("seed", "0"))
    except ValueError as exc:
        raise ConfigError("seed", f"not an integer: {top['seed']!r}") from exc
    overrides = {}
    if "schedule" in top:
        overrides["schedule"] = top["schedule"]
    if cp.has_section("network"):
        for k, v in cp["network"].items():
            if k not in NETWORK_KEYS:
                raise ConfigError(f"network.{k}", "unknown network key")
            overrides[k] = v
    if cp.has_section("case"):
        for k, v in cp["case"].items():
            overrides[k] = v
    obs = top.get("observations")
    obs_path = None
    if obs is not None:
        if case != "bfs_assimilation":
            raise ConfigError("observations", f"case {case!r} takes no observation file")
        obs_path = Path(obs)
        if source is not None and not obs_path.is_absolute():
            obs_path = source.parent / obs_path
    rc = RunConfig(case, seed, overrides, obs_path, source)
    # surface bad values now rather than mid-run
    rc.case_config()
    return rc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("path", f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, path)


# ---------------------------------------------------------------- building

def build_problem(rc: RunConfig):
    cfg = rc.case_config()
    seed = rc.seed
    if rc.case == "bfs_assimilation":
        if rc.observations is None:
            raise MissingObservations("bfs_assimilation needs an 'observations' file")
        if not rc.observations.exists():
            raise MissingObservations(f"observation file {rc.observations} not found")
        try:
            obs = read_observations(rc.observations)
        except ContractError as exc:
            raise ConfigError("observations", str(exc)) from exc
        return build_bfs_assimilation(cfg, obs, seed)
    builders = {
        "parametric_cavity": build_parametric_cavity,
        "conjugate_heat": build_conjugate_heat,
        "manufactured:ns_thermal": build_manufactured_ns,
        "manufactured:rans_twin": build_rans_twin,
        "manufactured:poisson_gamma": build_poisson_gamma,
        "manufactured:conduction_slabs": build_conduction_slabs,
    }
    return builders[rc.case](cfg, seed)


def case_metrics(rc: RunConfig, problem, theta) -> dict:
    """Scores recorded with every run (beyond the loss terms)."""
    out = {}
    if rc.case in ("bfs_assimilation", "manufactured:rans_twin"):
        out.update(assimilation_metrics(problem, theta))
    elif rc.case == "manufactured:ns_thermal":
        rep = grid_metrics(problem, theta, problem.meta["truth"], nx=50, ny=50)
        out.update({k: v for k, v in rep.as_dict().items() if k not in ("grid", "provenance")})
    elif rc.case == "manufactured:conduction_slabs":
        fluid, solid = slab_solution(problem.meta["config"])
        rep = grid_metrics(problem, theta, {"fluid": fluid, "solid": solid}, nx=50, ny=50)
        out.update({k: v for k, v in rep.as_dict().items() if k not in ("grid", "provenance")})
    elif rc.case == "manufactured:poisson_gamma":
        cfg = problem.meta["config"]
        gamma = problem.extra_values(theta)["gamma"]
        out["gamma"] = gamma
        out["gamma_rel_error"] = abs(gamma - cfg.gamma_true) / cfg.gamma_true
    return out


# ------------------------------------------------------------- persistence

def write_history(path, record: RunRecord, term_names) -> None:
    lines = [",".join(["iter", "phase", "alpha", "L_total"] + list(term_names))]
    entries = ([record.initial] if record.initial else []) + list(record.history)
    for e in entries:
        alpha = "" if e.alpha is None else f"{float(e.alpha):.17g}"
        row = [str(e.iter), e.phase, alpha, f"{e.total:.17g}"] + [f"{e.terms[t]:.17g}" for t in term_names]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_history(path) -> list:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[:4] != ["iter", "phase", "alpha", "L_total"]:
        raise ContractError(f"{path}: not a history file")
    terms = header[4:]
    out = []
    for ln in lines[1:]:
        cells = ln.split(",")
        out.append(HistoryEntry(int(cells[0]), cells[1], float(cells[2]) if cells[2] else None,
                                float(cells[3]), dict(zip(terms, map(float, cells[4:])))))
    return out


def checkpoint_path(out: Path, role: str) -> Path:
    return Path(out) / f"checkpoint_{role}.txt"


def write_run(out: Path, rc: RunConfig, problem, record: RunRecord) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    params, _ = problem.split(record.theta)
    for slot in problem.networks:
        p = checkpoint_path(out, slot.name)
        save_checkpoint(p, slot.spec, params[slot.name])
        files[f"checkpoint.{slot.name}"] = p.name
    write_history(out / "history.csv", record, problem.term_names)
    files["history"] = "history.csv"
    write_metrics(out / "metrics.txt", record.metrics)
    files["metrics"] = "metrics.txt"
    manifest = {
        "version": __version__,
        "case": rc.case,
        "seed": record.seed,
        "config_digest": record.config_digest,
        "config": rc.canonical(),
        "status": record.status,
        "message": record.message,
        "wall_clock": record.wall_clock,
        "initial_loss": record.initial.total if record.initial else None,
        "final_loss": record.final_loss,
        "iterations": len(record.history),
        "extras": problem.extra_values(record.theta),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_theta(problem, checkpoint) -> np.ndarray:
    """Parameter vector from a run directory or, for single-network
    problems, a single checkpoint file."""
    checkpoint = Path(checkpoint)
    extras = dict(problem.extras)
    parts = []
    for slot in problem.networks:
        if checkpoint.is_dir():
            path = checkpoint_path(checkpoint, slot.name)
        elif len(problem.networks) == 1:
            path = checkpoint
        else:
            raise ContractError("a coupled problem needs a run directory holding one checkpoint per network")
        spec, params = load_checkpoint(path)
        if spec != slot.spec:
            raise ContractError(f"{path}: network {spec} does not match the configured {slot.spec}")
        parts.append(params)
    manifest = checkpoint / "manifest.json" if checkpoint.is_dir() else checkpoint.parent / "manifest.json"
    if manifest.exists():
        extras.update(json.loads(manifest.read_text()).get("extras", {}))
    parts.append(np.array([float(extras[k]) for k in problem.extras], dtype=np.float64))
    return np.concatenate(parts)


# ---------------------------------------------------------------- commands

def train_run(rc: RunConfig, out, log_every: int = 0) -> tuple[int, RunRecord]:
    problem = build_problem(rc)
    digest = rc.digest()
    callbacks = []
    if log_every > 0:
        def progress(entry, theta):
            if entry.iter % log_every == 0:
                log.info("%s iter %d loss %.6e", entry.phase, entry.iter, entry.total)
        callbacks.append(progress)
    status = EXIT_OK
    try:
        record = run_schedule(problem, rc.schedule(), rc.seed, callbacks=callbacks, config_digest=digest)
    except PhaseAborted as exc:
        record = exc.record
        status = EXIT_ABORTED
        log.error("run aborted: %s", exc)
    record.metrics = {f"loss.{k}": v for k, v in
                      (record.history[-1].terms if record.history else record.initial.terms).items()}
    record.metrics["loss.total"] = record.final_loss
    try:
        record.metrics.update(case_metrics(rc, problem, record.theta))
    except NumericError as exc:
        log.warning("case metrics skipped: %s", exc)
    write_run(out, rc, problem, record)
    return status, record


def cmd_train(args) -> int:
    rc = load_config(args.config)
    if args.seed is not None:
        rc = dataclasses.replace(rc, seed=args.seed)
    status, record = train_run(rc, args.out, args.log_every)
    print(f"{record.status}: final loss {record.final_loss:.6e} after {len(record.history)} iterations "
          f"-> {args.out}")
    return status


def parse_grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(s) for s in text.lower().split("x"))
    except ValueError as exc:
        raise ConfigError("grid", f"expected NxM, got {text!r}") from exc
    if nx < 1 or ny < 1:
        raise ConfigError("grid", "sizes must be >= 1")
    return nx, ny


def _references(problem, items):
    if not items:
        return None
    names = [n.name for n in problem.networks]
    out = {}
    for item in items:
        role, sep, path = item.partition("=")
        if not sep:
            role, path = names[0], item
        if role not in names:
            raise ConfigError("reference", f"unknown network {role!r}")
        if not Path(path).exists():
            raise ConfigError("reference", f"file {path} not found")
        out[role] = FieldGrid.read_csv(path)
    return out


def cmd_evaluate(args) -> int:
    rc = load_config(args.config)
    problem = build_problem(rc)
    theta = load_theta(problem, args.checkpoint)
    nx, ny = parse_grid(args.grid)
    fixed = None
    if rc.case == "parametric_cavity":
        cfg = problem.meta["config"]
        fixed = (tuple(float(s) for s in args.at.split(",")) if args.at
                 else (cfg.mu_values[0], cfg.kf_values[0]))
    reference = _references(problem, args.reference)
    report = grid_metrics(problem, theta, reference, nx=nx, ny=ny, fixed=fixed)
    out = Path(args.out or (args.checkpoint if Path(args.checkpoint).is_dir() else Path(args.checkpoint).parent))
    out.mkdir(parents=True, exist_ok=True)
    report.write(out / f"report_{nx}x{ny}.txt")
    fields = problem.fields(theta)
    domains = problem.meta["domains"]
    for slot in problem.networks:
        grid = predict_grid(fields[slot.name], domains[slot.name], nx, ny, fixed=fixed or (),
                            center_pressure=False)
        grid.write_csv(out / f"field_{slot.name}_{nx}x{ny}.csv")
    for net in report.sections:
        for group, label, v in report.rows(net):
            print(f"{net:6s} {group:8s} {label:16s} {'absent' if v is None else f'{v:.3e}'}")
    return EXIT_OK


def _apply_axis(rc: RunConfig, name: str, value: str) -> RunConfig:
    if name == "optimizer":
        if value not in OPTIMIZERS:
            raise ConfigError("optimizer", f"unknown optimizer {value!r}; choose from {sorted(OPTIMIZERS)}")
        phases = rc.schedule()
        adam = [p for p in phases if p.kind == "adam"]
        rest = [p for p in phases if p.kind != "adam"]
        n_adam, n_rest = sum(p.epochs for p in adam), sum(p.epochs for p in rest)
        lr = adam[0].lr if adam else 1e-3
        on_stall = rest[-1].on_stall if rest else "abort"
        kind = OPTIMIZERS[value]
        if kind is None:
            new = (Phase("adam", n_adam + n_rest, lr=lr),)
        else:
            new = (Phase("adam", n_adam, lr=lr),) if n_adam else ()
            new += (Phase(kind[0], n_rest, line_search=kind[1], on_stall=on_stall),)
        return rc.with_overrides(schedule=format_schedule(new))
    if name == "seed":
        raise ConfigError("seed", "use --trials to vary seeds")
    if name in ("hidden", "fluid_hidden", "solid_hidden"):
        value = value.replace("/", ",")
    rc = rc.with_overrides(**{name: value})
    rc.case_config()
    return rc


def _sweep_job(payload):
    rc, out, label = payload
    try:
        status, record = train_run(rc, out)
    except (ContractError, NumericError) as exc:
        return label, rc.seed, EXIT_ABORTED, {}, str(exc)
    return label, rc.seed, status, record.metrics, record.message


def worker_cap(requested: int) -> int:
    cap = os.environ.get("PINN_FORGE_THREADS")
    n = max(1, requested)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError("PINN_FORGE_THREADS", f"not an integer: {cap!r}")
    return n


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    axes = []
    for spec in args.axis or ():
        name, sep, values = spec.partition("=")
        if not sep or not values:
            raise ConfigError("axis", f"expected name=v1,v2 in {spec!r}")
        axes.append((name.strip(), [v.strip() for v in values.split(",") if v.strip()]))
    out = Path(args.out)
    jobs = []
    combos = list(itertools.product(*[[(n, v) for v in vals] for n, vals in axes])) or [()]
    for combo in combos:
        rc = base
        for n, v in combo:
            rc = _apply_axis(rc, n, v)
        label = "|".join(f"{n}={v}" for n, v in combo) or "base"
        for t in range(args.trials):
            seeded = dataclasses.replace(rc, seed=base.seed + t)
            run_dir = out / label.replace("|", "__").replace("=", "-").replace("/", "_") / f"seed_{seeded.seed}"
            jobs.append((seeded, run_dir, label))
    n_workers = worker_cap(args.jobs)
    if n_workers == 1:
        results = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    grouped = {}
    failures = 0
    for label, seed, status, metrics, message in results:
        grouped.setdefault(label, []).append(metrics)
        if status != EXIT_OK:
            failures += 1
            log.warning("%s seed %d: %s", label, seed, message)
    stats = trial_statistics(grouped)
    out.mkdir(parents=True, exist_ok=True)
    stats.write_csv(out / "summary.csv")
    (out / "raw.json").write_text(json.dumps(stats.raw, indent=1, sort_keys=True) + "\n")
    print(f"{len(results)} runs, {failures} aborted -> {out / 'summary.csv'}")
    return EXIT_OK if failures == 0 else EXIT_ABORTED


def cmd_sample(args) -> int:
    rc = load_config(args.config)
    problem = build_problem(rc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, sset in problem.samplings.items():
        if len(sset) == 0:
            log.warning("sampling %r is empty; no file written", name)
            continue
        write_sampling_csv(out / f"{name}.csv", sset)
        print(f"{name}: {len(sset)} points")
    return EXIT_OK


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pinn-forge", description="Train and evaluate PINN cases.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="grid metrics and field dumps for a trained run")
    p.add_argument("checkpoint", help="run directory (or checkpoint file for single-network cases)")
    p.add_argument("config")
    p.add_argument("--grid", default="100x100")
    p.add_argument("--reference", action="append", help="FieldGrid CSV, optionally role=path")
    p.add_argument("--at", help="parameter values for parametric cases, e.g. 0.04,0.04")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="cross product of axes x trials")
    p.add_argument("config")
    p.add_argument("--axis", action="append", help="name=v1,v2 (tuple values use /)")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sample", help="write every sampling set as CSV")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingObservations as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OBSERVATIONS
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
