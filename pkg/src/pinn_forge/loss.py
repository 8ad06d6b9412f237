"""Loss terms and the training problem that sums them.

A :class:`TrainingProblem` owns one or more networks, optional trainable
scalars (unknown physical coefficients), and a list of loss terms.  Its
flat parameter vector is every network's parameters in declaration order
followed by the trainable scalars.
"""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Var, backward, square, value_of, vmean
from .errors import ContractError, NumericError
from .network import InputMap, Mlp, MlpSpec, init_params
from .physics import components_of
from .sampling import SamplingSet


@dataclass(frozen=True)
class Column:
    """Coefficient taken per point from column ``index`` of the sampling
    (parametric inputs such as viscosity)."""

    index: int


@dataclass(frozen=True)
class Trainable:
    """Coefficient bound to the problem's trainable scalar ``name``."""

    name: str


def resolve_coeffs(coeffs, points, extras):
    if coeffs is None or not dataclasses.is_dataclass(coeffs):
        return coeffs
    changes = {}
    for f in dataclasses.fields(coeffs):
        v = getattr(coeffs, f.name)
        if isinstance(v, Column):
            changes[f.name] = points[:, v.index]
        elif isinstance(v, Trainable):
            changes[f.name] = extras[v.name]
    if not changes:
        return coeffs
    # bypass __post_init__ range checks: trainable values may wander during descent
    out = copy.copy(coeffs)
    for k, v in changes.items():
        object.__setattr__(out, k, v)
    return out


def _target(t, points, n):
    if callable(t):
        t = t(points)
    return np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))


class LossTerm:
    kind = ""
    networks: tuple = ()

    def __init__(self, name: str, sampling: SamplingSet, weight: float = 1.0, label: str | None = None):
        if weight <= 0:
            raise ContractError(f"term {name!r}: weight must be > 0")
        if len(sampling) == 0:
            raise ContractError(f"term {name!r}: empty sampling")
        self.name = name
        self.sampling = sampling
        self.weight = float(weight)
        self.label = label or name

    @property
    def points(self) -> np.ndarray:
        return self.sampling.points

    def evaluate(self, fields, extras=None):
        raise NotImplementedError

    def with_sampling(self, sampling: SamplingSet) -> "LossTerm":
        """Copy of the term evaluated on another point set (for metrics)."""
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.sampling = sampling
        return new

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, n={len(self.sampling)})"


class PdeTerm(LossTerm):
    """Mean over points of the sum of squared residual components."""

    kind = "pde_residual"

    def __init__(self, name, network, sampling, op, coeffs=None, weight=1.0, label=None, dims=(0, 1)):
        super().__init__(name, sampling, weight, label)
        self.network = network
        self.networks = (network,)
        self.op = op
        self.coeffs = coeffs
        self.dims = tuple(dims)

    def residuals(self, fields, extras=None):
        pts = self.points
        jets = fields[self.network].jets(pts, dims=self.dims, order=2)
        return self.op(jets, pts, resolve_coeffs(self.coeffs, pts, extras or {}))

    def evaluate(self, fields, extras=None):
        res = self.residuals(fields, extras)
        acc = square(res[0])
        for r in res[1:]:
            acc = acc + square(r)
        return vmean(acc)

    def component_mse(self, fields, extras=None) -> dict:
        names = components_of(self.op) or tuple(f"r{i}" for i in range(99))
        res = self.residuals(fields, extras)
        return {names[i]: float(np.mean(np.square(value_of(r)))) for i, r in enumerate(res)}


class DirichletTerm(LossTerm):
    """Mean over points of sum over channels of (output - target)^2.

    With several channels and zero targets this is the no-slip form
    u^2 + v^2 per point.
    """

    kind = "dirichlet"

    def __init__(self, name, network, sampling, channels, targets=0.0, weight=1.0, label=None):
        super().__init__(name, sampling, weight, label)
        self.network = network
        self.networks = (network,)
        self.channels = (channels,) if isinstance(channels, str) else tuple(channels)
        if not isinstance(targets, (list, tuple)):
            targets = (targets,) * len(self.channels)
        if len(targets) != len(self.channels):
            raise ContractError(f"term {name!r}: {len(targets)} targets for {len(self.channels)} channels")
        self.targets = tuple(targets)

    def evaluate(self, fields, extras=None):
        pts = self.points
        n = pts.shape[0]
        vals = fields[self.network].jets(pts, order=0)
        acc = None
        for c, t in zip(self.channels, self.targets):
            e = square(vals[c].value - _target(t, pts, n))
            acc = e if acc is None else acc + e
        return vmean(acc)


class DataTerm(DirichletTerm):
    """Observation misfit; identical arithmetic to a Dirichlet term."""

    kind = "data"


class NeumannTerm(LossTerm):
    """Mean of (dF/dn - target)^2 with n the sampling's outward normal."""

    kind = "neumann"

    def __init__(self, name, network, sampling, channel, target=0.0, normal=None, weight=1.0, label=None):
        super().__init__(name, sampling, weight, label)
        self.network = network
        self.networks = (network,)
        self.channel = channel
        self.target = target
        normal = normal if normal is not None else sampling.normal
        if normal is None:
            raise ContractError(f"term {name!r}: Neumann condition needs a normal")
        self.normal = tuple(float(v) for v in normal)

    def evaluate(self, fields, extras=None):
        pts = self.points
        jet = fields[self.network].jets(pts, dims=(0, 1), order=1)[self.channel]
        return vmean(square(jet.dn(self.normal) - _target(self.target, pts, pts.shape[0])))


class InterfaceValueTerm(LossTerm):
    """Mean of (F_a - F_b)^2 on interface points (temperature continuity)."""

    kind = "interface_value"

    def __init__(self, name, net_a, net_b, sampling, channel_a="T", channel_b="T", weight=1.0, label=None):
        super().__init__(name, sampling, weight, label)
        self.net_a, self.net_b = net_a, net_b
        self.networks = (net_a, net_b)
        self.channel_a, self.channel_b = channel_a, channel_b

    def evaluate(self, fields, extras=None):
        pts = self.points
        a = fields[self.net_a].jets(pts, order=0)[self.channel_a].value
        b = fields[self.net_b].jets(pts, order=0)[self.channel_b].value
        return vmean(square(a - b))


class InterfaceFluxTerm(LossTerm):
    """Mean of (k_a dF_a/dn - k_b dF_b/dn)^2 with one shared normal."""

    kind = "interface_flux"

    def __init__(self, name, net_a, net_b, sampling, k_a, k_b, normal=(0.0, -1.0),
                 channel_a="T", channel_b="T", weight=1.0, label=None):
        super().__init__(name, sampling, weight, label)
        self.net_a, self.net_b = net_a, net_b
        self.networks = (net_a, net_b)
        self.k_a, self.k_b = k_a, k_b
        self.normal = tuple(float(v) for v in normal)
        self.channel_a, self.channel_b = channel_a, channel_b

    def evaluate(self, fields, extras=None):
        pts = self.points
        ja = fields[self.net_a].jets(pts, dims=(0, 1), order=1)[self.channel_a]
        jb = fields[self.net_b].jets(pts, dims=(0, 1), order=1)[self.channel_b]
        return vmean(square(self.k_a * ja.dn(self.normal) - self.k_b * jb.dn(self.normal)))


class MeanValueTerm(LossTerm):
    """(mean of channel over the points - target)^2, e.g. an outlet flow rate."""

    kind = "mean_value"

    def __init__(self, name, network, sampling, channel, target, weight=1.0, label=None):
        super().__init__(name, sampling, weight, label)
        self.network = network
        self.networks = (network,)
        self.channel = channel
        self.target = float(target)

    def evaluate(self, fields, extras=None):
        vals = fields[self.network].jets(self.points, order=0)[self.channel].value
        return square(vmean(vals) - self.target)


# ------------------------------------------------------------ named evaluators

def _scalar(term, fields, extras):
    return float(value_of(term.evaluate(fields, extras or {})))


def _expect(term, kinds):
    if term.kind not in kinds:
        raise ContractError(f"term {term.name!r} is {term.kind!r}, expected {kinds}")


def mse_pde(term, networks, extras=None) -> float:
    _expect(term, ("pde_residual",))
    return _scalar(term, networks, extras)


def mse_dirichlet(term, networks, extras=None) -> float:
    _expect(term, ("dirichlet", "data"))
    return _scalar(term, networks, extras)


def mse_neumann(term, networks, extras=None) -> float:
    _expect(term, ("neumann",))
    return _scalar(term, networks, extras)


def mse_data(term, networks, extras=None) -> float:
    _expect(term, ("data", "dirichlet"))
    return _scalar(term, networks, extras)


def mean_value_term(term, networks, extras=None) -> float:
    _expect(term, ("mean_value",))
    return _scalar(term, networks, extras)


def interface_terms(term_pair, fluid_net, solid_net) -> tuple[float, float]:
    """(L_c1, L_c2) for a value/flux term pair sharing one interface sampling.

    ``fluid_net``/``solid_net`` are fields; they are bound to the names the
    terms reference.
    """
    value_term, flux_term = term_pair
    _expect(value_term, ("interface_value",))
    _expect(flux_term, ("interface_flux",))
    if not np.array_equal(value_term.points, flux_term.points):
        raise ContractError("interface value and flux terms use different samplings")
    fields = {value_term.net_a: fluid_net, value_term.net_b: solid_net,
              flux_term.net_a: fluid_net, flux_term.net_b: solid_net}
    return _scalar(value_term, fields, {}), _scalar(flux_term, fields, {})


# ------------------------------------------------------------ problem

@dataclass(frozen=True)
class NetworkSlot:
    name: str
    spec: MlpSpec
    channels: tuple
    input_map: InputMap


class TrainingProblem:
    """Networks + trainable scalars + loss terms; the optimizers' objective."""

    def __init__(self, networks: Sequence[NetworkSlot], terms: Sequence[LossTerm],
                 extras: dict | None = None, samplings: dict | None = None, meta: dict | None = None):
        self.networks = list(networks)
        self.terms = list(terms)
        self.extras = dict(extras or {})
        self.samplings = dict(samplings or {})
        self.meta = dict(meta or {})
        names = [n.name for n in self.networks]
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate network names {names}")
        term_names = [t.name for t in self.terms]
        if len(set(term_names)) != len(term_names):
            raise ContractError(f"duplicate term names {term_names}")
        for t in self.terms:
            for n in t.networks:
                if n not in names:
                    raise ContractError(f"term {t.name!r} references unknown network {n!r}")
        self.slices = {}
        pos = 0
        for n in self.networks:
            self.slices[n.name] = slice(pos, pos + n.spec.n_params)
            pos += n.spec.n_params
        self.extra_index = {}
        for name in self.extras:
            self.extra_index[name] = pos
            pos += 1
        self.n_params = pos

    @property
    def term_names(self) -> list[str]:
        return [t.name for t in self.terms]

    def network(self, name) -> NetworkSlot:
        for n in self.networks:
            if n.name == name:
                return n
        raise KeyError(name)

    def init_theta(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        parts = [init_params(n.spec, rng) for n in self.networks]
        parts.append(np.array([float(v) for v in self.extras.values()], dtype=np.float64))
        return np.concatenate(parts)

    def split(self, theta) -> tuple[dict, dict]:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ContractError(f"theta has shape {theta.shape}, problem needs ({self.n_params},)")
        params = {n.name: theta[self.slices[n.name]] for n in self.networks}
        extras = {k: theta[i] for k, i in self.extra_index.items()}
        return params, extras

    def fields(self, theta) -> dict:
        params, _ = self.split(theta)
        return {n.name: Mlp(n.spec, params[n.name], n.channels, n.input_map) for n in self.networks}

    def extra_values(self, theta) -> dict:
        return {k: float(v) for k, v in self.split(theta)[1].items()}

    def evaluate(self, theta, with_grad: bool = False):
        """(total loss, gradient or None, {term name: value})."""
        params, extras = self.split(theta)
        if with_grad:
            pvars = {k: Var(v) for k, v in params.items()}
            evars = {k: Var(v) for k, v in extras.items()}
        else:
            pvars, evars = params, extras
        fields = {n.name: Mlp(n.spec, pvars[n.name], n.channels, n.input_map) for n in self.networks}
        total = 0.0
        values = {}
        for t in self.terms:
            v = t.evaluate(fields, evars)
            fv = float(value_of(v))
            if not np.isfinite(fv):
                raise NumericError(f"loss term {t.name!r} is not finite ({fv})", where=t.name)
            values[t.name] = fv
            total = total + t.weight * v
        loss = float(value_of(total))
        if not with_grad:
            return loss, None, values
        grad = np.zeros(self.n_params)
        if isinstance(total, Var):
            leaves = list(pvars.values()) + list(evars.values())
            grads = backward(total, leaves)
            for (name, _), g in zip(pvars.items(), grads[:len(pvars)]):
                grad[self.slices[name]] = g
            for (name, _), g in zip(evars.items(), grads[len(pvars):]):
                grad[self.extra_index[name]] = float(g)
        if not np.all(np.isfinite(grad)):
            bad = self._locate_nonfinite(theta)
            raise NumericError(f"non-finite gradient from loss term {bad!r}", where=bad)
        return loss, grad, values

    def _locate_nonfinite(self, theta):
        for t in self.terms:
            sub = TrainingProblem(self.networks, [t], self.extras)
            params, extras = sub.split(theta)
            pv = {k: Var(v) for k, v in params.items()}
            ev = {k: Var(v) for k, v in extras.items()}
            fields = {n.name: Mlp(n.spec, pv[n.name], n.channels, n.input_map) for n in self.networks}
            v = t.evaluate(fields, ev)
            if isinstance(v, Var):
                gs = backward(v, list(pv.values()) + list(ev.values()))
                if not all(np.all(np.isfinite(g)) for g in gs):
                    return t.name
        return None

    def subproblem(self, term_names) -> "TrainingProblem":
        keep = [t for t in self.terms if t.name in set(term_names)]
        return TrainingProblem(self.networks, keep, self.extras, self.samplings, self.meta)


def total_loss(problem: TrainingProblem, theta) -> float:
    return problem.evaluate(theta, with_grad=False)[0]
