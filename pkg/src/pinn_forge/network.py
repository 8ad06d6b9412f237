"""Multilayer perceptrons with jet propagation and a fused reverse sweep.

Parameters live in a flat float64 vector.  Layout: layer by layer, the
weight matrix ``W[i, j]`` (output neuron i, input neuron j) in row-major
order followed by the bias vector of that layer.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Jet, Var, value_of
from .errors import ContractError, NumericError

ACTIVATIONS = ("tanh", "sigmoid", "sine", "softplus")


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    activation: str = "tanh"

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ContractError("an MLP needs input, at least one hidden, and output layer")
        if any(n < 1 for n in sizes):
            raise ContractError(f"layer sizes must be positive: {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum((s[l - 1] + 1) * s[l] for l in range(1, len(s)))


def unflatten(spec: MlpSpec, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``[(W, b), ...]`` into ``theta``; W has shape (n_out, n_in)."""
    theta = np.asarray(theta)
    if theta.shape != (spec.n_params,):
        raise ContractError(f"expected {spec.n_params} parameters, got shape {theta.shape}")
    layers = []
    pos = 0
    s = spec.layer_sizes
    for l in range(1, len(s)):
        n_in, n_out = s[l - 1], s[l]
        W = theta[pos:pos + n_in * n_out].reshape(n_out, n_in)
        pos += n_in * n_out
        b = theta[pos:pos + n_out]
        pos += n_out
        layers.append((W, b))
    return layers


def flatten(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for W, b in layers:
        parts.append(np.asarray(W, dtype=np.float64).reshape(-1))
        parts.append(np.asarray(b, dtype=np.float64).reshape(-1))
    return np.concatenate(parts)


def glorot_bounds(spec: MlpSpec) -> list[float]:
    s = spec.layer_sizes
    return [float(np.sqrt(6.0 / (s[l - 1] + s[l]))) for l in range(1, len(s))]


def init_params(spec: MlpSpec, seed) -> np.ndarray:
    """Glorot-uniform weights, zero biases.

    ``seed`` may be an int or an existing ``np.random.Generator`` (so that
    several networks of one problem draw from a single stream).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    s = spec.layer_sizes
    for l, bound in enumerate(glorot_bounds(spec), start=1):
        W = rng.uniform(-bound, bound, size=(s[l], s[l - 1]))
        layers.append((W, np.zeros(s[l])))
    return flatten(layers)


# ----------------------------------------------------------------- activations

def _activation(name: str, z: np.ndarray, n: int) -> list[np.ndarray]:
    """``[f(z), f'(z), ..., f^(n)(z)]`` for n <= 3."""
    if name == "tanh":
        t = np.tanh(z)
        out = [t]
        if n >= 1:
            d1 = 1.0 - t * t
            out.append(d1)
        if n >= 2:
            d2 = -2.0 * t * d1
            out.append(d2)
        if n >= 3:
            out.append(-2.0 * d1 * d1 - 2.0 * t * d2)
        return out
    if name == "sine":
        s, c = np.sin(z), np.cos(z)
        return [s, c, -s, -c][: n + 1]
    if name == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        out = [s]
    elif name == "softplus":
        out = [np.logaddexp(0.0, z)]
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        if n >= 1:
            out.append(s)
        n -= 1
    else:  # pragma: no cover - guarded by MlpSpec
        raise ContractError(name)
    # logistic derivatives, shifted by one for softplus
    if n >= 1:
        d1 = s * (1.0 - s)
        out.append(d1)
    if n >= 2:
        d2 = d1 * (1.0 - 2.0 * s)
        out.append(d2)
    if n >= 3:
        out.append(d2 * (1.0 - 2.0 * s) - 2.0 * d1 * d1)
    return out


# ------------------------------------------------------------ jet kernel

@dataclass(frozen=True)
class InputMap:
    """Affine map of each input coordinate onto [-1, 1]."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or any(h <= l for l, h in zip(lo, hi)):
            raise ContractError(f"invalid input bounds lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def identity(cls, n: int) -> "InputMap":
        return cls((-1.0,) * n, (1.0,) * n)

    @property
    def scale(self) -> np.ndarray:
        return 2.0 / (np.array(self.hi) - np.array(self.lo))

    def apply(self, x: np.ndarray) -> np.ndarray:
        lo = np.array(self.lo)
        return (x - lo) * self.scale - 1.0


def _jet_forward(spec, theta, xn, scale, dims, order, keep):
    """Propagate (value, tangents, second tangents) through the network.

    Returns the stacked output ``J`` of shape (1 + m*order, N, n_out) with
    J[0] the value, J[1:1+m] the first and J[1+m:] the diagonal second
    derivatives with respect to the inputs listed in ``dims``; plus a cache
    for :func:`_jet_backward` when ``keep`` is set.
    """
    layers = unflatten(spec, theta)
    m = len(dims)
    n_act = order + 1 if keep else order
    cache = []
    a = xn
    ak = akk = None
    n_layers = len(layers)
    for li, (W, b) in enumerate(layers):
        z = a @ W.T + b
        if li == 0:
            # tangents of the (affine) input map: scale_k * e_k
            zk = (scale[list(dims)][:, None] * W.T[list(dims)])[:, None, :] if order >= 1 else None
            zkk = None
        else:
            N = a.shape[0]
            zk = (ak.reshape(m * N, -1) @ W.T).reshape(m, N, -1) if order >= 1 else None
            zkk = (akk.reshape(m * N, -1) @ W.T).reshape(m, N, -1) if order >= 2 else None
        if li == n_layers - 1:
            if keep:
                cache.append((a, ak, akk, None))
            a, ak, akk = z, zk, zkk
            break
        f = _activation(spec.activation, z, n_act)
        h = f[0]
        hk = hkk = None
        if order >= 1:
            hk = f[1] * zk
        if order >= 2:
            hkk = f[2] * (zk * zk)
            if zkk is not None:
                hkk = hkk + f[1] * zkk
        if keep:
            cache.append((a, ak, akk, (f, zk, zkk)))
        a, ak, akk = h, hk, hkk

    N = a.shape[0]
    n_out = a.shape[1]
    parts = [a[None]]
    if order >= 1:
        parts.append(np.broadcast_to(ak, (m, N, n_out)))
    if order >= 2:
        parts.append(akk if akk is not None else np.zeros((m, N, n_out)))
    J = np.concatenate(parts, axis=0) if len(parts) > 1 else a[None]
    return J, cache


def _jet_backward(spec, theta, scale, dims, order, cache, gJ):
    layers = unflatten(spec, theta)
    m = len(dims)
    gtheta = np.zeros_like(theta)
    glayers = unflatten(spec, gtheta)
    gz = gJ[0]
    gzk = gJ[1:1 + m] if order >= 1 else None
    gzkk = gJ[1 + m:1 + 2 * m] if order >= 2 else None
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        gW, gb = glayers[li]
        a, ak, akk, act = cache[li]
        n_out = W.shape[0]
        # linear part: z = a W^T + b, zk = ak W^T, zkk = akk W^T
        gW += gz.T @ a
        gb += gz.sum(axis=0)
        if li == 0:
            if order >= 1:
                # zk[k] = scale_k * W[:, dims_k] (constant over points)
                s = gzk.sum(axis=1)  # (m, n_out)
                for i, d in enumerate(dims):
                    gW[:, d] += scale[d] * s[i]
            break
        N = a.shape[0]
        if order >= 1:
            gW += gzk.reshape(m * N, n_out).T @ ak.reshape(m * N, -1)
        if order >= 2:
            gW += gzkk.reshape(m * N, n_out).T @ akk.reshape(m * N, -1)
        gh = gz @ W
        ghk = (gzk.reshape(m * N, n_out) @ W).reshape(m, N, -1) if order >= 1 else None
        ghkk = (gzkk.reshape(m * N, n_out) @ W).reshape(m, N, -1) if order >= 2 else None
        # activation part of the previous layer: h = f(z), hk = f1 zk, hkk = f2 zk^2 + f1 zkk
        _, _, _, (f, zk, zkk) = cache[li - 1]
        gz = gh * f[1]
        if order >= 1:
            gz = gz + np.sum(ghk * f[2] * zk, axis=0)
            gzk_new = ghk * f[1]
        if order >= 2:
            zk2 = zk * zk
            if zkk is not None:
                gz = gz + np.sum(ghkk * (f[3] * zk2 + f[2] * zkk), axis=0)
            else:
                gz = gz + np.sum(ghkk * (f[3] * zk2), axis=0)
            gzk_new = gzk_new + 2.0 * ghkk * f[2] * zk
            gzkk = ghkk * f[1]
        if order >= 1:
            gzk = gzk_new
    return gtheta


def mlp_jets(spec: MlpSpec, params, points: np.ndarray, input_map: InputMap,
             dims: Sequence[int] = (), order: int = 0):
    """Stacked jets of all outputs at ``points`` (N, n_in).

    ``params`` may be a plain vector or a :class:`Var`; in the latter case the
    result is a Var whose vjp is the fused reverse sweep.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != spec.n_inputs:
        raise ContractError(
            f"points must have shape (N, {spec.n_inputs}), got {points.shape}")
    dims = tuple(int(d) for d in dims)
    if order and not dims:
        raise ContractError("derivative order > 0 requires at least one input dim")
    scale = input_map.scale
    xn = input_map.apply(points)
    theta = value_of(params)
    if not isinstance(params, Var):
        J, _ = _jet_forward(spec, theta, xn, scale, dims, order, keep=False)
        return J
    J, cache = _jet_forward(spec, theta, xn, scale, dims, order, keep=True)

    def vjp(gJ):
        return _jet_backward(spec, theta, scale, dims, order, cache, gJ)

    return Var(J, ((params, vjp),))


class Mlp:
    """An MLP bound to parameters: a differentiable field.

    ``channels`` names the outputs (e.g. ``("u", "v", "T", "p")``).
    """

    def __init__(self, spec: MlpSpec, params, channels=None, input_map: InputMap | None = None):
        self.spec = spec
        self.params = params
        self.channels = tuple(channels) if channels else tuple(f"y{i}" for i in range(spec.n_outputs))
        if len(self.channels) != spec.n_outputs:
            raise ContractError(f"{len(self.channels)} channel names for {spec.n_outputs} outputs")
        self.input_map = input_map or InputMap.identity(spec.n_inputs)

    @property
    def input_dim(self) -> int:
        return self.spec.n_inputs

    def jets(self, points, dims=(0, 1), order=2) -> dict:
        dims = tuple(dims) if order else ()
        J = mlp_jets(self.spec, self.params, points, self.input_map, dims, order)
        m = len(dims)
        out = {}
        for c, name in enumerate(self.channels):
            value = J[0, :, c]
            grad = [J[1 + i, :, c] for i in range(m)] if order >= 1 else []
            diag2 = [J[1 + m + i, :, c] for i in range(m)] if order >= 2 else []
            out[name] = Jet(value, grad, diag2)
        return out

    def values(self, points) -> dict:
        J = mlp_jets(self.spec, self.params, points, self.input_map, (), 0)
        return {name: J[0, :, c] for c, name in enumerate(self.channels)}


def forward(spec: MlpSpec, params, x: Sequence[float], input_map: InputMap | None = None) -> list[float]:
    """Network output at a single input (no output activation)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != spec.n_inputs:
        raise ContractError(f"input has {x.size} entries, network expects {spec.n_inputs}")
    input_map = input_map or InputMap.identity(spec.n_inputs)
    J = mlp_jets(spec, np.asarray(params, dtype=np.float64), x[None], input_map, (), 0)
    out = J[0, 0]
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite network output at {x.tolist()}", where=x.tolist())
    return out.tolist()


# ------------------------------------------------------------ checkpoints

def save_checkpoint(path, spec: MlpSpec, params) -> None:
    params = np.asarray(params, dtype=np.float64)
    lines = [",".join(str(n) for n in spec.layer_sizes), spec.activation]
    lines.extend(f"{float(v):.17g}" for v in params)
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[MlpSpec, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2:
        raise ContractError(f"{path}: truncated checkpoint")
    spec = MlpSpec(tuple(int(s) for s in lines[0].split(",")), lines[1].strip())
    params = np.array([float(s) for s in lines[2:] if s.strip()], dtype=np.float64)
    if params.size != spec.n_params:
        raise ContractError(f"{path}: {params.size} parameters for a network needing {spec.n_params}")
    return spec, params
