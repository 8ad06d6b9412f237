"""Full-batch optimizers: ADAM, dense BFGS, L-BFGS, two line searches, and
the multi-phase schedule used to train a problem.

Quasi-Newton "epochs" are outer iterations, not function evaluations.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import blas

from .errors import ContractError, LineSearchError, NumericError, PhaseAborted

MAX_DENSE_BFGS = 20_000


# ------------------------------------------------------------------ ADAM

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n: int, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, lr, **kw)


def adam_step(state: AdamState, theta: np.ndarray, grad: np.ndarray) -> tuple[AdamState, np.ndarray]:
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient passed to ADAM")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_theta = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps), new_theta


# ------------------------------------------------------------ line searches

def _safe(f, x):
    try:
        out = f(x)
    except (NumericError, FloatingPointError, OverflowError):
        return np.inf
    return out


def armijo_goldstein_search(f: Callable, theta, direction, grad, f0=None, *, c1=1e-4,
                            alpha0=1.0, shrink=0.5, max_halvings=50) -> tuple[float, float]:
    """Backtracking until f(theta + a d) <= f(theta) + c1 a g.d.

    Returns ``(alpha, f(theta + alpha d))``; raises LineSearchError when d is
    not a descent direction or every trial step is rejected.
    """
    slope = float(np.dot(grad, direction))
    if not slope < 0.0:
        raise LineSearchError(f"not a descent direction (g.d = {slope:.3e})")
    if f0 is None:
        f0 = f(theta)
    alpha = alpha0
    for _ in range(max_halvings + 1):
        fa = _safe(f, theta + alpha * direction)
        if np.isfinite(fa) and fa <= f0 + c1 * alpha * slope:
            return alpha, float(fa)
        alpha *= shrink
    raise LineSearchError(f"no sufficient decrease after {max_halvings} halvings")


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic interpolating (f, f') at a and b, or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def wolfe_search(fg: Callable, theta, direction, f0=None, g0=None, *, c1=1e-4, c2=0.9,
                 alpha0=1.0, alpha_max=1e6, max_evals=60, f_tol=1e-12):
    """Strong-Wolfe step by bracketing and cubic-interpolation zoom.

    ``fg(x)`` returns ``(f, grad)``.  Returns ``(alpha, f, grad)`` at the
    accepted point.  Near round-off, where f can no longer resolve the
    predicted decrease, a step is also accepted if f has not grown by more
    than ``f_tol * |f0|`` and the curvature condition holds (the
    approximate-Wolfe safeguard of Hager and Zhang).
    """
    if f0 is None or g0 is None:
        f0, g0 = fg(theta)
    d0 = float(np.dot(g0, direction))
    if not d0 < 0.0:
        raise LineSearchError(f"not a descent direction (g.d = {d0:.3e})")
    evals = 0
    slack = f_tol * abs(float(f0))

    def approx_ok(fa, da):
        return fa <= f0 + slack and abs(da) <= -c2 * d0

    def phi(a):
        nonlocal evals
        evals += 1
        try:
            f, g = fg(theta + a * direction)
        except (NumericError, FloatingPointError, OverflowError):
            return np.inf, None, np.nan
        if not np.isfinite(f):
            return np.inf, None, np.nan
        return float(f), g, float(np.dot(g, direction))

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while evals < max_evals:
            a = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if a is None or not np.isfinite(a) or a < left + margin or a > right - margin:
                a = 0.5 * (lo + hi)
            fa, ga, da = phi(a)
            if approx_ok(fa, da):
                return a, fa, ga
            if abs(fa - f0) <= slack and np.isfinite(da):
                # f is at round-off level: bracket on the slope sign alone
                if da * (hi - lo) >= 0:
                    hi, f_hi, d_hi = a, fa, da
                else:
                    lo, f_lo, d_lo = a, fa, da
            elif fa > f0 + c1 * a * d0 or fa >= f_lo:
                hi, f_hi, d_hi = a, fa, da
            else:
                if abs(da) <= -c2 * d0:
                    return a, fa, ga
                if da * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, fa, da
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        raise LineSearchError("strong Wolfe zoom did not converge")

    a_prev, f_prev, d_prev = 0.0, float(f0), d0
    a = alpha0
    first = True
    while evals < max_evals:
        fa, ga, da = phi(a)
        if approx_ok(fa, da):
            return a, fa, ga
        if fa > f0 + c1 * a * d0 or (not first and fa >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a, fa, da)
        if abs(da) <= -c2 * d0:
            return a, fa, ga
        if da >= 0:
            return zoom(a, fa, da, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev = a, fa, da
        a = min(2.0 * a, alpha_max)
        first = False
    raise LineSearchError(f"strong Wolfe bracketing failed after {max_evals} evaluations")


# ---------------------------------------------------------- quasi-Newton

@dataclass
class QuasiNewtonState:
    """Shared state of BFGS (dense ``H``, lower triangle valid) and L-BFGS
    (``pairs`` of recent (s, y)).  ``f``/``g`` are at the current iterate."""

    f: float
    g: np.ndarray
    H: np.ndarray | None = None
    pairs: deque = field(default_factory=lambda: deque(maxlen=10))
    iteration: int = 0
    scale_initial: bool = True
    converged: bool = False
    resets: int = 0
    skipped: int = 0
    last_alpha: float = float("nan")

    @classmethod
    def bfgs(cls, f, g) -> "QuasiNewtonState":
        n = np.asarray(g).size
        if n > MAX_DENSE_BFGS:
            raise ContractError(
                f"dense BFGS refused for {n} parameters (limit {MAX_DENSE_BFGS}); use L-BFGS")
        return cls(float(f), np.asarray(g, dtype=np.float64), H=np.asfortranarray(np.eye(n)))

    @classmethod
    def lbfgs(cls, f, g, memory=10, scale_initial=True) -> "QuasiNewtonState":
        return cls(float(f), np.asarray(g, dtype=np.float64), pairs=deque(maxlen=memory),
                   scale_initial=scale_initial)

    def inverse_hessian(self) -> np.ndarray:
        """Full symmetric copy of the dense approximation."""
        L = np.tril(self.H)
        return L + np.tril(L, -1).T


class _Probe:
    """Wraps an ``fg`` oracle so a value-only line search can hand back the
    gradient at the accepted point without re-evaluating."""

    def __init__(self, fg):
        self.fg = fg
        self.last = None

    def f(self, x):
        f, g = self.fg(x)
        self.last = (x, f, g)
        return f

    def grad_at(self, x):
        if self.last is not None and np.array_equal(self.last[0], x):
            return self.last[1], self.last[2]
        return self.fg(x)


def _line_search(kind, fg, theta, d, f, g, settings):
    if kind == "armijo":
        probe = _Probe(fg)
        alpha, fa = armijo_goldstein_search(probe.f, theta, d, g, f, **settings)
        x = theta + alpha * d
        fa, ga = probe.grad_at(x)
        return alpha, x, fa, ga
    if kind == "wolfe":
        alpha, fa, ga = wolfe_search(fg, theta, d, f, g, **settings)
        return alpha, theta + alpha * d, fa, ga
    raise ContractError(f"unknown line search {kind!r}")


def _qn_step(state, theta, fg, line_search, settings, direction_fn, reset_fn, update_fn):
    g = state.g
    if not np.any(g):
        state.converged = True
        return state, theta, state.f
    d = direction_fn(state, g)
    try:
        if not np.dot(g, d) < 0:
            raise LineSearchError("quasi-Newton direction is not a descent direction")
        alpha, x, fa, ga = _line_search(line_search, fg, theta, d, state.f, g, settings)
    except LineSearchError:
        reset_fn(state)
        state.resets += 1
        d = -g
        alpha, x, fa, ga = _line_search(line_search, fg, theta, d, state.f, g, settings)
    s = x - theta
    y = ga - g
    sy = float(np.dot(s, y))
    if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
        update_fn(state, s, y, sy)
    else:
        state.skipped += 1
    state.f, state.g = float(fa), np.asarray(ga, dtype=np.float64)
    state.iteration += 1
    state.last_alpha = alpha
    return state, x, state.f


def _bfgs_direction(state, g):
    return -blas.dsymv(1.0, state.H, g, lower=1)


def _bfgs_reset(state):
    n = state.H.shape[0]
    state.H[...] = 0.0
    state.H[np.diag_indices(n)] = 1.0


def _bfgs_update(state, s, y, sy):
    rho = 1.0 / sy
    Hy = blas.dsymv(1.0, state.H, y, lower=1)
    yHy = float(np.dot(y, Hy))
    # H <- H - rho (s Hy^T + Hy s^T) + (rho^2 yHy + rho) s s^T, lower triangle in place
    blas.dsyr2(-rho, s, Hy, a=state.H, lower=1, overwrite_a=1)
    blas.dsyr(rho * rho * yHy + rho, s, a=state.H, lower=1, overwrite_a=1)


def bfgs_step(state: QuasiNewtonState, theta, fg, line_search="armijo", **settings):
    """One BFGS iteration: d = -H g, line search, curvature-guarded update.

    On line-search failure H is reset to the identity and the step retried
    once along -g; a second failure raises LineSearchError.
    """
    return _qn_step(state, theta, fg, line_search, settings,
                    _bfgs_direction, _bfgs_reset, _bfgs_update)


def _lbfgs_direction(state, g):
    q = g.copy()
    pairs = list(state.pairs)
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if pairs and state.scale_initial:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def _lbfgs_reset(state):
    state.pairs.clear()


def _lbfgs_update(state, s, y, sy):
    state.pairs.append((s, y, 1.0 / sy))


def lbfgs_step(state: QuasiNewtonState, theta, fg, line_search="wolfe", **settings):
    """One L-BFGS iteration (two-loop recursion over the stored pairs)."""
    return _qn_step(state, theta, fg, line_search, settings,
                    _lbfgs_direction, _lbfgs_reset, _lbfgs_update)


def minimize(fg, theta0, method="bfgs", line_search=None, max_iter=1000, gtol=1e-8, **settings):
    """Plain driver for test functions; returns (theta, f, g, iterations)."""
    theta = np.asarray(theta0, dtype=np.float64).copy()
    f, g = fg(theta)
    if method == "bfgs":
        state = QuasiNewtonState.bfgs(f, g)
        step, ls = bfgs_step, line_search or "armijo"
    elif method == "lbfgs":
        state = QuasiNewtonState.lbfgs(f, g, settings.pop("memory", 10), settings.pop("scale_initial", True))
        step, ls = lbfgs_step, line_search or "wolfe"
    else:
        raise ContractError(f"unknown method {method!r}")
    it = 0
    while it < max_iter and np.linalg.norm(state.g) >= gtol:
        state, theta, f = step(state, theta, fg, ls, **settings)
        it += 1
    return theta, state.f, state.g, it


# ------------------------------------------------------------ schedules

@dataclass(frozen=True)
class Phase:
    kind: str  # "adam" | "bfgs" | "lbfgs"
    epochs: int
    lr: float = 1e-3
    line_search: str | None = None
    memory: int = 10
    gtol: float = 0.0
    on_stall: str = "abort"  # or "stop": end the phase quietly on a second line-search failure

    def __post_init__(self):
        if self.kind not in ("adam", "bfgs", "lbfgs"):
            raise ContractError(f"unknown optimizer {self.kind!r}")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.on_stall not in ("abort", "stop"):
            raise ContractError(f"on_stall must be 'abort' or 'stop', got {self.on_stall!r}")

    @property
    def search(self) -> str:
        if self.line_search:
            return self.line_search
        return "armijo" if self.kind == "bfgs" else "wolfe"


@dataclass
class HistoryEntry:
    iter: int
    phase: str
    alpha: float
    total: float
    terms: dict


@dataclass
class RunRecord:
    seed: int
    theta: np.ndarray
    history: list = field(default_factory=list)
    initial: HistoryEntry | None = None
    config_digest: str = ""
    wall_clock: float = 0.0
    metrics: dict = field(default_factory=dict)
    status: str = "running"
    message: str = ""
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def final_loss(self) -> float:
        if self.history:
            return self.history[-1].total
        return self.initial.total if self.initial else float("nan")


class _ProblemOracle:
    """fg oracle over a TrainingProblem that remembers the per-term values of
    recent evaluations so the history can report them."""

    def __init__(self, problem):
        self.problem = problem
        self._terms = deque(maxlen=8)
        self.nfev = 0

    def __call__(self, theta):
        f, g, terms = self.problem.evaluate(theta, with_grad=True)
        self.nfev += 1
        self._terms.append((theta.copy(), terms))
        return f, g

    def terms_at(self, theta):
        for x, t in reversed(self._terms):
            if np.array_equal(x, theta):
                return t
        return self.problem.evaluate(theta)[2]


def run_schedule(problem, schedule: Sequence[Phase], seed: int, callbacks=(), theta0=None,
                 config_digest: str = "") -> RunRecord:
    """Run the phases in order on one parameter vector.

    One history entry per epoch, holding the loss after that epoch; the
    loss at the starting point is kept in ``record.initial``.
    """
    t_start = time.perf_counter()
    theta = problem.init_theta(seed) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    oracle = _ProblemOracle(problem)
    f, g = oracle(theta)
    record = RunRecord(seed=seed, theta=theta.copy(), config_digest=config_digest)
    record.initial = HistoryEntry(0, "init", float("nan"), f, dict(oracle.terms_at(theta)))
    it = 0

    def log(phase_name, alpha):
        nonlocal it
        it += 1
        entry = HistoryEntry(it, phase_name, float(alpha), float(f), dict(oracle.terms_at(theta)))
        record.history.append(entry)
        for cb in callbacks:
            cb(entry, theta)

    def finish(status, message=""):
        record.theta = theta.copy()
        record.status = status
        record.message = message
        record.wall_clock = time.perf_counter() - t_start
        params, extras = problem.split(theta)
        record.params = {k: v.copy() for k, v in params.items()}
        record.extras = {k: float(v) for k, v in extras.items()}
        return record

    for pi, phase in enumerate(schedule):
        name = phase.kind if phase.kind == "adam" else f"{phase.kind}/{phase.search}"
        if phase.kind == "adam":
            state = AdamState.fresh(theta.size, phase.lr)
            for _ in range(phase.epochs):
                state, theta = adam_step(state, theta, g)
                try:
                    f, g = oracle(theta)
                except NumericError as exc:
                    finish("aborted", f"phase {pi} ({name}): {exc}")
                    raise PhaseAborted(record.message, record) from exc
                log(name, phase.lr)
            continue
        if phase.kind == "bfgs":
            try:
                state = QuasiNewtonState.bfgs(f, g)
            except ContractError as exc:
                finish("aborted", f"phase {pi} ({name}): {exc}")
                raise PhaseAborted(record.message, record) from exc
            step = bfgs_step
        else:
            state = QuasiNewtonState.lbfgs(f, g, phase.memory)
            step = lbfgs_step
        for _ in range(phase.epochs):
            if np.linalg.norm(g) <= phase.gtol or not np.any(g):
                break
            try:
                state, theta, f = step(state, theta, oracle, phase.search)
            except (LineSearchError, NumericError) as exc:
                if phase.on_stall == "stop":
                    record.message = f"phase {pi} ({name}) stopped at epoch {it}: {exc}"
                    break
                finish("aborted", f"phase {pi} ({name}) aborted at epoch {it}: {exc}")
                raise PhaseAborted(record.message, record) from exc
            g = state.g
            log(name, state.last_alpha)
    return finish("completed", record.message)
