"""ReLU nets applied over sliding windows, plus the filter and Volterra baselines.

Windows are ordered oldest first: the net sees ``(u_{t-m}, ..., u_t)`` with
zeros standing in for negative times.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev
from scipy.optimize import least_squares
from scipy.signal import lfilter

from afm.errors import DecayViolated, DimensionMismatch, IllConditioned, InvalidArgument, TrainingDiverged
from afm.iomap import IOMap
from afm.parallel import child_rngs, pmap
from afm.seqcore import Sequence

__all__ = [
    "ReluNet",
    "TCNModel",
    "ExpFilter",
    "ReluFilterMap",
    "VolterraModel",
    "TrainSpec",
    "net_eval",
    "tcn_apply",
    "theorem1_plan",
    "fit_tcn",
    "relu_filter_map",
    "truncate_filter",
    "volterra_term_count",
    "volterra_fit",
    "relu_degree_sweep",
    "compare_parsimony",
]

DEPTH_CONSTANT_NOTE = "unspecified constant in the depth bound (default 1)"


def _relu(x):
    return np.maximum(x, 0.0)


class ReluNet:
    """Alternating affine maps and ReLU, ending in an affine map to one output.

    ``layers[i] = (W_i, b_i)`` with ``W_i`` of shape ``(d_{i+1}, d_i)``. The
    depth is the number of affine maps.
    """

    def __init__(self, layers):
        self.layers = [(np.atleast_2d(np.asarray(W, dtype=float)), np.asarray(b, dtype=float).reshape(-1))
                       for W, b in layers]
        if not self.layers:
            raise InvalidArgument("a net needs at least one affine map")
        for i, (W, b) in enumerate(self.layers):
            if b.shape[0] != W.shape[0]:
                raise DimensionMismatch(f"layer {i}: bias length {b.shape[0]} != rows {W.shape[0]}")
            if i and W.shape[1] != self.layers[i - 1][0].shape[0]:
                raise DimensionMismatch(f"layer {i}: expects {W.shape[1]} inputs, "
                                        f"previous layer gives {self.layers[i - 1][0].shape[0]}")
        if self.layers[-1][0].shape[0] != 1:
            raise DimensionMismatch("the last layer must have a single output")

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def width(self) -> int:
        hidden = [W.shape[0] for W, _ in self.layers[:-1]]
        return max(hidden) if hidden else 0

    @property
    def param_count(self) -> int:
        return sum(W.size + b.size for W, b in self.layers)

    def forward(self, X) -> np.ndarray:
        h = np.asarray(X, dtype=float)
        for W, b in self.layers[:-1]:
            h = _relu(h @ W.T + b)
        W, b = self.layers[-1]
        return (h @ W.T + b)[..., 0]

    __call__ = forward

    @classmethod
    def random(cls, input_dim: int, width: int, depth: int, rng) -> ReluNet:
        dims = [input_dim] + [width] * (depth - 1) + [1]
        layers = []
        for i in range(depth):
            W = rng.normal(size=(dims[i + 1], dims[i])) * math.sqrt(2.0 / dims[i])
            b = np.full(dims[i + 1], 0.01) if i < depth - 1 else np.zeros(1)
            layers.append((W, b))
        return cls(layers)

    # flat-parameter view used by the optimizers

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def with_flat(self, theta) -> ReluNet:
        out, k = [], 0
        for W, b in self.layers:
            Wn = theta[k:k + W.size].reshape(W.shape)
            k += W.size
            bn = theta[k:k + b.size]
            k += b.size
            out.append((Wn, bn))
        return ReluNet(out)

    def to_json(self) -> dict:
        return {
            "m": self.input_dim - 1,
            "layers": [{"rows": W.shape[0], "cols": W.shape[1], "weights": W.ravel().tolist(),
                        "bias": b.tolist()} for W, b in self.layers],
        }

    @classmethod
    def from_json(cls, data) -> ReluNet:
        if isinstance(data, str):
            data = json.loads(data)
        layers = []
        for i, L in enumerate(data["layers"]):
            w = np.asarray(L["weights"], dtype=float)
            if w.size != L["rows"] * L["cols"]:
                raise DimensionMismatch(f"layer {i}: {w.size} weights for {L['rows']}x{L['cols']}")
            layers.append((w.reshape(L["rows"], L["cols"]), L["bias"]))
        net = cls(layers)
        if "m" in data and net.input_dim != data["m"] + 1:
            raise DimensionMismatch(f"m={data['m']} but first layer takes {net.input_dim} inputs")
        return net


def net_eval(net: ReluNet, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != net.input_dim:
        raise DimensionMismatch(f"net takes {net.input_dim} inputs, got {x.size}")
    return float(net.forward(x[None, :])[0])


def _windows(U: np.ndarray, m: int) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    padded = np.concatenate([np.zeros((U.shape[0], m)), U], axis=1)
    return np.lib.stride_tricks.sliding_window_view(padded, m + 1, axis=1)


class TCNModel(IOMap):
    """``(F u)_t = net(u_{t-m}, ..., u_t)`` with zero left-padding."""

    def __init__(self, net: ReluNet, name: str = "tcn", tol: float = 1e-12):
        self.net = net
        self.name = name
        self.tol = tol

    @property
    def m(self) -> int:
        return self.net.input_dim - 1

    @property
    def offset(self) -> float:
        return float(self.net.forward(np.zeros((1, self.m + 1)))[0])

    @property
    def zero_at_zero(self) -> bool:
        return abs(self.offset) <= self.tol

    @property
    def declared_time_invariant(self):
        return self.zero_at_zero

    def outputs(self, U):
        return self.net.forward(_windows(U, self.m))

    def with_zero_at_zero(self) -> tuple[TCNModel, float]:
        """Copy with the last bias shifted so the net vanishes at the origin."""
        shift = self.offset
        layers = [(W.copy(), b.copy()) for W, b in self.net.layers]
        layers[-1][1][0] -= shift
        return TCNModel(ReluNet(layers), self.name, self.tol), shift

    def to_json(self) -> dict:
        return self.net.to_json()

    @classmethod
    def from_json(cls, data) -> TCNModel:
        return cls(ReluNet.from_json(data))


def tcn_apply(model: TCNModel, u, t: int) -> float:
    u = u if isinstance(u, Sequence) else Sequence(u)
    return model.eval(u, t)


# planning


def theorem1_plan(eps: float, gamma: float, R: float, m_star, inv_mod, c: float = 1.0,
                  gamma_grid=None) -> dict:
    """Context length, width and depth bound for an eps-accurate ReLU TCN.

    ``m = m_star(gamma * eps)``, width ``m + 2`` and depth bound
    ``(c R / inv_mod(m, (1 - gamma) eps)) ** (m + 2)``. ``c`` is the
    unspecified constant of the depth bound. The depth is returned both as a
    float (``inf`` on overflow) and as ``log10``. ``table`` lists the same
    quantities over ``gamma_grid`` to show the trade-off.
    """
    if eps <= 0:
        raise InvalidArgument("eps must be positive")
    if not 0 < gamma < 1:
        raise InvalidArgument("gamma must lie in (0,1)")

    def one(g):
        m = int(m_star(g * eps))
        inv = float(inv_mod(m, (1 - g) * eps))
        if inv <= 0:
            log_depth = math.inf
        else:
            log_depth = (m + 2) * math.log10(c * R / inv)
        depth = 10.0 ** log_depth if log_depth < 300 else math.inf
        return {"gamma": g, "m": m, "width": m + 2, "inv_mod": inv,
                "depth_bound": depth, "log10_depth_bound": log_depth}

    plan = one(gamma)
    grid = gamma_grid if gamma_grid is not None else np.round(np.linspace(0.1, 0.9, 9), 10)
    plan["table"] = [one(float(g)) for g in grid]
    plan["depth_constant"] = c
    plan["depth_constant_note"] = DEPTH_CONSTANT_NOTE
    return plan


# training


@dataclass
class TrainSpec:
    samples: int = 4096
    corners: int = 256
    heldout: int = 4096
    epochs: int = 3000
    lr: float = 1e-2
    worst_weight: float = 1.0
    worst_frac: float = 0.01
    restarts: int = 4
    polish: bool = True
    polish_nfev: int = 400
    reseed_rounds: int = 8
    restart_batch: int = 4
    target_error: float | None = None

    @classmethod
    def from_dict(cls, d: dict | None) -> TrainSpec:
        return cls(**(d or {}))


def _window_set(rng, n_random, n_corners, m, R):
    X = rng.uniform(-R, R, size=(n_random, m + 1))
    C = rng.choice([-R, R], size=(n_corners, m + 1))
    extremes = np.vstack([np.full(m + 1, R), np.full(m + 1, -R), np.zeros(m + 1)])
    return np.vstack([extremes, C, X])


def _forward_cache(net: ReluNet, X):
    acts, pres = [X], []
    h = X
    for W, b in net.layers[:-1]:
        z = h @ W.T + b
        pres.append(z)
        h = _relu(z)
        acts.append(h)
    W, b = net.layers[-1]
    return acts, pres, (h @ W.T + b)[:, 0]


def _backward(net: ReluNet, acts, pres, dy):
    """Gradient of ``sum_i dy_i * y_i`` with respect to every layer."""
    grads = [None] * net.depth
    delta = dy[:, None]
    for i in range(net.depth - 1, -1, -1):
        W, _ = net.layers[i]
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i:
            delta = (delta @ W) * (pres[i - 1] > 0)
    return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])


def _jacobian(net: ReluNet, X):
    """Per-sample derivative of the output with respect to the flat parameters."""
    acts, pres, _ = _forward_cache(net, X)
    n = X.shape[0]
    blocks = [None] * net.depth
    delta = np.ones((n, 1))
    for i in range(net.depth - 1, -1, -1):
        W, _ = net.layers[i]
        gW = (delta[:, :, None] * acts[i][:, None, :]).reshape(n, -1)
        blocks[i] = np.hstack([gW, delta])
        if i:
            delta = (delta @ W) * (pres[i - 1] > 0)
    return np.hstack(blocks)


def _revive_dead_units(net: ReluNet, pres, acts, rng):
    """Re-draw hidden units that are inactive on every sample.

    The new hyperplane passes through a random sample point, so the unit is
    active on part of the data again. Returns ``None`` when nothing is dead.
    """
    layers = [(W.copy(), b.copy()) for W, b in net.layers]
    changed = False
    for i, z in enumerate(pres):
        dead = np.flatnonzero(np.all(z <= 0, axis=0))
        if not dead.size:
            continue
        changed = True
        W, b = layers[i]
        h = acts[i]
        for j in dead:
            W[j] = rng.normal(size=W.shape[1]) * math.sqrt(2.0 / W.shape[1])
            b[j] = -float(W[j] @ h[rng.integers(h.shape[0])])
        layers[i + 1][0][:, dead] = 0.0
    return ReluNet(layers) if changed else None


def _polish(net: ReluNet, X, y, nfev: int) -> ReluNet:
    """Trust-region least squares on the training residuals; keeps the input net if worse.

    "trf" rather than MINPACK "lm": the latter returns heap-layout dependent
    iterates in scipy 1.15 and is unsafe to call from several threads.
    """
    theta = net.flat()
    res = least_squares(lambda th: net.with_flat(th).forward(X) - y, theta,
                        jac=lambda th: _jacobian(net.with_flat(th), X),
                        method="trf", max_nfev=nfev, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if not np.all(np.isfinite(res.x)):
        return net
    cand = net.with_flat(res.x)
    if np.sum((cand.forward(X) - y) ** 2) <= np.sum((net.forward(X) - y) ** 2):
        return cand
    return net


def _reseed_unit(net: ReluNet, X, r, rng) -> ReluNet:
    """Move the least useful first-layer unit so its kink passes through the
    worst-fit sample, with zero outgoing weight so the fit is unchanged."""
    layers = [(W.copy(), b.copy()) for W, b in net.layers]
    if len(layers) < 2:
        return net
    W, b = layers[0]
    Wout = layers[1][0]
    usefulness = np.linalg.norm(Wout, axis=0) * np.linalg.norm(W, axis=1)
    j = int(np.argmin(usefulness + 1e-3 * rng.random(usefulness.size)))
    x = X[int(np.argmax(np.abs(r)))]
    W[j] = rng.normal(size=W.shape[1]) * math.sqrt(2.0 / W.shape[1])
    b[j] = -float(W[j] @ x)
    Wout[:, j] = 0.0
    return ReluNet(layers)


def _train_once(net: ReluNet, X, y, spec: TrainSpec, rng):
    theta = net.flat()
    m1, m2 = np.zeros_like(theta), np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    n = X.shape[0]
    k = max(1, int(spec.worst_frac * n))
    cur = net
    for step in range(1, spec.epochs + 1):
        acts, pres, out = _forward_cache(cur, X)
        r = out - y
        if not np.all(np.isfinite(r)):
            raise TrainingDiverged(f"non-finite residual at step {step}")
        dy = 2.0 * r / n
        if spec.worst_weight:
            top = np.argpartition(np.abs(r), n - k)[n - k:]
            dy[top] += spec.worst_weight * 2.0 * r[top] / k
        if step % 100 == 0 and step <= spec.epochs // 2:
            revived = _revive_dead_units(cur, pres, acts, rng)
            if revived is not None:
                cur, theta = revived, revived.flat()
                m1[:], m2[:] = 0.0, 0.0
                continue
        g = _backward(cur, acts, pres, dy)
        m1 = b1 * m1 + (1 - b1) * g
        m2 = b2 * m2 + (1 - b2) * g * g
        lr = spec.lr * (0.1 ** (step / spec.epochs))
        theta = theta - lr * (m1 / (1 - b1 ** step)) / (np.sqrt(m2 / (1 - b2 ** step)) + eps)
        cur = cur.with_flat(theta)
    if spec.polish:
        cur = _polish(cur, X, y, spec.polish_nfev)
        for _ in range(spec.reseed_rounds):
            r = cur.forward(X) - y
            if np.max(np.abs(r)) <= 1e-12:
                break
            cand = _polish(_reseed_unit(cur, X, r, rng), X, y, spec.polish_nfev)
            if np.sum((cand.forward(X) - y) ** 2) < np.sum(r ** 2):
                cur = cand
    if not np.all(np.isfinite(cur.flat())):
        raise TrainingDiverged("parameters became non-finite")
    return cur


def fit_tcn(F: IOMap, m: int, R: float, arch: dict, train_spec=None, rng_seed: int = 0):
    """Fit a ReLU TCN of the given ``{"width", "depth"}`` to ``F`` on windows of length ``m+1``.

    The target on a window ``w`` is the output of ``F`` at time ``m`` for the
    input ``w``. Training minimizes mean squared error plus a penalty on the
    worst sampled residuals (Adam), followed by a trust-region least-squares polish.
    The best of several restarts is shifted so that ``net(0) = 0``; the shift
    and the held-out sup error after the shift are reported.
    """
    spec = train_spec if isinstance(train_spec, TrainSpec) else TrainSpec.from_dict(train_spec)
    if m < 0 or R <= 0:
        raise InvalidArgument("need m >= 0 and R > 0")
    width, depth = int(arch.get("width", m + 2)), int(arch.get("depth", 2))
    data_rng, held_rng, *restart_rngs = child_rngs(rng_seed, 2 + spec.restarts)
    X = _window_set(data_rng, spec.samples, spec.corners, m, R)
    y = F.outputs(X)[:, m]
    Xh = _window_set(held_rng, spec.heldout, spec.corners, m, R)
    yh = F.outputs(Xh)[:, m]

    def run(rng):
        net = _train_once(ReluNet.random(m + 1, width, depth, rng), X, y, spec, rng)
        return net, float(np.max(np.abs(net.forward(Xh) - yh)))

    # fixed batch size keeps the early stop independent of AFM_THREADS
    results = []
    for k in range(0, len(restart_rngs), spec.restart_batch):
        results += pmap(run, restart_rngs[k:k + spec.restart_batch])
        if spec.target_error is not None and min(r[1] for r in results) <= spec.target_error:
            break
    best = min(range(len(results)), key=lambda i: results[i][1])
    raw = TCNModel(results[best][0])
    model, shift = raw.with_zero_at_zero()
    report = {
        "m": m, "width": width, "depth": depth, "param_count": model.net.param_count,
        "train_sup_error": float(np.max(np.abs(model.net.forward(X) - y))),
        "heldout_sup_error": float(np.max(np.abs(model.net.forward(Xh) - yh))),
        "heldout_sup_error_before_shift": results[best][1],
        "zero_shift": shift,
        "restart_errors": [r[1] for r in results],
        "best_restart": best,
        "seed": rng_seed,
        "samples": int(X.shape[0]),
        "heldout_samples": int(Xh.shape[0]),
    }
    return model, report


# exponential ReLU filter


@dataclass
class ExpFilter:
    """Filter coefficients with ``|h_s| <= C lam**s``."""

    C: float
    lam: float
    h: np.ndarray | None = None
    length: int = 64

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise InvalidArgument("lambda must lie in (0,1)")
        if self.C <= 0:
            raise InvalidArgument("C must be positive")
        self.geometric = self.h is None
        if self.h is None:
            self.h = self.C * self.lam ** np.arange(self.length)
        else:
            self.h = np.asarray(self.h, dtype=float).reshape(-1)
            env = self.C * self.lam ** np.arange(self.h.size)
            bad = np.flatnonzero(np.abs(self.h) > env * (1 + 1e-12))
            if bad.size:
                s = int(bad[0])
                raise DecayViolated(f"|h_{s}| = {abs(self.h[s]):.6g} exceeds {env[s]:.6g}")
            self.length = self.h.size

    def coefficients(self, count: int) -> np.ndarray:
        if self.geometric:
            return self.C * self.lam ** np.arange(count)
        out = np.zeros(count)
        k = min(count, self.h.size)
        out[:k] = self.h[:k]
        return out

    def tail_bound(self, m: int, R: float = 1.0) -> float:
        return R * self.C * self.lam ** (m + 1) / (1 - self.lam)


class ReluFilterMap(IOMap):
    """``(F u)_t = ReLU(sum_s h_s u_{t-s})``.

    Geometric coefficients run as the exact recursion; custom ones as a
    finite impulse response over the stored prefix.
    """

    def __init__(self, filt: ExpFilter):
        self.filter = filt
        self.name = f"relu_filter(C={filt.C:g},lam={filt.lam:g})"

    def outputs(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        f = self.filter
        if f.geometric:
            pre = lfilter([f.C], [1.0, -f.lam], U, axis=1)
        else:
            pre = lfilter(f.h, [1.0], U, axis=1)
        return _relu(pre)

    @property
    def sup_output(self) -> float:
        """``sup |F|`` over the unit input ball."""
        f = self.filter
        return f.C / (1 - f.lam) if f.geometric else float(np.abs(f.h).sum())


def relu_filter_map(C: float, lam: float, horizon: int | None = None, h=None) -> ReluFilterMap:
    """ReLU of a decaying convolution; ``horizon`` truncates geometric coefficients to a prefix."""
    if h is None and horizon is not None:
        h = C * lam ** np.arange(horizon + 1)
    return ReluFilterMap(ExpFilter(C, lam, h))


def truncate_filter(filt: ExpFilter | ReluFilterMap, m: int, R: float = 1.0) -> tuple[TCNModel, float]:
    """TCN keeping ``h_0..h_m`` and the sup-error bound ``R C lam**(m+1) / (1 - lam)``."""
    if isinstance(filt, ReluFilterMap):
        filt = filt.filter
    if m < 0:
        raise InvalidArgument("m must be nonnegative")
    w = filt.coefficients(m + 1)[::-1]
    net = ReluNet([(w[None, :], [0.0]), ([[1.0]], [0.0])])
    return TCNModel(net, name=f"truncated_filter(m={m})"), filt.tail_bound(m, R)


# Volterra baseline


def volterra_term_count(m: int, degree: int) -> int:
    return math.comb(m + 1 + degree, degree)


def _exponents(nvars: int, degree: int) -> np.ndarray:
    rows = []
    for k in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), k):
            e = np.zeros(nvars, dtype=int)
            for j in combo:
                e[j] += 1
            rows.append(e)
    return np.array(rows, dtype=int).reshape(-1, nvars)


class VolterraModel(IOMap):
    """Polynomial of total degree ``degree`` in the window variables.

    Stored in a tensor Chebyshev basis of ``u / scale``, which spans the same
    space as monomials but is far better conditioned on ``[-scale, scale]``.
    """

    def __init__(self, m: int, degree: int, scale: float, coeffs=None):
        self.m, self.degree, self.scale = m, degree, float(scale)
        self.exponents = _exponents(m + 1, degree)
        self.coeffs = np.zeros(len(self.exponents)) if coeffs is None else np.asarray(coeffs, dtype=float)
        self.name = f"volterra(m={m},d={degree})"

    @property
    def term_count(self) -> int:
        return len(self.exponents)

    def features(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float) / self.scale
        lead = X.shape[:-1]
        X = X.reshape(-1, self.m + 1)
        T = np.empty((self.degree + 1,) + X.shape)
        T[0] = 1.0
        if self.degree >= 1:
            T[1] = X
        for k in range(2, self.degree + 1):
            T[k] = 2 * X * T[k - 1] - T[k - 2]
        cols = np.arange(self.m + 1)
        Phi = np.empty((X.shape[0], self.term_count))
        for i, e in enumerate(self.exponents):
            Phi[:, i] = np.prod(T[e, :, cols], axis=0)
        return Phi.reshape(lead + (self.term_count,))

    def evaluate(self, X) -> np.ndarray:
        return self.features(X) @ self.coeffs

    def outputs(self, U):
        return self.evaluate(_windows(U, self.m))

    def to_json(self):
        return {"m": self.m, "degree": self.degree, "scale": self.scale,
                "exponents": self.exponents.tolist(), "coeffs": self.coeffs.tolist()}


def volterra_fit(F: IOMap, m: int, degree: int, R: float, train_spec: dict | None = None,
                 rng_seed: int = 0, cond_limit: float = 1e12):
    """Least-squares Volterra fit to ``F`` on sampled windows.

    Falls back to a ridge solve when the design matrix condition number
    exceeds ``cond_limit``; raises :class:`IllConditioned` if that is not
    finite either.
    """
    if degree < 0:
        raise InvalidArgument("degree must be nonnegative")
    spec = dict(train_spec or {})
    model = VolterraModel(m, degree, R)
    n = int(spec.get("samples", max(2048, 4 * model.term_count)))
    corners = int(spec.get("corners", 256))
    rng, held = child_rngs(rng_seed, 2)
    X = _window_set(rng, n, corners, m, R)
    y = F.outputs(X)[:, m]
    Phi = model.features(X)
    s = np.linalg.svd(Phi, compute_uv=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    regularized = cond > cond_limit
    if regularized:
        lam = 1e-10 * s[0] ** 2
        coeffs = np.linalg.solve(Phi.T @ Phi + lam * np.eye(Phi.shape[1]), Phi.T @ y)
        if not np.all(np.isfinite(coeffs)):
            raise IllConditioned("regularized Volterra solve failed", cond)
    else:
        coeffs = np.linalg.lstsq(Phi, y, rcond=None)[0]
    model.coeffs = coeffs
    Xh = _window_set(held, n, corners, m, R)
    yh = F.outputs(Xh)[:, m]
    report = {
        "m": m, "degree": degree, "term_count": model.term_count, "cond": cond,
        "regularized": regularized,
        "train_sup_error": float(np.max(np.abs(Phi @ coeffs - y))),
        "heldout_sup_error": float(np.max(np.abs(model.evaluate(Xh) - yh))),
    }
    return model, report


def relu_degree_sweep(degrees, half_width: float = 2.0, fit_points: int = 4001,
                      eval_points: int = 20001) -> list[tuple[int, float]]:
    """Sup error of the least-squares degree-``d`` fit to ReLU on ``[-a, a]``.

    Fits on Chebyshev nodes and measures on a dense uniform grid. Returns
    ``(d, error)`` pairs.
    """
    a = half_width
    k = np.arange(fit_points)
    xf = a * np.cos(np.pi * (k + 0.5) / fit_points)
    xe = np.concatenate([np.linspace(-a, a, eval_points), xf])
    out = []
    for d in degrees:
        d = int(d)
        c = chebyshev.chebfit(xf / a, _relu(xf), d)
        err = float(np.max(np.abs(chebyshev.chebval(xe / a, c) - _relu(xe))))
        out.append((d, err))
    return out


def compare_parsimony(F: ReluFilterMap, eps, m: int | None = None, R: float = 1.0,
                      degrees=range(1, 41)) -> dict:
    """TCN size versus Volterra degree needed for sup error ``eps`` on a ReLU filter.

    The TCN is the truncated filter with the smallest ``m`` whose tail bound
    is at most ``eps`` (or the given ``m``). The Volterra degree is the
    smallest ``d`` in the sweep whose 1-D ReLU error on the pre-activation
    range is at most ``eps``; beyond the sweep it is extrapolated from the
    smallest observed ``d * error`` and flagged.
    """
    filt = F.filter
    eps_list = [float(e) for e in np.atleast_1d(eps)]
    S = R * F.sup_output
    sweep = [(d, S / 2.0 * e) for d, e in relu_degree_sweep(degrees, half_width=2.0)]
    c_lower = min(d * e for d, e in sweep)
    log_d = np.log([d for d, _ in sweep])
    log_e = np.log([e for _, e in sweep])
    slope = float(np.polyfit(log_d, log_e, 1)[0])
    rows = []
    for e in eps_list:
        if e >= S:
            rows.append({"eps": e, "tcn_m": 0, "tcn_params": 0, "volterra_degree": 0,
                         "volterra_terms": 1, "extrapolated": False})
            continue
        if m is None:
            mm = 0
            while filt.tail_bound(mm, R) > e:
                mm += 1
        else:
            mm = m
        hit = [d for d, err in sweep if err <= e]
        if hit:
            d, extrap = hit[0], False
        else:
            d, extrap = max(int(math.ceil(c_lower / e)), sweep[-1][0] + 1), True
        rows.append({"eps": e, "tcn_m": mm, "tcn_params": mm + 2, "tcn_bound": filt.tail_bound(mm, R),
                     "volterra_degree": d, "volterra_terms": volterra_term_count(mm, d),
                     "extrapolated": extrap})
    return {"rows": rows, "degree_sweep": sweep, "loglog_slope": slope, "c_lower": c_lower}
