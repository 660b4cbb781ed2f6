"""Recurrent realizations ``x_{t+1} = f(x_t, u_t)``, ``y_t = g(x_t)`` and their bounds.

State maps are written for batches: ``f(X, u)`` takes states of shape
``(..., n)`` and inputs of shape ``(...)``. Builtin families attach a
:class:`KernelSpec` so trajectories run in the compiled kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from afm import kernels
from afm.errors import ContainmentViolated, InvalidArgument, InvalidCertificate, NonFinite, NotResolved
from afm.iomap import IOMap
from afm.parallel import child_rngs
from afm.seqcore import Sequence

__all__ = [
    "KernelSpec",
    "StateSpaceSystem",
    "BetaFunction",
    "InvariantBall",
    "Thm4Bounds",
    "linear_system",
    "contractive_tanh",
    "simulate_states",
    "flow",
    "io_map_of",
    "estimate_beta",
    "prop2_check",
    "prop2_sweep",
    "thm3_memory_bound",
    "thm3_modulus_bound",
    "thm4_bounds",
    "compute_invariant_ball",
    "tapped_delay_realization",
]


@dataclass(frozen=True)
class KernelSpec:
    kind: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    psi_kind: int = 0
    psi_gain: float = 0.0


@dataclass
class StateSpaceSystem:
    """State-space system with Lipschitz metadata.

    ``domain`` is the radius of a ball declared positively invariant, or
    ``None`` for all of R^n. With ``feedthrough=True`` the output map is
    ``g(x, u)`` (tapped delay lines read the current input directly).
    """

    n: int
    f: object
    g: object
    xi: np.ndarray
    jacobian_x: object = None
    L_f: float | None = None
    L_g: float | None = None
    domain: float | None = None
    name: str = "system"
    feedthrough: bool = False
    kernel: KernelSpec | None = None
    beta: BetaFunction | None = None
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float).reshape(self.n)

    def step(self, x, u):
        return np.asarray(self.f(np.asarray(x, dtype=float), np.asarray(u, dtype=float)))

    def output(self, x, u=None):
        if self.feedthrough:
            return np.asarray(self.g(x, u))
        return np.asarray(self.g(x))

    def is_time_invariant(self, tol=1e-12) -> bool:
        """``f(xi, 0) = xi`` and ``g(xi) = 0`` (checked numerically)."""
        x1 = self.step(self.xi[None, :], np.zeros(1))[0]
        y0 = self.output(self.xi[None, :], np.zeros(1))[0]
        return bool(np.allclose(x1, self.xi, atol=tol, rtol=0) and abs(y0) <= tol)

    def check_lipschitz(self, R: float, samples: int = 500, rng_seed: int = 0,
                        radius: float | None = None) -> list:
        """Sampled violations of the declared ``L_f`` (in u) and ``L_g`` (in x)."""
        rng = np.random.default_rng(rng_seed)
        rad = radius or self.domain or 1.0
        X = rng.uniform(-rad, rad, size=(samples, self.n)) / max(1.0, math.sqrt(self.n))
        X2 = rng.uniform(-rad, rad, size=(samples, self.n)) / max(1.0, math.sqrt(self.n))
        u1, u2 = rng.uniform(-R, R, size=(2, samples))
        bad = []
        if self.L_f is not None:
            lhs = np.linalg.norm(self.step(X, u1) - self.step(X, u2), axis=-1)
            rhs = self.L_f * np.abs(u1 - u2)
            for i in np.flatnonzero(lhs > rhs * (1 + 1e-9) + 1e-12):
                bad.append({"which": "L_f", "lhs": float(lhs[i]), "rhs": float(rhs[i])})
        if self.L_g is not None and not self.feedthrough:
            lhs = np.abs(self.output(X) - self.output(X2))
            rhs = self.L_g * np.linalg.norm(X - X2, axis=-1)
            for i in np.flatnonzero(lhs > rhs * (1 + 1e-9) + 1e-12):
                bad.append({"which": "L_g", "lhs": float(lhs[i]), "rhs": float(rhs[i])})
        return bad

    def to_json(self) -> dict:
        return dict(self.spec) if self.spec else {"name": self.name}


# beta functions


@dataclass
class BetaFunction:
    """Class-KL bound on incremental state deviations.

    Forms: ``exponential`` (``scale * C * rate**t``), ``power``
    (``scale * C * t**-alpha`` with ``beta(C, 0) = scale * C``) and
    ``tabulated`` (sampled table on ``C_grid`` x ``0..tau_max`` continued by a
    geometric majorant with ratio ``tail_rate``).
    """

    form: str
    scale: float = 1.0
    rate: float | None = None
    alpha: float | None = None
    C_grid: np.ndarray | None = None
    table: np.ndarray | None = None
    tail_rate: float | None = None

    @classmethod
    def exponential(cls, scale: float, rate: float) -> BetaFunction:
        if not 0 <= rate < 1:
            raise InvalidArgument(f"exponential beta needs rate in [0,1), got {rate}")
        return cls("exponential", scale=float(scale), rate=float(rate))

    @classmethod
    def power(cls, alpha: float, scale: float = 1.0) -> BetaFunction:
        if not alpha > 0:
            raise InvalidArgument("power beta needs alpha > 0")
        return cls("power", scale=float(scale), alpha=float(alpha))

    @property
    def summable(self) -> bool:
        if self.form == "exponential":
            return True
        if self.form == "power":
            return self.alpha > 1
        return self.tail_rate is not None and self.tail_rate < 1

    def __call__(self, C, t):
        C = np.asarray(C, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.form == "exponential":
            return self.scale * C * np.power(self.rate, t)
        if self.form == "power":
            return self.scale * C * np.power(np.maximum(t, 1.0), -self.alpha)
        return self._tabulated(C, t)

    def _tabulated(self, C, t):
        C, t = np.broadcast_arrays(C, t)
        tau_max = self.table.shape[1] - 1
        grid = np.concatenate([[0.0], self.C_grid])
        out = np.empty(C.shape)
        for idx in np.ndindex(C.shape):
            c, tau = float(C[idx]), float(t[idx])
            k = int(min(tau, tau_max))
            col = np.concatenate([[0.0], self.table[:, k]])
            if c <= grid[-1]:
                val = np.interp(c, grid, col)
            else:
                val = col[-1] * c / grid[-1]
            if tau > tau_max:
                val *= (self.tail_rate if self.tail_rate is not None else 1.0) ** (tau - tau_max)
            out[idx] = val
        return out if out.shape else float(out)

    def partial_sum(self, C: float, t: int) -> float:
        """``sum_{s=0}^{t-1} beta(C, s)``."""
        if t <= 0:
            return 0.0
        return float(np.sum(self(C, np.arange(t))))

    def tail_sum(self, C: float, m: int) -> float:
        """``sum_{k>=m} beta(C, k)``; closed form where available."""
        if C == 0:
            return 0.0
        if self.form == "exponential":
            if self.rate == 0:
                return self.scale * C if m == 0 else 0.0
            return self.scale * C * self.rate ** m / (1.0 - self.rate)
        if self.form == "power":
            if self.alpha <= 1:
                return math.inf
            head = self.scale * C if m == 0 else 0.0
            return head + self.scale * C * float(zeta(self.alpha, max(m, 1)))
        if not self.summable:
            return math.inf
        tau_max = self.table.shape[1] - 1
        start = max(m, tau_max + 1)
        finite = float(np.sum(self(C, np.arange(m, start)))) if m < start else 0.0
        # geometric majorant past the table
        return finite + float(self(C, start)) / (1.0 - self.tail_rate)

    def to_json(self) -> dict:
        d = {"form": self.form, "scale": self.scale}
        if self.form == "exponential":
            d["rate"] = self.rate
        elif self.form == "power":
            d["alpha"] = self.alpha
        else:
            d.update(C_grid=self.C_grid.tolist(), table=self.table.tolist(), tail_rate=self.tail_rate)
        return d


# builtin families


def _vec(b, n):
    return np.asarray(b, dtype=float).reshape(n)


def linear_system(a, b, c, xi=None) -> StateSpaceSystem:
    """``x' = A x + B u``, ``y = C x``; scalars give a one-state system."""
    A = np.atleast_2d(np.asarray(a, dtype=float))
    n = A.shape[0]
    B, C = _vec(b, n), _vec(c, n)
    xi = np.zeros(n) if xi is None else xi
    norm_A = float(np.linalg.norm(A, 2))
    beta = BetaFunction.exponential(1.0, norm_A) if norm_A < 1 else None
    return StateSpaceSystem(
        n=n,
        f=lambda X, u: X @ A.T + np.asarray(u)[..., None] * B,
        g=lambda X: X @ C,
        xi=xi,
        jacobian_x=lambda x, u: A.copy(),
        L_f=float(np.linalg.norm(B)),
        L_g=float(np.linalg.norm(C)),
        name="linear",
        kernel=KernelSpec(kernels.LINEAR, A, B, C),
        beta=beta,
        spec={"name": "linear", "a": A.tolist(), "b": B.tolist(), "c": C.tolist()},
    )


def contractive_tanh(a, b, c=1.0, xi=None) -> StateSpaceSystem:
    """``x' = tanh(A x + B u)``, ``y = C x``; contractive when ``||A||_2 < 1``."""
    A = np.atleast_2d(np.asarray(a, dtype=float))
    n = A.shape[0]
    B = _vec(b, n)
    C = _vec(np.broadcast_to(np.asarray(c, dtype=float), (n,)) if np.ndim(c) == 0 else c, n)
    xi = np.zeros(n) if xi is None else xi
    norm_A = float(np.linalg.norm(A, 2))

    def jac(x, u):
        z = A @ np.asarray(x, dtype=float) + B * float(u)
        return (1.0 - np.tanh(z) ** 2)[:, None] * A

    return StateSpaceSystem(
        n=n,
        f=lambda X, u: np.tanh(X @ A.T + np.asarray(u)[..., None] * B),
        g=lambda X: X @ C,
        xi=xi,
        jacobian_x=jac,
        L_f=float(np.linalg.norm(B)),
        L_g=float(np.linalg.norm(C)),
        name="contractive_tanh",
        kernel=KernelSpec(kernels.TANH, A, B, C),
        beta=BetaFunction.exponential(1.0, norm_A) if norm_A < 1 else None,
        spec={"name": "contractive_tanh", "a": A.tolist(), "b": B.tolist(), "c": C.tolist()},
    )


# simulation


def simulate_states(sys: StateSpaceSystem, U, X0=None, backend=None) -> np.ndarray:
    """Trajectories ``x_0..x_L`` for each input row; shape ``(batch, L+1, n)``."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    nb, L = U.shape
    X0 = np.broadcast_to(sys.xi if X0 is None else np.asarray(X0, dtype=float), (nb, sys.n))
    k = sys.kernel
    if k is not None and sys.n > 0:
        X = kernels.simulate(k.kind, k.A, k.B, k.C, X0, U, k.psi_kind, k.psi_gain, backend=backend)
    else:
        X = np.empty((nb, L + 1, sys.n))
        X[:, 0] = X0
        for t in range(L):
            X[:, t + 1] = sys.step(X[:, t], U[:, t])
    if not np.all(np.isfinite(X)):
        raise NonFinite(f"{sys.name}: state left the finite reals")
    return X


def flow(sys: StateSpaceSystem, xi, u, s: int, t: int) -> np.ndarray:
    """State at time ``t`` started from ``xi`` at time ``s`` under input ``u``."""
    if s > t:
        raise InvalidArgument("flow needs s <= t")
    u = u if isinstance(u, Sequence) else Sequence(u)
    seg = u.padded(t)[s:t]
    X = simulate_states(sys, seg[None, :], X0=np.asarray(xi, dtype=float)[None, :])
    return X[0, -1]


class StateSpaceMap(IOMap):
    def __init__(self, sys: StateSpaceSystem):
        self.sys = sys
        self.name = f"io[{sys.name}]"
        self.declared_time_invariant = sys.is_time_invariant()

    def outputs(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        X = simulate_states(self.sys, U)[:, :-1]
        if self.sys.feedthrough:
            return self.sys.output(X, U)
        return self.sys.output(X)


def io_map_of(sys: StateSpaceSystem) -> IOMap:
    return StateSpaceMap(sys)


# incremental stability


def _unit_rows(rng, k, n):
    D = rng.normal(size=(k, n))
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def estimate_beta(sys: StateSpaceSystem, R: float, t_max: int = 40, pairs: int = 64,
                  rng_seed: int = 0, C_grid=None, radius: float | None = None,
                  tail_rate: float | None = None) -> BetaFunction:
    """Tabulate ``max ||phi(xi) - phi(xi')||`` over sampled inputs with ``||xi - xi'|| = C``.

    The geometric continuation past ``t_max`` uses ``tail_rate`` when given;
    otherwise the worst per-step decay ratio seen over the last quarter of the
    table. A sampled table is a lower bound on the true beta.
    """
    if pairs < 1:
        raise InvalidArgument("pairs must be >= 1")
    rad = radius or sys.domain or 1.0
    C_grid = np.asarray(C_grid if C_grid is not None else np.linspace(rad / 8, 2 * rad, 8), dtype=float)
    rngs = child_rngs(rng_seed, C_grid.size)
    table = np.zeros((C_grid.size, t_max + 1))
    for j, C in enumerate(C_grid):
        rng = rngs[j]
        xi = rng.uniform(-rad, rad, size=(pairs, sys.n)) / max(1.0, math.sqrt(sys.n))
        xi2 = xi + C * _unit_rows(rng, pairs, sys.n)
        U = rng.uniform(-R, R, size=(pairs, t_max))
        U[0], U[min(1, pairs - 1)] = R, -R
        X1 = simulate_states(sys, U, X0=xi)
        X2 = simulate_states(sys, U, X0=xi2)
        table[j] = np.max(np.linalg.norm(X1 - X2, axis=2), axis=0)
    if tail_rate is None:
        lo = max(1, (3 * t_max) // 4)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = table[:, lo:] / table[:, lo - 1:-1]
        ratios = ratios[np.isfinite(ratios)]
        tail_rate = float(np.max(ratios)) if ratios.size else 0.0
        tail_rate = tail_rate if tail_rate < 1 else None
    return BetaFunction("tabulated", C_grid=C_grid, table=table, tail_rate=tail_rate)


def prop2_check(sys: StateSpaceSystem, beta: BetaFunction, u, u_tilde, xi, t: int):
    """Both sides of the trajectory-deviation estimate at time ``t``.

    ``lhs = ||phi^u_{0,t}(xi) - phi^{u~}_{0,t}(xi)||`` and
    ``rhs = sum_s beta(||f(x~_s, u_s) - f(x~_s, u~_s)||, t-s-1)``.
    """
    u = u if isinstance(u, Sequence) else Sequence(u)
    ut = u_tilde if isinstance(u_tilde, Sequence) else Sequence(u_tilde)
    lhs, rhs = prop2_sweep_arrays(sys, beta, u.padded(t)[None, :], ut.padded(t)[None, :],
                                  np.asarray(xi, dtype=float)[None, :])
    return float(lhs[0]), float(rhs[0])


def prop2_sweep_arrays(sys, beta, U, Ut, Xi):
    t = U.shape[1]
    X = simulate_states(sys, U, X0=Xi)
    Xt = simulate_states(sys, Ut, X0=Xi)
    lhs = np.linalg.norm(X[:, t] - Xt[:, t], axis=-1)
    if t == 0:
        return lhs, np.zeros_like(lhs)
    xs = Xt[:, :t]
    jump = np.linalg.norm(sys.step(xs, U) - sys.step(xs, Ut), axis=-1)
    lags = t - np.arange(t) - 1
    rhs = np.sum(beta(jump, lags[None, :]), axis=1)
    return lhs, rhs


def prop2_sweep(sys: StateSpaceSystem, beta: BetaFunction, trials: int = 1000, t_max: int = 50,
                R: float = 1.0, rng_seed: int = 0, xi_radius: float = 1.0):
    """Random ``(u, u~, xi)`` triples at random horizons; returns rows of (t, lhs, rhs)."""
    rng = np.random.default_rng(rng_seed)
    ts = rng.integers(1, t_max + 1, size=trials)
    out = np.empty((trials, 3))
    for t in np.unique(ts):
        rows = np.flatnonzero(ts == t)
        k = rows.size
        U = rng.uniform(-R, R, size=(k, t))
        Ut = rng.uniform(-R, R, size=(k, t))
        # half the trials compare against a windowed copy, the case the memory bound uses
        cut = rng.integers(0, t + 1, size=k)
        mask = (np.arange(t)[None, :] < cut[:, None]) & (np.arange(k)[:, None] % 2 == 0)
        Ut = np.where(mask, 0.0, np.where(np.arange(k)[:, None] % 2 == 0, U, Ut))
        Xi = rng.uniform(-xi_radius, xi_radius, size=(k, sys.n))
        lhs, rhs = prop2_sweep_arrays(sys, beta, U, Ut, Xi)
        out[rows] = np.column_stack([np.full(k, t), lhs, rhs])
    return out


# bound calculators


def thm3_memory_bound(beta: BetaFunction, diam_S: float, L_g: float, eps: float,
                      m_max: int = 100_000) -> int:
    """Smallest ``m`` with ``sum_{k>=m} beta(diam_S, k) < eps / L_g``."""
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    if L_g == 0 or diam_S == 0:
        return 0
    if not beta.summable:
        raise NotResolved("beta is not summable")
    target = eps / L_g
    for m in range(m_max + 1):
        if beta.tail_sum(diam_S, m) < target:
            return m
    raise NotResolved(f"memory bound exceeds m_max={m_max}", eps=eps)


def thm3_modulus_bound(beta: BetaFunction, L_f: float, L_g: float, delta: float,
                       t: int | None) -> float:
    """``L_g * sum_{s<t} beta(L_f * delta, s)``; ``t=None`` sums the whole series."""
    if delta < 0:
        raise InvalidArgument("delta must be nonnegative")
    if t is None or t == math.inf:
        return L_g * beta.tail_sum(L_f * delta, 0)
    return L_g * beta.partial_sum(L_f * delta, int(t))


@dataclass
class Thm4Bounds:
    m_star_bound: float
    m_star_ceil: int
    omega_bound: float

    def to_json(self):
        return {"m_star_bound": self.m_star_bound, "m_star_ceil": self.m_star_ceil,
                "omega_bound": self.omega_bound}


def thm4_bounds(kappa_P: float, mu: float, L_f: float, L_g: float, R: float, eps: float,
                delta: float) -> Thm4Bounds:
    """Closed-form memory and modulus bounds under an exponential certificate.

    The memory bound is clamped at zero (memory horizons are nonnegative).
    """
    if not 0 < mu < 1:
        raise InvalidCertificate(f"mu must lie in (0,1), got {mu}")
    if not kappa_P >= 1:
        raise InvalidCertificate(f"condition number must be >= 1, got {kappa_P}")
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    if delta < 0:
        raise InvalidArgument("delta must be nonnegative")
    sq = math.sqrt(mu)
    arg = 2 * kappa_P * L_f * L_g * R / ((1 - sq) ** 2 * eps)
    m = 2 * math.log(arg) / math.log(1 / mu) if arg > 0 else 0.0
    m = max(0.0, m)
    omega = math.sqrt(kappa_P) * L_f * L_g * delta / (1 - sq)
    return Thm4Bounds(m, int(math.ceil(m - 1e-12)), omega)


@dataclass
class InvariantBall:
    radius: float
    n: int

    @property
    def center(self):
        return np.zeros(self.n)

    @property
    def diam(self) -> float:
        return 2 * self.radius


def compute_invariant_ball(sys: StateSpaceSystem, cert, R: float, samples: int = 64,
                           t_max: int = 200, rng_seed: int = 0) -> InvariantBall:
    """Ball that contains every trajectory from ``sys.xi`` under inputs bounded by ``R``.

    Radius ``sqrt(kappa) * (||xi|| + L_f R / (1 - sqrt(mu)))``. Sampled
    trajectories are simulated and must stay inside.
    """
    if sys.L_f is None:
        raise InvalidArgument("system has no declared L_f")
    f00 = sys.step(np.zeros((1, sys.n)), np.zeros(1))[0]
    if not np.allclose(f00, 0.0, atol=1e-12):
        raise InvalidArgument("invariant ball construction needs f(0,0) = 0")
    sq = math.sqrt(cert.mu)
    radius = math.sqrt(cert.kappa) * (float(np.linalg.norm(sys.xi)) + sys.L_f * R / (1 - sq))
    ball = InvariantBall(radius, sys.n)
    if R == 0:
        U = np.zeros((1, t_max))
    else:
        rng = np.random.default_rng(rng_seed)
        U = np.vstack([np.full(t_max, R), np.full(t_max, -R),
                       rng.choice([-R, R], size=(samples // 2, t_max)),
                       rng.uniform(-R, R, size=(samples - samples // 2, t_max))])
    X = simulate_states(sys, U)
    norms = np.linalg.norm(X, axis=2)
    worst = np.unravel_index(np.argmax(norms), norms.shape)
    if norms[worst] > radius * (1 + 1e-9) + 1e-12:
        raise ContainmentViolated(
            f"trajectory reached norm {norms[worst]:.6g} > radius {radius:.6g}",
            state=X[worst[0], worst[1]].tolist(), time=int(worst[1]),
        )
    return ball


def tapped_delay_realization(fm_functional, m: int, name: str = "tapped_delay") -> StateSpaceSystem:
    """Shift-register realization of ``y_t = f(u_{t-m}, ..., u_t)`` with zero initial state.

    ``fm_functional`` maps an array ``(..., m+1)`` of windows (oldest first)
    to ``(...)``.
    """
    if m < 0:
        raise InvalidArgument("m must be nonnegative")
    shift = np.eye(m, k=1)
    e_last = np.zeros(m)
    if m:
        e_last[-1] = 1.0

    def f(X, u):
        return np.concatenate([X[..., 1:], np.asarray(u, dtype=float)[..., None]], axis=-1)

    def g(X, u):
        return np.asarray(fm_functional(np.concatenate([X, np.asarray(u, dtype=float)[..., None]], axis=-1)))

    return StateSpaceSystem(
        n=m, f=f, g=g, xi=np.zeros(m), jacobian_x=lambda x, u: shift.copy(),
        name=name, feedthrough=True,
        kernel=KernelSpec(kernels.LINEAR, shift, e_last, np.zeros(m)) if m else None,
    )
