"""Input-output maps and the sampled metrology of approximately finite memory.

Every estimator here computes a *sampled lower bound* on a supremum over an
infinite input set. Reports carry the witness input that achieved the max so
a result can be replayed and inspected.

Batch convention: an :class:`IOMap` maps a 2-D array ``U`` of shape
``(batch, L)`` (rows are inputs on ``[0, L)``) to the outputs on the same
horizon. Scalar helpers (``eval``, ``__call__``) are thin wrappers.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from afm.errors import InvalidArgument, NotResolved
from afm.parallel import child_rngs, pmap
from afm.seqcore import InputBall, Sequence, embed_vector

__all__ = [
    "IOMap",
    "FunctionMap",
    "identity_map",
    "running_sum",
    "WeightingSequence",
    "ModulusTable",
    "MemoryEstimate",
    "CheckReport",
    "SamplerSpec",
    "finite_functional",
    "check_causality",
    "check_time_invariance",
    "memory_deviation",
    "estimate_memory_horizon",
    "estimate_modulus",
    "inverse_modulus",
    "estimate_fading_modulus",
    "afm_to_fading_bound",
    "fading_to_afm_bound",
]

SAMPLED = "sampled lower bound"


class IOMap:
    """Causal operator on real sequences.

    Subclasses implement :meth:`outputs`. ``declared_causal`` and
    ``declared_time_invariant`` are claims, verified by the checkers below.
    """

    name = "iomap"
    declared_causal = True
    declared_time_invariant = True

    def outputs(self, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval(self, u, t: int) -> float:
        """``(F u)_t`` with ``u`` zero-extended past its horizon if needed."""
        u = u if isinstance(u, Sequence) else Sequence(u)
        L = max(len(u), t + 1)
        return float(self.outputs(u.padded(L)[None, :])[0, t])

    def __call__(self, u) -> Sequence:
        u = u if isinstance(u, Sequence) else Sequence(u)
        return Sequence(self.outputs(u.values[None, :])[0])

    def eval_at(self, U: np.ndarray, ts) -> np.ndarray:
        """Output of row ``i`` at time ``ts[i]``."""
        Y = self.outputs(U)
        return Y[np.arange(U.shape[0]), np.asarray(ts)]


class FunctionMap(IOMap):
    """Wrap ``fn(values, t) -> float``; ``values`` is the full stored input."""

    def __init__(self, fn, name="function", causal=True, time_invariant=True):
        self.fn = fn
        self.name = name
        self.declared_causal = causal
        self.declared_time_invariant = time_invariant

    def outputs(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        out = np.empty_like(U)
        for i, row in enumerate(U):
            for t in range(U.shape[1]):
                out[i, t] = self.fn(row, t)
        return out


class _Identity(IOMap):
    name = "identity"

    def outputs(self, U):
        return np.array(U, dtype=float, copy=True)


class _RunningSum(IOMap):
    def __init__(self, offset=0.0):
        self.offset = float(offset)
        self.name = "running_sum" if offset == 0 else f"running_sum+{offset:g}"
        self.declared_time_invariant = offset == 0

    def outputs(self, U):
        return np.cumsum(U, axis=1) + self.offset


def identity_map() -> IOMap:
    return _Identity()


def running_sum(offset: float = 0.0) -> IOMap:
    """``(F u)_t = offset + sum_{s<=t} u_s``; time-invariant only for zero offset."""
    return _RunningSum(offset)


# weighting sequences


class WeightingSequence:
    """Positive weights in (0, 1] decreasing to zero, e.g. ``rho**t``."""

    def __init__(self, generator, name="custom", check_prefix=64):
        self._gen = generator
        self.name = name
        w = self(np.arange(check_prefix))
        if not (w[0] <= 1.0 and np.all(w > 0) and np.all(np.diff(w) <= 0) and w[-1] < w[0]):
            raise InvalidArgument("weighting sequence must lie in (0,1] and decrease to 0")

    @classmethod
    def geometric(cls, rho: float) -> WeightingSequence:
        if not 0.0 < rho < 1.0:
            raise InvalidArgument(f"geometric decay must lie in (0,1), got {rho}")
        return cls(lambda t: np.power(rho, np.asarray(t, dtype=float)), name=f"geometric({rho:g})")

    def __call__(self, t):
        return np.asarray(self._gen(t), dtype=float)


# tables and reports


@dataclass
class ModulusTable:
    """Sampled modulus of continuity on a grid of deltas (``0`` included).

    ``kind`` is ``"forward"`` for the l-infinity modulus of the finite
    functional at time ``t`` and ``"fading"`` for the w-weighted modulus.
    """

    deltas: np.ndarray
    values: np.ndarray
    kind: str = "forward"
    t: int | None = None
    witnesses: list = field(default_factory=list)
    seed: int | None = None
    samples: int | None = None
    label: str = SAMPLED

    def __post_init__(self):
        self.deltas = np.asarray(self.deltas, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.deltas.size == 0 or self.deltas[0] != 0.0:
            self.deltas = np.concatenate([[0.0], self.deltas])
            self.values = np.concatenate([[0.0], self.values])
            if self.witnesses:
                self.witnesses = [None] + list(self.witnesses)

    def __call__(self, delta: float) -> float:
        """Value at the smallest grid point ``>= delta`` (an upper reading of the table)."""
        idx = np.searchsorted(self.deltas, delta, side="left")
        idx = min(idx, len(self.deltas) - 1)
        return float(self.values[idx])

    def to_csv(self) -> str:
        col = "omega" if self.kind == "forward" else "alpha"
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["delta", col])
        for d, v in zip(self.deltas, self.values):
            writer.writerow([repr(float(d)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> ModulusTable:
        rows = list(csv.reader(io.StringIO(text)))
        kind = "forward" if rows[0][1] == "omega" else "fading"
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return cls(data[:, 0], data[:, 1], kind=kind)

    def report(self) -> dict:
        return {
            "quantity": "omega" if self.kind == "forward" else "alpha",
            "label": self.label,
            "t": self.t,
            "grid": self.deltas.tolist(),
            "values": self.values.tolist(),
            "witnesses": self.witnesses,
            "seed": self.seed,
            "samples": self.samples,
        }

    def to_json(self) -> str:
        return json.dumps(self.report(), sort_keys=True)


@dataclass
class MemoryEstimate:
    epsilon: float
    m_hat: int
    worst_deviation: float
    method: str
    witness: dict
    curve: list
    seed: int | None = None
    label: str = SAMPLED

    def report(self) -> dict:
        return {
            "quantity": "memory_horizon",
            "label": self.label,
            "epsilon": self.epsilon,
            "m_hat": self.m_hat,
            "worst_deviation": self.worst_deviation,
            "method": self.method,
            "witness": self.witness,
            "grid": list(range(len(self.curve))),
            "values": self.curve,
            "seed": self.seed,
        }


@dataclass
class CheckReport:
    check: str
    trials: int
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    def report(self) -> dict:
        return {"check": self.check, "trials": self.trials,
                "passed": self.passed, "violations": self.violations}


def _close(a, b, tol=1e-10):
    return np.abs(a - b) <= tol * (1.0 + np.abs(b))


# operations


def finite_functional(F: IOMap, x) -> float:
    u = embed_vector(x)
    return F.eval(u, u.horizon)


def check_causality(F: IOMap, R: InputBall | float, trials: int = 200,
                    horizon: int = 20, rng_seed: int = 0) -> CheckReport:
    """Perturb inputs strictly after a random time ``t`` and compare ``(F u)_t``."""
    R = R.R if isinstance(R, InputBall) else float(R)
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    L = horizon + 1
    U = rng.uniform(-R, R, size=(trials, L))
    ts = rng.integers(0, horizon, size=trials)
    V = U.copy()
    tail = rng.uniform(-R, R, size=(trials, L))
    mask = np.arange(L)[None, :] > ts[:, None]
    V[mask] = tail[mask]
    a = F.eval_at(U, ts)
    b = F.eval_at(V, ts)
    bad = ~_close(a, b)
    violations = [
        {"trial": int(i), "t": int(ts[i]), "Fu": float(a[i]), "Fv": float(b[i])}
        for i in np.flatnonzero(bad)
    ]
    return CheckReport("causality", trials, violations)


def check_time_invariance(F: IOMap, R: InputBall | float, trials: int = 200,
                          max_shift: int = 5, rng_seed: int = 0,
                          horizon: int = 20) -> CheckReport:
    """Compare ``F R^k u`` against ``F u`` delayed by ``k`` with zeros in front.

    Violations record which branch failed: ``"t<k"`` (output must vanish before
    the shifted support) or ``"t>=k"``.
    """
    R = R.R if isinstance(R, InputBall) else float(R)
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    L = horizon + 1
    U = rng.uniform(-R, R, size=(trials, L))
    ks = rng.integers(0, max_shift + 1, size=trials)
    Y = F.outputs(U)
    violations = []
    for k in np.unique(ks):
        rows = np.flatnonzero(ks == k)
        Us = np.concatenate([np.zeros((rows.size, k)), U[rows]], axis=1)
        Ys = F.outputs(Us)
        expected = np.concatenate([np.zeros((rows.size, k)), Y[rows]], axis=1)
        bad = ~_close(Ys, expected)
        for r, t in zip(*np.nonzero(bad)):
            violations.append({
                "trial": int(rows[r]), "k": int(k), "t": int(t),
                "branch": "t<k" if t < k else "t>=k",
                "shifted": float(Ys[r, t]), "expected": float(expected[r, t]),
            })
    violations.sort(key=lambda v: (v["trial"], v["t"]))
    return CheckReport("time_invariance", trials, violations)


@dataclass(frozen=True)
class SamplerSpec:
    """Input families for sup estimates.

    ``mode="extremal"`` keeps only the constant and random-sign families.
    """

    uniform: int = 64
    signs: int = 16
    constants: bool = True
    mode: str = "sampled"

    def build(self, R: float, length: int, rng_seed) -> tuple[np.ndarray, list[str]]:
        sign_rng, uni_rng = child_rngs(rng_seed, 2)
        rows, labels = [], []
        if self.constants:
            rows += [np.full(length, R), np.full(length, -R)]
            labels += ["constant(+R)", "constant(-R)"]
        if self.signs:
            S = sign_rng.choice([-R, R], size=(self.signs, length))
            rows += list(S)
            labels += [f"signs[{i}]" for i in range(self.signs)]
        if self.mode == "sampled" and self.uniform:
            rows += list(uni_rng.uniform(-R, R, size=(self.uniform, length)))
            labels += [f"uniform[{i}]" for i in range(self.uniform)]
        if not rows:
            raise InvalidArgument("sampler produced no inputs")
        return np.array(rows), labels


def memory_deviation(F: IOMap, U: np.ndarray, m: int) -> np.ndarray:
    """``|(F u)_t - (F W_{t,m} u)_t|`` for every row and every ``t``.

    Returns an array shaped like ``U``; columns ``t <= m`` are zero because
    windowing leaves ``u_{0:t}`` untouched there.
    """
    S, L = U.shape
    dev = np.zeros((S, L))
    ts = np.arange(m + 1, L)
    if ts.size == 0:
        return dev
    Y = F.outputs(U)
    W = np.zeros((ts.size, S, L))
    for i, t in enumerate(ts):
        W[i, :, t - m:t + 1] = U[:, t - m:t + 1]
    Yw = F.outputs(W.reshape(-1, L)).reshape(ts.size, S, L)
    dev[:, ts] = np.abs(Y[:, ts] - Yw[np.arange(ts.size), :, ts].T)
    return dev


_CHUNK = 32


def estimate_memory_horizon(F: IOMap, eps: float, R: InputBall | float, t_max: int = 50,
                            sampler_spec: SamplerSpec | None = None, rng_seed: int = 0,
                            m_max: int | None = None) -> MemoryEstimate:
    """Smallest ``m`` whose sampled windowing error over ``t <= t_max`` is ``<= eps``.

    With ``m_max < t_max`` a :class:`NotResolved` is raised if no ``m <= m_max``
    qualifies (``m = t_max`` always qualifies on a horizon of ``t_max``).
    """
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    R = R.R if isinstance(R, InputBall) else float(R)
    spec = sampler_spec or SamplerSpec()
    m_max = t_max if m_max is None else min(m_max, t_max)
    U, labels = spec.build(R, t_max + 1, rng_seed)
    chunks = [U[i:i + _CHUNK] for i in range(0, U.shape[0], _CHUNK)]
    curve = []
    for m in range(m_max + 1):
        devs = np.concatenate(pmap(lambda c: memory_deviation(F, c, m), chunks))
        flat = int(np.argmax(devs))
        worst = float(devs.flat[flat])
        curve.append(worst)
        if worst <= eps:
            row, t = divmod(flat, devs.shape[1])
            return MemoryEstimate(
                epsilon=eps, m_hat=m, worst_deviation=worst, method=spec.mode,
                witness=_witness(U, labels, row, t, worst), curve=curve, seed=rng_seed,
            )
    raise NotResolved(f"no m <= {m_max} reaches eps={eps}", curve=curve)


def _witness(U, labels, row, t, value):
    return {"input": labels[row], "t": int(t), "value": value, "u": U[row].tolist()}


def _check_grid(delta_grid, R):
    grid = np.asarray(delta_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) < 0):
        raise InvalidArgument("delta grid must be a nonempty ascending list")
    if grid[0] < 0 or grid[-1] > 2 * R * (1 + 1e-12):
        raise InvalidArgument("delta grid must lie within [0, 2R]")
    return grid


def _pooled_max(grid, dist, diff, pairs):
    """For each grid delta, the largest ``diff`` over pairs with ``dist <= delta``."""
    values = np.zeros(grid.size)
    witnesses = []
    slack = 1e-12 * np.maximum(1.0, grid)
    for j, d in enumerate(grid):
        ok = np.flatnonzero(dist <= d + slack[j])
        if ok.size == 0:
            witnesses.append(None)
            continue
        best = ok[np.argmax(diff[ok])]
        values[j] = diff[best]
        witnesses.append(pairs(best))
    return values, witnesses


def estimate_modulus(F: IOMap, t: int, delta_grid, R: InputBall | float,
                     samples: int = 256, rng_seed: int = 0, signs: int = 8) -> ModulusTable:
    """Sampled l-infinity modulus of continuity of ``F~_t`` on ``[-R, R]^{t+1}``.

    Pairs from all grid points are pooled, so the table is nondecreasing in
    delta and a larger ``samples`` can only raise it.
    """
    R = R.R if isinstance(R, InputBall) else float(R)
    grid = _check_grid(delta_grid, R)
    L = t + 1
    rngs = child_rngs(rng_seed, grid.size + 1)
    sigma = np.vstack([np.ones(L), -np.ones(L), (-1.0) ** np.arange(L),
                       rngs[-1].choice([-1.0, 1.0], size=(signs, L))])

    def block(j):
        d = grid[j]
        X1 = [-(d / 2) * sigma]
        X2 = [(d / 2) * sigma]
        if samples:
            draw = rngs[j].uniform(-1.0, 1.0, size=(samples, 2, L))
            x = R * draw[:, 0]
            X1.append(x)
            X2.append(np.clip(x + d * draw[:, 1], -R, R))
        return np.concatenate(X1), np.concatenate(X2)

    blocks = pmap(block, range(grid.size))
    X1 = np.concatenate([b[0] for b in blocks])
    X2 = np.concatenate([b[1] for b in blocks])
    f1 = F.outputs(X1)[:, t]
    f2 = F.outputs(X2)[:, t]
    dist = np.max(np.abs(X1 - X2), axis=1)
    diff = np.abs(f1 - f2)
    values, wit = _pooled_max(
        grid, dist, diff,
        lambda i: {"x": X1[i].tolist(), "x_prime": X2[i].tolist(), "value": float(diff[i])},
    )
    return ModulusTable(grid, values, kind="forward", t=t, witnesses=wit,
                        seed=rng_seed, samples=samples)


def inverse_modulus(table: ModulusTable, eps: float) -> float:
    """Largest grid delta whose tabulated modulus is ``<= eps`` (``0`` if none)."""
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    ok = np.flatnonzero(table.values <= eps)
    if ok.size == 0:
        return 0.0
    # the table is monotone, so admissible points form a prefix
    return float(table.deltas[ok].max())


def estimate_fading_modulus(F: IOMap, w: WeightingSequence, delta_grid, R: InputBall | float,
                            t_max: int = 30, samples: int = 256, rng_seed: int = 0,
                            signs: int = 8) -> ModulusTable:
    """Sampled w-weighted modulus ``alpha_{w,F}`` over times ``t <= t_max``.

    Random pairs perturb ``u_s`` by up to ``delta / w_{t-s}`` and clip to the
    ball; extremal pairs sit at ``-c, +c`` with ``c_s = min(R, delta / (2 w_{t-s}))``.
    """
    R = R.R if isinstance(R, InputBall) else float(R)
    grid = _check_grid(delta_grid, R)
    L = t_max + 1
    rngs = child_rngs(rng_seed, grid.size + 1)
    sign_rows = np.vstack([np.ones(L), -np.ones(L), (-1.0) ** np.arange(L),
                           rngs[-1].choice([-1.0, 1.0], size=(signs, L))])
    ext_times = sorted({t_max, t_max // 2, 0})

    # wtab[t, s] = w_{t-s} for s <= t, zero beyond t
    lag = np.arange(L)[:, None] - np.arange(L)[None, :]
    wtab = np.where(lag >= 0, w(np.maximum(lag, 0)), 0.0)
    with np.errstate(divide="ignore"):
        inv_tab = np.where(lag >= 0, 1.0 / wtab, 0.0)

    def block(j):
        d = grid[j]
        U1, U2, T = [], [], []
        for t in ext_times:
            ws = wtab[t]
            c = np.zeros(L)
            c[: t + 1] = np.minimum(R, d / (2 * ws[: t + 1]))
            U1.append(-c * sign_rows)
            U2.append(c * sign_rows)
            T.append(np.full(sign_rows.shape[0], t))
        if samples:
            ts = rngs[j].integers(0, t_max + 1, size=samples)
            draw = rngs[j].uniform(-1.0, 1.0, size=(samples, 2, L))
            u = R * draw[:, 0]
            v = np.clip(u + d * draw[:, 1] * inv_tab[ts], -R, R)
            past = np.arange(L)[None, :] <= ts[:, None]
            U1.append(np.where(past, u, 0.0))
            U2.append(np.where(past, v, 0.0))
            T.append(ts)
        return np.concatenate(U1), np.concatenate(U2), np.concatenate(T)

    blocks = pmap(block, range(grid.size))
    U1 = np.concatenate([b[0] for b in blocks])
    U2 = np.concatenate([b[1] for b in blocks])
    ts = np.concatenate([b[2] for b in blocks]).astype(int)
    W = wtab[ts]
    dist = np.max(W * np.abs(U1 - U2), axis=1)
    diff = np.abs(F.eval_at(U1, ts) - F.eval_at(U2, ts))
    values, wit = _pooled_max(
        grid, dist, diff,
        lambda i: {"t": int(ts[i]), "u": U1[i, : ts[i] + 1].tolist(),
                   "v": U2[i, : ts[i] + 1].tolist(), "value": float(diff[i])},
    )
    return ModulusTable(grid, values, kind="fading", t=None, witnesses=wit,
                        seed=rng_seed, samples=samples)


def afm_to_fading_bound(m_star_third: int, inv_mod_third: float,
                        w: WeightingSequence, eps: float) -> float:
    """Certified lower bound ``w_m * inv_mod`` on the inverse fading modulus at ``eps``.

    Inputs must be the memory horizon and inverse modulus of the same map at
    ``eps / 3``.
    """
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    if m_star_third < 0 or inv_mod_third < 0:
        raise InvalidArgument("memory horizon and inverse modulus must be nonnegative")
    return float(w(m_star_third)) * float(inv_mod_third)


def fading_to_afm_bound(alpha_table: ModulusTable, w: WeightingSequence, R: float,
                        eps: float, m_limit: int = 100_000) -> int:
    """Smallest ``m`` with ``w_m <= alpha^{-1}(eps) / R``: an upper bound on the memory horizon."""
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    R = R.R if isinstance(R, InputBall) else float(R)
    delta = inverse_modulus(alpha_table, eps)
    if delta <= 0:
        raise NotResolved("inverse fading modulus is zero; no finite bound", eps=eps)
    ws = w(np.arange(m_limit + 1))
    ok = np.flatnonzero(ws <= delta / R)
    if ok.size == 0:
        raise NotResolved(f"no m <= {m_limit} satisfies the weighting condition", eps=eps)
    return int(ok[0])
