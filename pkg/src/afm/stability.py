"""Incremental-stability certificates.

A :class:`DemidovichCertificate` ``(P, mu)`` asserts
``J(x,u)^T P J(x,u) - mu P <= 0`` for the state Jacobian ``J``. Everything
here checks that inequality on finite grids and samples, so a pass is a
*sampled certificate*, not a proof. For Lur'e systems the matrix ``P`` comes
from the bounded-real Riccati equation of a frequency-scaled linear block.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from afm import kernels
from afm.errors import (
    AssumptionFailed,
    CrossCheckFailed,
    InvalidArgument,
    InvalidCertificate,
    MissingJacobian,
    NoConvergence,
    NormTooLarge,
    NotPositiveDefinite,
    UnstableA,
)
from afm.statespace import BetaFunction, KernelSpec, StateSpaceSystem

__all__ = [
    "DemidovichCertificate",
    "DemidovichResult",
    "GridSpec",
    "LyapunovReport",
    "Nonlinearity",
    "LureSystem",
    "DTBRSolution",
    "verify_demidovich",
    "lyapunov_decrease_check",
    "contraction_certificate",
    "schur_check",
    "controllability_check",
    "observability_check",
    "hinf_norm",
    "hinf_profile",
    "select_r0",
    "dtbr_solve",
    "lure_certify",
]

SAMPLED_CERT = "sampled certificate"


def _check_pd(P, tol=1e-12):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[0] != P.shape[1] or not np.allclose(P, P.T, atol=1e-12 * max(1.0, np.abs(P).max())):
        raise NotPositiveDefinite("P must be a symmetric square matrix")
    P = (P + P.T) / 2
    ev = np.linalg.eigvalsh(P)
    if ev[0] <= tol * max(1.0, ev[-1]):
        raise NotPositiveDefinite(f"P is not positive definite (min eigenvalue {ev[0]:.3g})")
    return P, ev


@dataclass
class DemidovichCertificate:
    P: np.ndarray
    mu: float
    kappa: float = field(init=False)
    margin: float | None = None
    provenance: str = "user"
    label: str = SAMPLED_CERT
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise InvalidCertificate(f"mu must lie in (0,1), got {self.mu}")
        self.P, ev = _check_pd(self.P)
        self.kappa = float(ev[-1] / ev[0])

    @property
    def n(self):
        return self.P.shape[0]

    def beta(self) -> BetaFunction:
        """``sqrt(kappa) * C * mu**(t/2)``."""
        return BetaFunction.exponential(math.sqrt(self.kappa), math.sqrt(self.mu))

    def to_json(self) -> dict:
        return {
            "P": self.P.reshape(-1).tolist(),
            "n": self.n,
            "mu": self.mu,
            "kappa": self.kappa,
            "margin": self.margin,
            "provenance": self.provenance,
            "label": self.label,
            "details": self.details,
        }

    @classmethod
    def from_json(cls, data) -> DemidovichCertificate:
        if isinstance(data, str):
            data = json.loads(data)
        flat = np.asarray(data["P"], dtype=float)
        n = int(data.get("n", round(math.sqrt(flat.size))))
        cert = cls(flat.reshape(n, n), float(data["mu"]), margin=data.get("margin"),
                   provenance=data.get("provenance", "file"), details=data.get("details", {}))
        return cert


@dataclass(frozen=True)
class GridSpec:
    """Box grid over states and inputs; falls back to seeded sampling when the
    full tensor grid would exceed ``max_points``."""

    x_radius: float = 1.0
    x_points: int = 11
    u_bound: float = 1.0
    u_points: int = 11
    max_points: int = 20_000
    seed: int = 0

    def points(self, n: int):
        xs = np.linspace(-self.x_radius, self.x_radius, self.x_points)
        us = np.linspace(-self.u_bound, self.u_bound, self.u_points)
        total = self.x_points ** n * self.u_points
        if total <= self.max_points:
            mesh = np.meshgrid(*([xs] * n), us, indexing="ij")
            flat = np.stack([m.reshape(-1) for m in mesh], axis=1)
            return flat[:, :n], flat[:, n]
        rng = np.random.default_rng(self.seed)
        k = self.max_points
        X = rng.uniform(-self.x_radius, self.x_radius, size=(k, n))
        U = rng.uniform(-self.u_bound, self.u_bound, size=k)
        corners = rng.choice([-self.x_radius, self.x_radius], size=(min(k, 2 ** min(n, 12)), n))
        X[: len(corners)] = corners
        return X, U


@dataclass
class DemidovichResult:
    passed: bool
    margin: float
    worst_point: dict
    points: int
    certificate: DemidovichCertificate | None


def verify_demidovich(sys: StateSpaceSystem, cert, grid: GridSpec | None = None,
                      tol: float = 1e-10) -> DemidovichResult:
    """Largest eigenvalue of ``J^T P J - mu P`` over the grid.

    ``cert`` is a certificate or a ``(P, mu)`` pair. ``margin`` is the worst
    eigenvalue found; the check passes when ``margin <= tol * ||P||``.
    """
    if sys.jacobian_x is None:
        raise MissingJacobian(f"{sys.name} has no state Jacobian")
    if not isinstance(cert, DemidovichCertificate):
        P, mu = cert
        cert = DemidovichCertificate(np.atleast_2d(np.asarray(P, dtype=float)), float(mu))
    grid = grid or GridSpec()
    X, U = grid.points(sys.n)
    P, mu = cert.P, cert.mu
    worst, where = -math.inf, None
    for x, u in zip(X, U):
        J = np.atleast_2d(sys.jacobian_x(x, u))
        M = J.T @ P @ J - mu * P
        lam = float(np.linalg.eigvalsh((M + M.T) / 2)[-1])
        if lam > worst:
            worst, where = lam, {"x": x.tolist(), "u": float(u)}
    passed = worst <= tol * float(np.linalg.norm(P, 2))
    out = None
    if passed:
        out = DemidovichCertificate(P, mu, margin=worst, provenance=cert.provenance,
                                    details=dict(cert.details))
    return DemidovichResult(passed, worst, where, len(U), out)


@dataclass
class LyapunovReport:
    samples: int
    violations: list
    max_ratio: float

    @property
    def passed(self):
        return not self.violations


def lyapunov_decrease_check(sys: StateSpaceSystem, cert: DemidovichCertificate,
                            samples: int = 10_000, rng_seed: int = 0,
                            x_radius: float = 1.0, u_bound: float = 1.0,
                            steps: int = 0) -> LyapunovReport:
    """Check ``V(f(xi,u), f(xi',u)) <= mu V(xi, xi')`` with ``V(a,b) = (a-b)^T P (a-b)``.

    With ``steps > 0`` the iterated form ``V(phi_t, phi'_t) <= mu**t V(xi, xi')``
    is checked as well along random input sequences of that length.
    """
    rng = np.random.default_rng(rng_seed)
    n = sys.n
    P, mu = cert.P, cert.mu

    def V(a, b):
        d = a - b
        return np.einsum("...i,ij,...j->...", d, P, d)

    xi = rng.uniform(-x_radius, x_radius, size=(samples, n))
    xi2 = rng.uniform(-x_radius, x_radius, size=(samples, n))
    u = rng.uniform(-u_bound, u_bound, size=samples)
    before = V(xi, xi2)
    after = V(sys.step(xi, u), sys.step(xi2, u))
    slack = 1e-9 * before + 1e-15
    violations = [
        {"xi": xi[i].tolist(), "xi_prime": xi2[i].tolist(), "u": float(u[i]),
         "lhs": float(after[i]), "rhs": float(mu * before[i])}
        for i in np.flatnonzero(after > mu * before + slack)
    ]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(before > 0, after / before, 0.0)
    max_ratio = float(np.max(ratios)) if samples else 0.0
    if steps > 0:
        k = min(samples, 500)
        Useq = rng.uniform(-u_bound, u_bound, size=(k, steps))
        a, b = xi[:k].copy(), xi2[:k].copy()
        v0 = before[:k]
        for t in range(1, steps + 1):
            a, b = sys.step(a, Useq[:, t - 1]), sys.step(b, Useq[:, t - 1])
            vt = V(a, b)
            for i in np.flatnonzero(vt > mu ** t * v0 * (1 + 1e-9) + 1e-15):
                violations.append({"iterated": True, "t": t, "trial": int(i),
                                   "lhs": float(vt[i]), "rhs": float(mu ** t * v0[i])})
    return LyapunovReport(samples, violations, max_ratio)


def contraction_certificate(lam: float, n: int) -> DemidovichCertificate:
    """``P = I``, ``mu = lam**2`` for a map contracting at rate ``lam``."""
    if not 0 < lam < 1:
        raise InvalidArgument(f"contraction rate must lie in (0,1), got {lam}")
    return DemidovichCertificate(np.eye(n), lam ** 2, provenance="contraction")


# linear-systems toolkit


def schur_check(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rho = float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0
    return rho, rho < 1.0


def _rank(M, rel=1e-10):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel * s[0]))


def controllability_check(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    blocks, cur = [], B
    for _ in range(n):
        blocks.append(cur)
        cur = A @ cur
    r = _rank(np.hstack(blocks))
    return r, r == n


def observability_check(A, C):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    C = np.asarray(C, dtype=float).reshape(-1, n)
    return controllability_check(A.T, C.T)


def _transfer_fn(A, B, C):
    """Vectorized ``z -> C (zI - A)^{-1} B``, using the modal form when ``A`` is
    well diagonalizable."""
    n = A.shape[0]
    lam, V = np.linalg.eig(A)
    if np.linalg.cond(V) < 1e8:
        weights = (C @ V) * np.linalg.solve(V, B.astype(complex))
        return lambda z: (1.0 / (z[:, None] - lam[None, :])) @ weights
    Ac, Bc, Cc = A.astype(complex), B.astype(complex), C.astype(complex)

    def fn(z):
        M = z[:, None, None] * np.eye(n)[None] - Ac[None]
        rhs = np.broadcast_to(Bc[None, :, None], (z.size, n, 1))
        return np.linalg.solve(M, rhs)[:, :, 0] @ Cc

    return fn


def _abcs(A, B, C):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    return A, np.asarray(B, dtype=float).reshape(n), np.asarray(C, dtype=float).reshape(n)


def hinf_profile(A, B, C, r: float = 1.0, n_grid: int = 4096, refine: bool = True) -> float:
    """``sup_theta |G(r e^{i theta})|`` by a circle grid plus golden-section refinement."""
    A, B, C = _abcs(A, B, C)
    if not np.any(C) or not np.any(B):
        return 0.0

    G = _transfer_fn(A, B, C)

    def mag(theta):
        return np.abs(G(r * np.exp(1j * np.atleast_1d(theta))))

    # real coefficients: |G(conj z)| = |G(z)|, so [0, pi] suffices
    theta = np.linspace(0.0, math.pi, n_grid)
    vals = mag(theta)
    best = float(vals.max())
    if not refine:
        return best
    h = theta[1] - theta[0]
    peaks = [i for i in np.argsort(vals)[::-1][:4]]
    invphi = (math.sqrt(5) - 1) / 2
    for i in peaks:
        lo, hi = max(theta[i] - h, 0.0), min(theta[i] + h, math.pi)
        a, b = hi - invphi * (hi - lo), lo + invphi * (hi - lo)
        fa, fb = mag(a)[0], mag(b)[0]
        for _ in range(70):
            if fa > fb:
                hi, b, fb = b, a, fa
                a = hi - invphi * (hi - lo)
                fa = mag(a)[0]
            else:
                lo, a, fa = a, b, fb
                b = lo + invphi * (hi - lo)
                fb = mag(b)[0]
        best = max(best, float(fa), float(fb))
    return best


def hinf_norm(A, B, C, tol: float = 1e-9, n_grid: int = 4096) -> float:
    """H-infinity norm of ``C (zI - A)^{-1} B`` on the unit circle."""
    A, B, C = _abcs(A, B, C)
    rho, ok = schur_check(A)
    if not ok:
        raise UnstableA(f"spectral radius {rho:.6g} >= 1")
    return hinf_profile(A, B, C, 1.0, n_grid=n_grid)


# bounded-real lemma


@dataclass
class DTBRSolution:
    r0: float
    P: np.ndarray
    L: np.ndarray
    W: np.ndarray
    residuals: tuple
    iterations: int
    rho: float
    hinf: float
    g_r0: float
    positive_definite: bool
    trace: list = field(default_factory=list)

    @property
    def mu(self):
        return self.r0 ** 2

    def to_json(self):
        return {"r0": self.r0, "mu": self.mu, "P": self.P.tolist(), "L": self.L.tolist(),
                "W": self.W.tolist(), "residuals": list(self.residuals),
                "iterations": self.iterations, "rho": self.rho, "hinf": self.hinf,
                "g_r0": self.g_r0, "positive_definite": self.positive_definite}


def select_r0(A, B, C, gamma: float, strategy: str = "tight", r0: float | None = None,
              eta: float = 1e-6, slack: float = 0.01, iters: int = 60):
    """Pick ``r0`` in ``(rho(A), 1)`` with ``g(r0) < (1 - slack) / gamma``.

    ``g`` is nonincreasing on ``(rho(A), inf)`` (maximum modulus outside the
    spectrum), so ``"tight"`` bisects for the smallest admissible ``r0``;
    that gives the smallest contraction factor ``mu = r0**2``. ``"fixed"``
    validates a caller-supplied ``r0``.
    """
    A, B, C = _abcs(A, B, C)
    rho, ok = schur_check(A)
    if not ok:
        raise UnstableA(f"spectral radius {rho:.6g} >= 1")
    g1 = hinf_profile(A, B, C, 1.0)
    if gamma * g1 >= 1:
        raise NormTooLarge(f"gamma * ||G|| = {gamma * g1:.6g} >= 1")
    if gamma == 0:
        bound = math.inf
    else:
        bound = (1 - slack) / gamma
        if g1 >= bound:
            bound = (g1 + 1 / gamma) / 2
    if strategy == "fixed":
        if r0 is None or not rho < r0 < 1:
            raise InvalidArgument(f"fixed r0 must lie in ({rho:.6g}, 1)")
        if hinf_profile(A, B, C, r0) >= (1 / gamma if gamma else math.inf):
            raise NormTooLarge(f"g(r0) >= 1/gamma at r0={r0}")
        return r0, rho, g1
    if strategy != "tight":
        raise InvalidArgument(f"unknown r0 strategy {strategy!r}")
    if gamma == 0:
        return (rho + 1) / 2, rho, g1
    lo, hi = rho + eta, 1.0
    if lo < hi and hinf_profile(A, B, C, lo) < bound:
        return lo, rho, g1
    for _ in range(iters):
        mid = (lo + hi) / 2
        if hinf_profile(A, B, C, mid) < bound:
            hi = mid
        else:
            lo = mid
    if hi >= 1.0:
        raise NoConvergence("no r0 < 1 satisfies the scaled gain condition")
    return hi, rho, g1


def dtbr_solve(A, B, C, gamma: float, r0_search: dict | None = None, tol: float = 1e-14,
               max_iter: int = 200_000) -> DTBRSolution:
    """Bounded-real matrices for the scaled block ``(A/r0, B, gamma C / r0)``.

    ``P`` is the minimal solution of the bounded-real Riccati equation
    ``P = At'P At + Ct'Ct + At'P B (1 - B'P B)^{-1} B'P At``, reached by the
    monotone fixed-point iteration from ``P = 0`` and polished by Newton
    (Hewer) steps. ``W = sqrt(1 - B'P B)`` and ``L = -B'P A / (r0 W)``.

    Residuals are returned in the unscaled form
    ``A'PA + gamma^2 C'C + r0^2 L'L - r0^2 P``, ``B'PB + W'W - 1`` and the
    cross term ``A'PB + r0 L'W``.
    """
    A, Bv, Cv = _abcs(A, B, C)
    n = A.shape[0]
    if gamma < 0:
        raise InvalidArgument("gamma must be nonnegative")
    opts = dict(r0_search or {})
    r0, rho, g1 = select_r0(A, Bv, Cv, gamma, **opts)
    At = A / r0
    Bc = Bv.reshape(n, 1)
    Ct = (gamma / r0) * Cv.reshape(1, n)
    Q = Ct.T @ Ct

    def riccati(P):
        s = 1.0 - (Bc.T @ P @ Bc).item()
        if s <= 0:
            raise NoConvergence("B'PB reached 1: scaled gain is not below one", trace)
        G = At.T @ P @ Bc
        return At.T @ P @ At + Q + (G @ G.T) / s

    trace = []
    P = np.zeros((n, n))
    it = 0
    for it in range(1, max_iter + 1):
        Pn = riccati(P)
        step = float(np.max(np.abs(Pn - P)))
        P = (Pn + Pn.T) / 2
        if it % 1000 == 0 or step <= tol * max(1.0, float(np.max(np.abs(P)))):
            trace.append((it, step))
        if step <= tol * max(1.0, float(np.max(np.abs(P)))):
            break
    else:
        raise NoConvergence(f"Riccati iteration did not converge in {max_iter} steps", trace)

    def resid(P):
        return float(np.max(np.abs(riccati(P) - P)))

    for _ in range(3):
        s = 1.0 - (Bc.T @ P @ Bc).item()
        K = -(Bc.T @ P @ At) / s
        Ac = At - Bc @ K
        if schur_check(Ac)[0] >= 1:
            break
        Pn = solve_discrete_lyapunov(Ac.T, Q - K.T @ K)
        Pn = (Pn + Pn.T) / 2
        if resid(Pn) < resid(P):
            P = Pn
        else:
            break

    s = 1.0 - (Bc.T @ P @ Bc).item()
    if s <= 0:
        raise NoConvergence("B'PB >= 1 at the fixed point", trace)
    W = np.array([[math.sqrt(s)]])
    L = -(Bc.T @ P @ A) / (r0 * W[0, 0])
    Cm = Cv.reshape(1, n)
    res1 = A.T @ P @ A + gamma ** 2 * Cm.T @ Cm + r0 ** 2 * L.T @ L - r0 ** 2 * P
    res2 = Bc.T @ P @ Bc + W.T @ W - 1.0
    res3 = A.T @ P @ Bc + r0 * L.T @ W
    residuals = tuple(float(np.max(np.abs(r))) for r in (res1, res2, res3))
    ev = np.linalg.eigvalsh(P)
    pd = bool(ev[0] > 1e-12 * max(1.0, ev[-1]))
    return DTBRSolution(r0=r0, P=P, L=L, W=W, residuals=residuals, iterations=it, rho=rho,
                        hinf=g1, g_r0=hinf_profile(A, Bv, Cv, r0), positive_definite=pd,
                        trace=trace)


# Lur'e systems


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar feedback nonlinearity ``psi`` with ``psi(0) = 0``.

    kinds: ``zero``, ``linear`` (``gain * z``), ``tanh`` (``gain * tanh z``),
    ``atan`` (``gain * atan z``).
    """

    kind: str = "tanh"
    gain: float = 1.0

    def __post_init__(self):
        if self.kind not in kernels.PSI_CODES:
            raise InvalidArgument(f"unknown nonlinearity {self.kind!r}")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(z)
        if self.kind == "linear":
            return self.gain * z
        if self.kind == "tanh":
            return self.gain * np.tanh(z)
        return self.gain * np.arctan(z)

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(z)
        if self.kind == "linear":
            return np.full_like(z, self.gain)
        if self.kind == "tanh":
            return self.gain * (1.0 - np.tanh(z) ** 2)
        return self.gain / (1.0 + z ** 2)

    def slope_bounds(self):
        if self.kind == "zero":
            return 0.0, 0.0
        if self.kind == "linear":
            return self.gain, self.gain
        return (min(0.0, self.gain), max(0.0, self.gain))

    def to_json(self):
        return {"kind": self.kind, "gain": self.gain}


@dataclass
class LureSystem:
    """``x' = A x + B psi(u - C x)``, ``y = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    psi: Nonlinearity
    gamma: float

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise InvalidArgument("A must be square")
        self.B = np.asarray(self.B, dtype=float).reshape(n)
        self.C = np.asarray(self.C, dtype=float).reshape(n)
        if isinstance(self.psi, dict):
            self.psi = Nonlinearity(**self.psi)

    @property
    def n(self):
        return self.A.shape[0]

    def to_system(self, xi=None) -> StateSpaceSystem:
        A, B, C, psi = self.A, self.B, self.C, self.psi
        a, b = psi.slope_bounds()
        BC = np.outer(B, C)

        def jac(x, u):
            return A - float(psi.derivative(u - C @ np.asarray(x, dtype=float))) * BC

        return StateSpaceSystem(
            n=self.n,
            f=lambda X, u: X @ A.T + psi(np.asarray(u) - X @ C)[..., None] * B,
            g=lambda X: X @ C,
            xi=np.zeros(self.n) if xi is None else xi,
            jacobian_x=jac,
            L_f=float(np.linalg.norm(B)) * max(abs(a), abs(b)),
            L_g=float(np.linalg.norm(C)),
            name="lure",
            kernel=KernelSpec(kernels.LURE, A, B, C, kernels.PSI_CODES[psi.kind], psi.gain),
            spec=self.to_json(),
        )

    def to_json(self):
        return {"name": "lure", "A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist(),
                "psi": self.psi.to_json(), "gamma": self.gamma}


def _check_slope(psi: Nonlinearity, samples=2001, span=10.0):
    a, b = psi.slope_bounds()
    z = np.linspace(-span, span, samples)
    d = psi.derivative(z)
    if abs(float(psi(0.0))) > 0:
        raise AssumptionFailed("slope", "psi(0) != 0")
    if np.any(d < a - 1e-12) or np.any(d > b + 1e-12):
        raise AssumptionFailed("slope", f"sampled derivative leaves [{a}, {b}]")
    # the analytic derivative must match finite differences of psi
    h = 1e-6
    fd = (psi(z + h) - psi(z - h)) / (2 * h)
    if np.max(np.abs(fd - d)) > 1e-5 * max(1.0, abs(psi.gain)):
        raise AssumptionFailed("slope", "derivative does not match psi")
    return a, b


def lure_certify(lure: LureSystem, grid: GridSpec | None = None,
                 r0_search: dict | None = None) -> DemidovichCertificate:
    """Certificate for a Lur'e system from the bounded-real lemma.

    Checks, in order: slope bounds, Schur stability, controllability,
    observability, ``gamma >= max(|a|, |b|)`` and ``gamma ||G|| < 1``. Then
    sets ``mu = r0**2`` and cross-checks the matrix inequality on the grid
    and at the slope extremes.
    """
    A, B, C, gamma = lure.A, lure.B, lure.C, float(lure.gamma)
    a, b = _check_slope(lure.psi)
    rho, ok = schur_check(A)
    if not ok:
        raise AssumptionFailed("schur", f"spectral radius {rho:.6g} >= 1")
    rk, ok = controllability_check(A, B)
    if not ok:
        raise AssumptionFailed("controllability", f"rank {rk} < {lure.n}")
    rk, ok = observability_check(A, C)
    if not ok:
        raise AssumptionFailed("observability", f"rank {rk} < {lure.n}")
    if not gamma > 0:
        raise AssumptionFailed("hinf_gain", "gamma must be positive")
    if gamma < max(abs(a), abs(b)):
        raise AssumptionFailed("gamma_covers_slope",
                               f"gamma={gamma} < max slope {max(abs(a), abs(b))}")
    g1 = hinf_norm(A, B, C)
    if gamma * g1 >= 1:
        raise AssumptionFailed("hinf_gain", f"gamma * ||G|| = {gamma * g1:.6g} >= 1")
    sol = dtbr_solve(A, B, C, gamma, r0_search=r0_search)
    if not sol.positive_definite:
        raise CrossCheckFailed("bounded-real solution P is not positive definite")
    mu = sol.mu
    if not mu > rho ** 2:
        raise CrossCheckFailed(f"mu={mu} is not above rho(A)^2={rho ** 2}")
    cert = DemidovichCertificate(sol.P, mu, provenance="lure/bounded-real",
                                 details={"dtbr": sol.to_json()})
    BC = np.outer(B, C)
    worst_theta = -math.inf
    for theta in np.linspace(a, b, 101):
        J = A - theta * BC
        worst_theta = max(worst_theta, float(np.linalg.eigvalsh(J.T @ cert.P @ J - mu * cert.P)[-1]))
    sys = lure.to_system()
    grid = grid or GridSpec(x_radius=3.0, x_points=9 if lure.n <= 2 else 5, u_bound=3.0, u_points=9)
    res = verify_demidovich(sys, cert, grid)
    tol = 1e-9 * float(np.linalg.norm(cert.P, 2))
    if not res.passed or worst_theta > tol:
        raise CrossCheckFailed(
            f"grid margin {res.margin:.3g}, slope-extreme margin {worst_theta:.3g} at {res.worst_point}")
    cert.margin = max(res.margin, worst_theta)
    cert.details["grid_points"] = res.points
    return cert
