"""Pure numpy recurrence kernels (fallback for :mod:`afm._kernels`).

``simulate(kind, A, B, C, X0, U, psi_kind, psi_gain)`` integrates a batch of
trajectories. ``X0`` has shape ``(batch, n)``, ``U`` has shape ``(batch, T)``
and the result has shape ``(batch, T + 1, n)`` with ``result[:, 0] == X0``.

kind 0 (linear):  x' = A x + B u
kind 1 (tanh):    x' = tanh(A x + B u)
kind 2 (Lur'e):   x' = A x + B psi(u - C x)

psi kinds: 0 zero, 1 gain*z, 2 gain*tanh(z), 3 gain*atan(z).
"""
import numpy as np

LINEAR, TANH, LURE = 0, 1, 2


def _psi(kind, gain, z):
    if kind == 0:
        return np.zeros_like(z)
    if kind == 1:
        return gain * z
    if kind == 2:
        return gain * np.tanh(z)
    return gain * np.arctan(z)


def simulate(kind, A, B, C, X0, U, psi_kind=0, psi_gain=0.0):
    nb, T = U.shape
    n = A.shape[0]
    X = np.empty((nb, T + 1, n))
    X[:, 0] = X0
    At = A.T
    for t in range(T):
        x = X[:, t]
        if kind == LURE:
            v = _psi(psi_kind, psi_gain, U[:, t] - x @ C)
        else:
            v = U[:, t]
        nxt = x @ At + v[:, None] * B[None, :]
        if kind == TANH:
            nxt = np.tanh(nxt)
        X[:, t + 1] = nxt
    return X
