"""Generator actions on product and pair test functions of empirical measures.

Closed forms for the voting and mutation parts of the voter generator,
the Fleming-Viot operator, and a brute-force generator that enumerates
every single-site update as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernel import Kernel
from .measures import FiniteMeasure
from .typespace import MutationMeasure

__all__ = [
    "ProductTestFunction",
    "PairTestFunction",
    "phi_eval",
    "phi_of_config",
    "delta_A",
    "c_phi",
    "L_VM_phi",
    "L_mu_phi",
    "L_VM_phi_k2",
    "A_mu",
    "F_f",
    "L_VM_Ff",
    "L_mu_Ff",
    "L_brute",
    "L_FV_phi",
]

MAX_ORDER = 16


@dataclass(frozen=True)
class ProductTestFunction:
    """phi(lam) = prod_i <f_i, lam>; rows of ``fs`` are the f_i."""

    fs: np.ndarray

    def __post_init__(self):
        fs = np.atleast_2d(np.array(self.fs, dtype=float))
        if fs.shape[0] < 1:
            raise ValueError("need at least one factor")
        if fs.shape[0] > MAX_ORDER:
            raise ValueError(f"order k is limited to {MAX_ORDER}")
        if not np.all(np.isfinite(fs)):
            raise ValueError("test functions must be finite")
        fs.setflags(write=False)
        object.__setattr__(self, "fs", fs)

    @property
    def k(self) -> int:
        return self.fs.shape[0]


@dataclass(frozen=True)
class PairTestFunction:
    f: np.ndarray

    def __post_init__(self):
        f = np.array(self.f, dtype=float)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ValueError("pair test function must be a square matrix")
        if not np.all(np.isfinite(f)):
            raise ValueError("pair test function must be finite")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)


def _weights(lam) -> np.ndarray:
    return lam.weights if isinstance(lam, FiniteMeasure) else np.asarray(lam, dtype=float)


def phi_eval(phi: ProductTestFunction, lam) -> float:
    w = _weights(lam)
    if w.shape[0] != phi.fs.shape[1]:
        raise ValueError("test function and measure have different type counts")
    return float(np.prod(phi.fs @ w))


def _empirical_weights(xi, pi, m) -> np.ndarray:
    return np.bincount(np.asarray(xi), weights=pi, minlength=m)


def phi_of_config(phi: ProductTestFunction, pi) -> Callable:
    """phi composed with the empirical measure, as a configuration functional."""
    m = phi.fs.shape[1]
    pi = np.asarray(pi, dtype=float)
    return lambda xi: float(np.prod(phi.fs @ _empirical_weights(xi, pi, m)))


def _subsets(k: int):
    for mask in range(1 << k):
        members = [i for i in range(k) if mask >> i & 1]
        yield members, [i for i in range(k) if not mask >> i & 1]


def delta_A(phi: ProductTestFunction, members, sigma, tau):
    """prod_{i in A} (f_i(sigma) - f_i(tau)), vectorized over sigma/tau."""
    out = np.ones(np.broadcast(np.asarray(sigma), np.asarray(tau)).shape)
    for i in members:
        out = out * (phi.fs[i][sigma] - phi.fs[i][tau])
    return out


def c_phi(phi: ProductTestFunction) -> float:
    """Constant C with |L_VM phi o m(xi)| <= C sum pi(x)^2 q(x,y) 1{xi(x) != xi(y)}.

    Counts the subsets |A| >= 2 of {1..k}, each bounded by 2^|A| prod(1 v |f_i|).
    """
    k = phi.k
    norms = np.maximum(1.0, np.abs(phi.fs).max(axis=1))
    count = 3**k - 1 - 2 * k
    return float(max(2**k, count) * np.prod(norms))


def L_VM_phi(kernel: Kernel, phi: ProductTestFunction, xi) -> float:
    xi = np.asarray(xi)
    pi = kernel.pi
    m_w = _empirical_weights(xi, pi, phi.fs.shape[1])
    means = phi.fs @ m_w
    rows, cols = np.nonzero(kernel.q)
    qv = kernel.q[rows, cols]
    total = 0.0
    for members, rest in _subsets(phi.k):
        if len(members) < 2:
            continue
        d = delta_A(phi, members, xi[cols], xi[rows])
        inner = np.sum(pi[rows] ** len(members) * qv * d)
        total += float(np.prod(means[rest])) * inner
    return total


def L_VM_phi_k2(kernel: Kernel, phi: ProductTestFunction, xi) -> float:
    """The k = 2 display: sum pi(x)^2 q(x,y) Delta_{1,2}(xi(y), xi(x))."""
    if phi.k != 2:
        raise ValueError("needs an order-2 test function")
    xi = np.asarray(xi)
    rows, cols = np.nonzero(kernel.q)
    d = delta_A(phi, [0, 1], xi[cols], xi[rows])
    return float(np.sum(kernel.pi[rows] ** 2 * kernel.q[rows, cols] * d))


def L_mu_phi(mu: MutationMeasure, pi, phi: ProductTestFunction, xi) -> float:
    xi = np.asarray(xi)
    pi = np.asarray(pi, dtype=float)
    means = phi.fs @ _empirical_weights(xi, pi, phi.fs.shape[1])
    atoms = np.flatnonzero(mu.weights > 0)
    if atoms.size == 0:
        return 0.0
    total = 0.0
    for members, rest in _subsets(phi.k):
        if not members:
            continue
        # d[x, a] = Delta_A(sigma_a, xi(x))
        d = delta_A(phi, members, atoms[None, :], xi[:, None])
        inner = np.sum(pi[:, None] ** len(members) * d * mu.weights[atoms][None, :])
        total += float(np.prod(means[rest])) * inner
    return total


def A_mu(mu: MutationMeasure, f) -> np.ndarray:
    """tau -> <f, mu> - mu(1) f(tau)."""
    f = np.asarray(f, dtype=float)
    return np.dot(f, mu.weights) - mu.total * f


def F_f(pair: PairTestFunction, pi, xi) -> float:
    xi = np.asarray(xi)
    pi = np.asarray(pi, dtype=float)
    return float(pi @ pair.f[np.ix_(xi, xi)] @ pi)


def L_VM_Ff(kernel: Kernel, pair: PairTestFunction, xi) -> float:
    xi = np.asarray(xi)
    f = pair.f
    rows, cols = np.nonzero(kernel.q)
    w = kernel.pi[rows] ** 2 * kernel.q[rows, cols]
    sx, sy = xi[rows], xi[cols]
    first = np.sum(w * (f[sy, sy] - f[sx, sx]))
    second = np.sum(w * (f[sy, sx] + f[sx, sy] - 2.0 * f[sx, sx]))
    return float(first - second)


def L_mu_Ff(mu: MutationMeasure, pi, pair: PairTestFunction, xi) -> float:
    xi = np.asarray(xi)
    pi = np.asarray(pi, dtype=float)
    f = pair.f
    atoms = np.flatnonzero(mu.weights > 0)
    if atoms.size == 0:
        return 0.0
    ma = mu.weights[atoms]
    p2 = pi**2
    # first sum: pi(x)^2 int [f(s,s) - f(xi_x, xi_x)] dmu(s)
    diag_atoms = float(np.dot(np.diag(f)[atoms], ma))
    first = np.sum(p2 * (diag_atoms - mu.total * f[xi, xi]))
    # second sum: pi(x)^2 int [f(xi_x, s) + f(s, xi_x) - 2 f(xi_x, xi_x)] dmu(s)
    cross = f[np.ix_(xi, atoms)] @ ma + f[np.ix_(atoms, xi)].T @ ma
    second = np.sum(p2 * (cross - 2.0 * mu.total * f[xi, xi]))
    # third sum: pi(x) pi(y) int [f(xi_x, s) + f(s, xi_y) - 2 f(xi_x, xi_y)] dmu(s)
    row_part = f[np.ix_(xi, atoms)] @ ma  # depends on x
    col_part = f[np.ix_(atoms, xi)].T @ ma  # depends on y
    third = (
        np.dot(pi, row_part)
        + np.dot(pi, col_part)
        - 2.0 * mu.total * float(pi @ f[np.ix_(xi, xi)] @ pi)
    )
    return float(first - second + third)


def L_brute(kernel: Kernel, mu: MutationMeasure | None, F: Callable, xi,
            return_scale: bool = False):
    """Voter generator by enumeration of every single-site update.

    With ``return_scale`` also returns sum rate * (|F(next)| + |F(xi)|),
    the magnitude of the values being differenced; rounding in any
    evaluation of the generator is relative to it.
    """
    xi = np.array(xi)
    base = F(xi)
    total = 0.0
    scale = 0.0
    rows, cols = np.nonzero(kernel.q)
    for x, y in zip(rows, cols):
        nxt = xi.copy()
        nxt[x] = xi[y]
        val = F(nxt)
        total += kernel.q[x, y] * (val - base)
        scale += kernel.q[x, y] * (abs(val) + abs(base))
    if mu is not None:
        for s in np.flatnonzero(mu.weights > 0):
            for x in range(xi.size):
                nxt = xi.copy()
                nxt[x] = s
                val = F(nxt)
                total += mu.weights[s] * (val - base)
                scale += mu.weights[s] * (abs(val) + abs(base))
    if return_scale:
        return total, scale
    return total


def L_FV_phi(mu: MutationMeasure | None, phi: ProductTestFunction, lam) -> float:
    """Fleming-Viot operator on a product test function."""
    w = _weights(lam)
    means = phi.fs @ w
    k = phi.k
    total = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            fi, fj = phi.fs[i], phi.fs[j]
            pair = (fi[:, None] - fi[None, :]) * (fj[:, None] - fj[None, :])
            others = np.prod(np.delete(means, [i, j]))
            total += 0.5 * float(w @ pair @ w) * others
    if mu is not None and mu.total > 0:
        for i in range(k):
            others = np.prod(np.delete(means, [i]))
            total += float(np.dot(A_mu(mu, phi.fs[i]), w)) * others
    return total
