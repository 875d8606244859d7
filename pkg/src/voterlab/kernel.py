"""Voting kernels on finite site sets and their mixing diagnostics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Kernel",
    "MixingReport",
    "VVLaw",
    "AliasTable",
    "stationary",
    "semigroup",
    "d_E",
    "t_mix",
    "spectral_gap",
    "is_reversible",
    "vv_law",
    "vv_sample",
    "build_graph_family",
    "random_kernel",
    "mixing_report",
]

_ROW_TOL = 1e-12
_DIRECT_MAX = 2000
_TAIL_TOL = 1e-12
_TMIX_TOL = 1e-6
THRESHOLD = 1.0 / (2.0 * math.e)


def _is_irreducible(q: np.ndarray) -> bool:
    n_comp, _ = connected_components(csr_matrix(q > 0), directed=True, connection="strong")
    return n_comp == 1


def stationary(q) -> np.ndarray:
    """Stationary distribution of an irreducible zero-trace kernel."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if not _is_irreducible(q):
        raise ValueError("kernel not irreducible")
    if n == 1:
        return np.ones(1)
    if n <= _DIRECT_MAX:
        a = q.T - np.eye(n)
        a[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = np.linalg.solve(a, b)
        # one step of iterative refinement
        r = b - a @ pi
        pi += np.linalg.solve(a, r)
    else:
        lazy = 0.5 * (q + np.eye(n))
        pi = np.full(n, 1.0 / n)
        for _ in range(200_000):
            nxt = pi @ lazy
            if np.abs(nxt - pi).sum() < 1e-14:
                pi = nxt
                break
            pi = nxt
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class Kernel:
    """Irreducible row-stochastic kernel with zero diagonal and its stationary law."""

    q: np.ndarray = field(repr=False)
    pi: np.ndarray = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise ValueError("kernel must be a square matrix")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ValueError("kernel entries must be finite and nonnegative")
        if np.any(np.diag(q) != 0.0):
            raise ValueError("kernel must have zero trace (q(x,x) = 0)")
        if np.any(np.abs(q.sum(axis=1) - 1.0) > _ROW_TOL):
            raise ValueError("kernel rows must sum to 1")
        if self.pi is None:
            pi = stationary(q)
        else:
            if not _is_irreducible(q):
                raise ValueError("kernel not irreducible")
            pi = np.array(self.pi, dtype=float)
            pi = pi / pi.sum()
            if np.abs(pi @ q - pi).sum() > 1e-10:
                raise ValueError("supplied pi is not stationary for q")
        if np.any(pi <= 0):
            raise ValueError("stationary distribution must be strictly positive")
        q.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "pi", pi)

    @property
    def n_sites(self) -> int:
        return self.q.shape[0]

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, indices, cumulative row probabilities) for samplers."""
        n = self.n_sites
        indptr = np.zeros(n + 1, dtype=np.int64)
        indices = []
        cum = []
        for x in range(n):
            nz = np.flatnonzero(self.q[x])
            c = np.cumsum(self.q[x, nz])
            c[-1] = 1.0
            indices.append(nz)
            cum.append(c)
            indptr[x + 1] = indptr[x] + nz.size
        return indptr, np.concatenate(indices).astype(np.int64), np.concatenate(cum)

    @cached_property
    def pi_diag(self) -> float:
        return float(np.sum(self.pi**2))

    @cached_property
    def pi_max(self) -> float:
        return float(self.pi.max())

    def to_dict(self) -> dict:
        return {"n": self.n_sites, "rows": self.q.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "Kernel":
        rows = np.asarray(obj["rows"], dtype=float)
        if rows.shape != (obj["n"], obj["n"]):
            raise ValueError("kernel JSON: rows shape does not match n")
        return cls(rows)


def _poisson_window(lam: float) -> tuple[int, np.ndarray]:
    """Left index and Poisson weights covering all but < 1e-12 of the mass."""
    lo = int(stats.poisson.ppf(_TAIL_TOL / 2, lam)) if lam > 0 else 0
    hi = int(stats.poisson.isf(_TAIL_TOL / 2, lam)) + 1
    lo = max(lo - 1, 0)
    ks = np.arange(lo, hi + 1)
    return lo, stats.poisson.pmf(ks, lam)


def semigroup(kernel: Kernel, t: float) -> np.ndarray:
    """q_t = exp(t(q - I)) by uniformization.

    Long horizons are split into halves and squared back, so the Poisson
    window per piece stays short; every factor is a nonnegative matrix.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = kernel.n_sites
    if t == 0:
        return np.eye(n)
    squarings = 0
    piece = t
    while piece > 8.0:
        piece /= 2.0
        squarings += 1
    lo, w = _poisson_window(piece)
    q = kernel.q
    power = np.linalg.matrix_power(q, lo) if lo > 0 else np.eye(n)
    acc = w[0] * power
    for wk in w[1:]:
        power = power @ q
        acc += wk * power
    acc /= acc.sum(axis=1, keepdims=True)
    for _ in range(squarings):
        acc = acc @ acc
        acc /= acc.sum(axis=1, keepdims=True)
    return acc


def d_E(kernel: Kernel, t: float) -> float:
    """Worst-case total-variation distance of q_t(x, .) from pi."""
    qt = semigroup(kernel, t)
    return float(0.5 * np.abs(qt - kernel.pi[None, :]).sum(axis=1).max())


def t_mix(kernel: Kernel, tol: float = _TMIX_TOL) -> float:
    """inf{t >= 0 : d_E(t) <= 1/(2e)}, by doubling then bisection."""
    if d_E(kernel, 0.0) <= THRESHOLD:
        return 0.0
    hi = 1.0
    while d_E(kernel, hi) > THRESHOLD:
        hi *= 2.0
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if d_E(kernel, mid) > THRESHOLD:
            lo = mid
        else:
            hi = mid
    return hi


def is_reversible(kernel: Kernel, tol: float = 1e-12) -> bool:
    flow = kernel.pi[:, None] * kernel.q
    return bool(np.max(np.abs(flow - flow.T)) <= tol)


def spectral_gap(kernel: Kernel) -> tuple[float, float]:
    """(conventional gap 1 - lambda_2, gap of the matrix pi(x) q(x, y)).

    The first uses the similarity transform sqrt(pi_x) q_xy / sqrt(pi_y);
    the second is the difference of the two largest eigenvalues of the
    symmetric flow matrix itself.
    """
    if not is_reversible(kernel):
        raise ValueError("spectral gap requires reversibility")
    if kernel.n_sites < 2:
        return 0.0, 0.0
    s = np.sqrt(kernel.pi)
    sym = s[:, None] * kernel.q / s[None, :]
    sym = 0.5 * (sym + sym.T)
    ev = np.linalg.eigvalsh(sym)
    flow = kernel.pi[:, None] * kernel.q
    flow = 0.5 * (flow + flow.T)
    ev_flow = np.linalg.eigvalsh(flow)
    return float(ev[-1] - ev[-2]), float(ev_flow[-1] - ev_flow[-2])


class AliasTable:
    """Walker alias table for O(1) sampling from a finite law."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or p.sum() <= 0:
            raise ValueError("alias table needs a nonnegative, nonzero weight vector")
        n = p.size
        scaled = p / p.sum() * n
        prob = np.zeros(n)
        alias = np.zeros(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        for i in large + small:
            prob[i] = 1.0
            alias[i] = i
        self.prob = prob
        self.alias = alias
        self.n = n

    def sample(self, rng: np.random.Generator, size=None):
        i = rng.integers(0, self.n, size=size)
        u = rng.random(size=size)
        return np.where(u < self.prob[i], i, self.alias[i])


@dataclass(frozen=True)
class VVLaw:
    """Law of (V, V') with P(x, y) proportional to pi(x)^2 q(x, y)."""

    pairs: np.ndarray
    probs: np.ndarray
    normalizer: float
    pi_diag: float
    table: AliasTable = field(repr=False, compare=False)

    def sample(self, rng: np.random.Generator, size=None):
        idx = self.table.sample(rng, size)
        out = self.pairs[idx]
        return out if size is not None else (int(out[0]), int(out[1]))

    def matrix(self, n: int) -> np.ndarray:
        m = np.zeros((n, n))
        m[self.pairs[:, 0], self.pairs[:, 1]] = self.probs
        return m


def vv_law(kernel: Kernel) -> VVLaw:
    w = kernel.pi[:, None] ** 2 * kernel.q
    xs, ys = np.nonzero(w)
    vals = w[xs, ys]
    z = float(vals.sum())
    return VVLaw(
        pairs=np.stack([xs, ys], axis=1),
        probs=vals / z,
        normalizer=z,
        pi_diag=kernel.pi_diag,
        table=AliasTable(vals),
    )


def vv_sample(kernel: Kernel, rng: np.random.Generator, size=None):
    """Draw (V, V'); normalized by the true sum Z, not by pi_diag."""
    return vv_law(kernel).sample(rng, size)


def _from_weights(w: np.ndarray, name: str) -> Kernel:
    np.fill_diagonal(w, 0.0)
    deg = w.sum(axis=1)
    if np.any(deg <= 0) or not _is_irreducible(w):
        raise ValueError(f"{name}: graph is not connected")
    q = w / deg[:, None]
    # random walk on an undirected weighted graph: pi proportional to degree
    return Kernel(q, deg / deg.sum(), name=name)


def random_kernel(n: int, rng: np.random.Generator, density: float = 0.7,
                  reversible: bool = False, retries: int = 1000) -> Kernel:
    """Random irreducible kernel on n sites with Uniform(0,1] edge weights.

    Each off-diagonal entry is kept with probability ``density``;
    ``reversible`` symmetrizes the weights first.
    """
    if n < 2:
        raise ValueError("need n >= 2 sites")
    for _ in range(retries):
        w = (1.0 - rng.random((n, n))) * (rng.random((n, n)) < density)
        if reversible:
            w = np.triu(w, 1)
            w = w + w.T
        np.fill_diagonal(w, 0.0)
        rows = w.sum(axis=1)
        if np.all(rows > 0) and _is_irreducible(w):
            return Kernel(w / rows[:, None], name=f"random(n={n})")
    raise ValueError(f"no irreducible sample after {retries} retries")


def build_graph_family(family: str, n: int, params: dict | None = None,
                       rng: np.random.Generator | None = None) -> Kernel:
    """Random-walk kernel of a standard graph family.

    ``complete`` and ``cycle`` take n sites; ``torus2d`` takes n = L*L;
    ``weighted_er`` keeps each edge with probability ``p`` and gives it a
    Uniform(0, 1] weight, resampling up to ``retries`` times until the
    graph is connected.
    """
    params = dict(params or {})
    if n < 2:
        raise ValueError("need n >= 2 sites")
    if family == "complete":
        w = np.ones((n, n))
    elif family == "cycle":
        w = np.zeros((n, n))
        idx = np.arange(n)
        np.add.at(w, (idx, (idx + 1) % n), 1.0)
        np.add.at(w, (idx, (idx - 1) % n), 1.0)
        if n == 2:
            w = np.ones((2, 2))
    elif family == "torus2d":
        side = math.isqrt(n)
        if side * side != n or side < 2:
            raise ValueError("torus2d needs n = L*L with L >= 2")
        w = np.zeros((n, n))
        for r in range(side):
            for c in range(side):
                x = r * side + c
                for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    y = ((r + dr) % side) * side + (c + dc) % side
                    if y != x:
                        w[x, y] = 1.0
    elif family == "weighted_er":
        p = float(params.get("p", 0.3))
        retries = int(params.get("retries", 100))
        if rng is None:
            rng = np.random.Generator(np.random.Philox(int(params.get("seed", 0))))
        for _ in range(retries):
            keep = np.triu(rng.random((n, n)) < p, 1)
            weights = np.triu(1.0 - rng.random((n, n)), 1)
            w = np.where(keep, weights, 0.0)
            w = w + w.T
            if np.all(w.sum(axis=1) > 0) and _is_irreducible(w):
                return _from_weights(w, f"weighted_er(n={n}, p={p})")
        raise ValueError(f"weighted_er: no connected sample after {retries} retries")
    else:
        raise ValueError(f"unknown graph family {family!r}")
    return _from_weights(w, f"{family}(n={n})")


@dataclass(frozen=True)
class MixingReport:
    t_mix: float
    gap_conventional: float
    gap_flow: float
    pi_diag: float
    pi_max: float
    gamma: float

    @property
    def tmix_over_gamma(self) -> float:
        return self.t_mix / self.gamma

    @property
    def gap_ratio(self) -> float:
        """log(e v gamma pi_max) / (gap * gamma); nan for non-reversible kernels."""
        if not math.isfinite(self.gap_conventional) or self.gap_conventional <= 0:
            return math.nan
        return math.log(max(math.e, self.gamma * self.pi_max)) / (
            self.gap_conventional * self.gamma
        )

    def as_dict(self) -> dict:
        return {
            "t_mix": self.t_mix,
            "gap_conventional": self.gap_conventional,
            "gap_flow": self.gap_flow,
            "pi_diag": self.pi_diag,
            "pi_max": self.pi_max,
            "gamma": self.gamma,
            "tmix_over_gamma": self.tmix_over_gamma,
            "gap_ratio": self.gap_ratio,
        }


def mixing_report(kernel: Kernel, gamma: float) -> MixingReport:
    if is_reversible(kernel):
        g_conv, g_flow = spectral_gap(kernel)
    else:
        g_conv = g_flow = math.nan
    return MixingReport(
        t_mix=t_mix(kernel),
        gap_conventional=g_conv,
        gap_flow=g_flow,
        pi_diag=kernel.pi_diag,
        pi_max=kernel.pi_max,
        gamma=float(gamma),
    )
