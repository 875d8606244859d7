"""Coalescing rate-1 q-chains, meeting times and the Kingman limit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, gmres

from . import _engine
from .kernel import Kernel, is_reversible, vv_law

__all__ = [
    "CoalescingSystem",
    "run_until",
    "meeting_time_sample",
    "meeting_times",
    "gamma_exact",
    "gamma_mc",
    "GammaTooLarge",
    "TailProfile",
    "meeting_tail_profile",
    "block_hitting_times",
    "block_hitting_batch",
    "coalescing_partitions",
    "kingman_tail_sample",
    "kingman_tail_samples",
    "kingman_truncation",
]

MAX_PRODUCT_STATES = 10**6
_DENSE_MAX = 4000
_RESIDUAL_TOL = 1e-10


class GammaTooLarge(ValueError):
    """Product chain too large for the linear solve; use gamma_mc instead."""


@dataclass
class CoalescingSystem:
    """Positions and partition of a family of coalescing chains.

    ``walkers`` maps each start label to its current site; ``partition``
    lists the blocks of labels that have coalesced. Labels sharing a site
    are merged immediately.
    """

    kernel: Kernel
    walkers: dict
    clock: float = 0.0
    partition: list = field(default_factory=list)

    def __post_init__(self):
        if not self.partition:
            by_site: dict[int, list] = {}
            for label, site in self.walkers.items():
                by_site.setdefault(int(site), []).append(label)
            self.partition = [by_site[s] for s in sorted(by_site)]
        self._check()

    @classmethod
    def from_sites(cls, kernel: Kernel, sites=None) -> "CoalescingSystem":
        sites = range(kernel.n_sites) if sites is None else sites
        return cls(kernel, {s: int(s) for s in sites})

    def _check(self):
        for block in self.partition:
            sites = {self.walkers[label] for label in block}
            if len(sites) != 1:
                raise AssertionError("labels in one block must share a site")

    @property
    def block_count(self) -> int:
        return len(self.partition)

    def block_sites(self) -> list[int]:
        return [self.walkers[b[0]] for b in self.partition]

    def block_of(self, label) -> list:
        for b in self.partition:
            if label in b:
                return b
        raise KeyError(label)


def run_until(system: CoalescingSystem, t: float, rng: np.random.Generator) -> CoalescingSystem:
    """Evolve the effective walkers exactly (event-driven) up to time t.

    The system is updated in place and returned. Effective walkers are
    ordered by site so the evolution does not depend on how labels are
    named.
    """
    if t < system.clock:
        raise ValueError("cannot run backwards: t < clock")
    order = sorted(range(len(system.partition)), key=lambda b: system.walkers[system.partition[b][0]])
    blocks = [system.partition[b] for b in order]
    k = len(blocks)
    pos = np.array([system.walkers[b[0]] for b in blocks], dtype=np.int64)
    blk = np.arange(k, dtype=np.int64)
    mf = np.empty(max(k - 1, 1), dtype=np.int64)
    mi = np.empty_like(mf)
    mt = np.empty(max(k - 1, 1))
    indptr, indices, cum = system.kernel.csr
    k_new, nm = _engine.coalesce_step_run(
        indptr, indices, cum, system.kernel.n_sites, pos, blk, k, system.clock, t, rng, mf, mi, mt
    )
    members = {i: list(blocks[i]) for i in range(k)}
    parent = list(range(k))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for a, b in zip(mf[:nm], mi[:nm]):
        ra, rb = find(int(a)), find(int(b))
        parent[ra] = rb
        members[rb].extend(members.pop(ra))
    new_partition = []
    for i in range(k_new):
        root = find(int(blk[i]))
        labels = members[root]
        for label in labels:
            system.walkers[label] = int(pos[i])
        new_partition.append(labels)
    system.partition = new_partition
    system.clock = float(t)
    system._check()
    return system


def meeting_times(kernel: Kernel, xs, ys, rng: np.random.Generator, cap) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized exact meeting times; returns (times, censored flags)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
    ys = np.atleast_1d(np.asarray(ys, dtype=np.int64))
    caps = np.broadcast_to(np.asarray(cap, dtype=float), xs.shape).copy()
    if np.any(caps <= 0):
        raise ValueError("cap must be positive")
    indptr, indices, cum = kernel.csr
    return _engine.pair_meeting_batch(indptr, indices, cum, xs, ys, caps, rng)


def meeting_time_sample(kernel: Kernel, x: int, y: int, rng: np.random.Generator,
                        cap: float) -> tuple[float, bool]:
    """One meeting time M_{x,y}; the flag is True when censored at ``cap``."""
    t, c = meeting_times(kernel, [x], [y], rng, cap)
    return float(t[0]), bool(c[0])


def _pair_index(n: int):
    xs, ys = np.nonzero(~np.eye(n, dtype=bool))
    idx = -np.ones((n, n), dtype=np.int64)
    idx[xs, ys] = np.arange(xs.size)
    return xs, ys, idx


def _solve_dense(q: np.ndarray) -> np.ndarray:
    n = q.shape[0]
    xs, ys, idx = _pair_index(n)
    m = xs.size
    rows, cols, vals = [np.arange(m)], [np.arange(m)], [np.full(m, 2.0)]
    for z in range(n):
        # -q(x,z) h(z,y) and -q(y,z) h(x,z); diagonal targets are absorbing
        w1 = q[xs, z]
        tgt1 = idx[z, ys]
        keep = (w1 > 0) & (tgt1 >= 0)
        rows.append(np.flatnonzero(keep))
        cols.append(tgt1[keep])
        vals.append(-w1[keep])
        w2 = q[ys, z]
        tgt2 = idx[xs, z]
        keep = (w2 > 0) & (tgt2 >= 0)
        rows.append(np.flatnonzero(keep))
        cols.append(tgt2[keep])
        vals.append(-w2[keep])
    a = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
    )
    h_off = sp.linalg.spsolve(a.tocsc(), np.ones(m))
    h = np.zeros((n, n))
    h[xs, ys] = h_off
    return h


def _apply(q: np.ndarray, h: np.ndarray) -> np.ndarray:
    out = 2.0 * h - q @ h - h @ q.T
    np.fill_diagonal(out, 0.0)
    return out


def _solve_iterative(kernel: Kernel) -> np.ndarray:
    n = kernel.n_sites
    q = kernel.q
    off = ~np.eye(n, dtype=bool)
    if is_reversible(kernel):
        # symmetric positive definite after the pi x pi similarity transform
        s = np.sqrt(kernel.pi)
        wgt = np.outer(s, s)

        def mv(v):
            g = np.zeros((n, n))
            g[off] = v
            h = g / wgt
            return (_apply(q, h) * wgt)[off]

        b = wgt[off]
        op = LinearOperator((off.sum(), off.sum()), matvec=mv, dtype=float)
        sol, info = cg(op, b, rtol=1e-14, atol=0.0, maxiter=20 * n * n)
        h = np.zeros((n, n))
        h[off] = sol
        h = h / wgt
    else:
        def mv(v):
            h = np.zeros((n, n))
            h[off] = v
            return _apply(q, h)[off]

        op = LinearOperator((off.sum(), off.sum()), matvec=mv, dtype=float)
        sol, info = gmres(op, np.ones(off.sum()), rtol=1e-14, atol=0.0, restart=200,
                          maxiter=50 * n)
        h = np.zeros((n, n))
        h[off] = sol
    if info < 0:
        raise RuntimeError("iterative meeting-time solve broke down")
    return h


def expected_meeting_matrix(kernel: Kernel) -> np.ndarray:
    """h(x, y) = E[M_{x,y}] for independent rate-1 chains."""
    n = kernel.n_sites
    if n * n > MAX_PRODUCT_STATES:
        raise GammaTooLarge(
            f"product chain has {n * n} states (> {MAX_PRODUCT_STATES}); use gamma_mc"
        )
    if n == 1:
        return np.zeros((1, 1))
    h = _solve_dense(kernel.q) if n * n <= _DENSE_MAX else _solve_iterative(kernel)
    res = _apply(kernel.q, h)
    res[~np.eye(n, dtype=bool)] -= 1.0
    resid = float(np.abs(res).max())
    if resid > _RESIDUAL_TOL:
        raise RuntimeError(f"meeting-time system residual {resid:.3e} exceeds {_RESIDUAL_TOL}")
    return h


def gamma_exact(kernel: Kernel) -> float:
    """Expected meeting time of two independent stationary chains."""
    h = expected_meeting_matrix(kernel)
    return float(kernel.pi @ h @ kernel.pi)


def gamma_mc(kernel: Kernel, replicas: int, rng: np.random.Generator,
             cap: float | None = None) -> tuple[float, float]:
    """Monte-Carlo estimate of gamma with its standard error.

    Starts are drawn from pi x pi, so coincident starts contribute 0.
    Censored samples (if any) enter at the cap; their count is available
    from :func:`gamma_mc_detail`.
    """
    est, se, _ = gamma_mc_detail(kernel, replicas, rng, cap)
    return est, se


def gamma_mc_detail(kernel: Kernel, replicas: int, rng: np.random.Generator,
                    cap: float | None = None) -> tuple[float, float, int]:
    if replicas < 1000:
        raise ValueError("gamma_mc needs at least 10^3 replicas")
    n = kernel.n_sites
    xs = rng.choice(n, size=replicas, p=kernel.pi)
    ys = rng.choice(n, size=replicas, p=kernel.pi)
    if cap is None:
        cap = 1e3 * n * n
    times, censored = meeting_times(kernel, xs, ys, rng, cap)
    return float(times.mean()), float(times.std(ddof=1) / math.sqrt(replicas)), int(censored.sum())


@dataclass(frozen=True)
class TailProfile:
    """Rescaled meeting-tail estimates on a time grid (units of gamma)."""

    t_grid: np.ndarray
    tail: np.ndarray
    tail_se: np.ndarray
    integral: np.ndarray
    integral_se: np.ndarray
    prefactor: float
    censored: int
    samples: np.ndarray = field(repr=False)

    def rows(self):
        for i, t in enumerate(self.t_grid):
            yield {
                "t": float(t),
                "tail": float(self.tail[i]),
                "tail_se": float(self.tail_se[i]),
                "integral": float(self.integral[i]),
                "integral_se": float(self.integral_se[i]),
            }


def meeting_tail_profile(kernel: Kernel, gamma: float, t_grid, replicas: int,
                         rng: np.random.Generator) -> TailProfile:
    """2 gamma pi_diag P(M_{V,V'} > gamma t) and its time integral.

    (V, V') follows the pi(x)^2 q(x, y) law. Chains are censored just past
    the last grid time, which does not affect any reported quantity.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    law = vv_law(kernel)
    pairs = law.sample(rng, size=replicas)
    cap = gamma * float(t_grid.max()) * 1.000001 + 1e-12
    times, censored = meeting_times(kernel, pairs[:, 0], pairs[:, 1], rng, cap)
    scaled = times / gamma
    c = 2.0 * gamma * kernel.pi_diag
    tail = np.empty(t_grid.size)
    tail_se = np.empty(t_grid.size)
    integ = np.empty(t_grid.size)
    integ_se = np.empty(t_grid.size)
    for i, t in enumerate(t_grid):
        ind = (scaled > t).astype(float)
        tail[i] = c * ind.mean()
        tail_se[i] = c * ind.std(ddof=1) / math.sqrt(replicas)
        clipped = np.minimum(scaled, t)
        integ[i] = c * clipped.mean()
        integ_se[i] = c * clipped.std(ddof=1) / math.sqrt(replicas)
    return TailProfile(t_grid, tail, tail_se, integ, integ_se, c, int(censored.sum()), scaled)


def block_hitting_batch(kernel: Kernel, j_list, replicas: int, rng: np.random.Generator,
                        cap: float = math.inf) -> np.ndarray:
    """Block-count hitting times for ``replicas`` all-sites runs.

    Returns shape (replicas, len(j_list)); censored entries are nan.
    """
    n = kernel.n_sites
    j_arr = np.asarray(j_list, dtype=np.int64)
    if np.any(j_arr < 1) or np.any(j_arr > n):
        raise ValueError("block counts must lie in 1..N")
    indptr, indices, cum = kernel.csr
    full = _engine.block_hits_batch(indptr, indices, cum, n, int(replicas), float(cap), rng)
    return full[:, j_arr]


def block_hitting_times(kernel: Kernel, j_list, rng: np.random.Generator,
                        cap: float = math.inf) -> tuple[np.ndarray, np.ndarray]:
    """One coalescing run from every site: (times C_j, censored flags)."""
    times = block_hitting_batch(kernel, j_list, 1, rng, cap)[0]
    censored = np.isnan(times)
    return times, censored


def coalescing_partitions(kernel: Kernel, t: float, replicas: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Block representative of each start site at time t, per replica."""
    indptr, indices, cum = kernel.csr
    return _engine.partition_batch(indptr, indices, cum, kernel.n_sites, float(t),
                                   int(replicas), rng)


def kingman_truncation(tol: float) -> int:
    """Smallest K with neglected tail mean 2/K below ``tol``."""
    if tol <= 0:
        raise ValueError("truncation tolerance must be positive")
    return int(math.floor(2.0 / tol)) + 1


def kingman_tail_samples(j_list, size: int, rng: np.random.Generator,
                         truncation_tol: float = 1e-4, k_max: int | None = None) -> np.ndarray:
    """Samples of sum_{i > j} Z_i for each j (columns), truncated at K."""
    j_arr = np.asarray(j_list, dtype=np.int64)
    if np.any(j_arr < 1):
        raise ValueError("j must be >= 1")
    order = np.argsort(j_arr)
    k = kingman_truncation(truncation_tol) if k_max is None else int(k_max)
    out = _engine.kingman_tail_batch(j_arr[order], k, int(size), rng)
    res = np.empty_like(out)
    res[:, order] = out
    return res


def kingman_tail_sample(j: int, rng: np.random.Generator, truncation_tol: float = 1e-4,
                        size=None):
    if size is None:
        return float(kingman_tail_samples([j], 1, rng, truncation_tol)[0, 0])
    return kingman_tail_samples([j], int(size), rng, truncation_tol)[:, 0]
