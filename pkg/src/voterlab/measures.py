"""Finitely supported measures on a type space and the weak atomic metric."""

from __future__ import annotations

import json
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .typespace import TypeSpace

__all__ = [
    "FiniteMeasure",
    "empirical",
    "atoms_desc",
    "atom_count",
    "entropy",
    "diversity",
    "star",
    "self_pair_integral",
    "atomic_discrepancy",
    "prohorov",
    "rho_a",
]

_PROB_TOL = 1e-12
SUBSET_LIMIT = 24


@dataclass(frozen=True)
class FiniteMeasure:
    """Nonnegative weights indexed by the types of ``space``."""

    space: TypeSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.space.size,):
            raise ValueError(f"weights must have length {self.space.size}")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("measure weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def is_probability(self) -> bool:
        return abs(self.mass - 1.0) <= _PROB_TOL

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def integrate(self, f) -> float:
        return float(np.dot(np.asarray(f, dtype=float), self.weights))

    @classmethod
    def point_mass(cls, space: TypeSpace, i: int) -> "FiniteMeasure":
        w = np.zeros(space.size)
        w[i] = 1.0
        return cls(space, w)

    def to_json(self) -> str:
        return json.dumps({str(lab): float(w) for lab, w in zip(self.space.labels, self.weights)})

    @classmethod
    def from_mapping(cls, space: TypeSpace, obj: dict) -> "FiniteMeasure":
        w = np.zeros(space.size)
        by_str = {str(lab): i for i, lab in enumerate(space.labels)}
        for key, val in obj.items():
            if key not in by_str:
                raise KeyError(f"unknown type label {key!r}")
            w[by_str[key]] = float(val)
        return cls(space, w)


def empirical(xi, pi, space: TypeSpace) -> FiniteMeasure:
    """Mass at type s is the total stationary weight of sites of type s."""
    xi = np.asarray(xi, dtype=np.int64)
    pi = np.asarray(pi, dtype=float)
    if xi.shape != pi.shape:
        raise ValueError("configuration and stationary vector differ in length")
    return FiniteMeasure(space, np.bincount(xi, weights=pi, minlength=space.size))


def atoms_desc(lam: FiniteMeasure) -> np.ndarray:
    """Positive atom masses, largest first; ties keep type order."""
    idx = lam.support
    order = np.argsort(-lam.weights[idx], kind="stable")
    return lam.weights[idx][order]


def atom_count(lam: FiniteMeasure) -> int:
    return int(lam.support.size)


def entropy(lam: FiniteMeasure) -> float:
    a = atoms_desc(lam)
    return float(-np.sum(a * np.log(a))) if a.size else 0.0


def diversity(lam: FiniteMeasure) -> float:
    return float(np.sum(lam.weights**2))


def star(lam: FiniteMeasure) -> FiniteMeasure:
    return FiniteMeasure(lam.space, lam.weights**2)


def self_pair_integral(lam: FiniteMeasure, eps: float) -> float:
    """Double integral of J(d / eps) against lam x lam."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    k = np.maximum(0.0, 1.0 - lam.space.dist / eps)
    return float(lam.weights @ k @ lam.weights)


def _check_space(lam: FiniteMeasure, nu: FiniteMeasure) -> TypeSpace:
    if lam.space is not nu.space and lam.space != nu.space:
        if lam.space.labels != nu.space.labels or not np.array_equal(
            lam.space.dist, nu.space.dist
        ):
            raise ValueError("measures live on different type spaces")
    return lam.space


def atomic_discrepancy(lam: FiniteMeasure, nu: FiniteMeasure) -> float:
    """sup over 0 < eps <= 1 of the self-pair integral difference.

    In u = 1/eps the difference is piecewise linear with kinks at
    u = 1/d for each pairwise distance d < 1, so the supremum is attained
    at eps = 1, at eps = d, or in the limit eps -> 0+ (which gives
    |lam*(S) - nu*(S)|).
    """
    space = _check_space(lam, nu)
    d = space.dist
    w = np.outer(lam.weights, lam.weights) - np.outer(nu.weights, nu.weights)
    limit = float(np.sum(np.diag(w)))
    candidates = [abs(limit)]
    ds = np.unique(d[(d > 0) & (d < 1.0)])
    for eps in np.concatenate([ds, [1.0]]):
        k = np.maximum(0.0, 1.0 - d / eps)
        candidates.append(abs(float(np.sum(w * k))))
    return max(candidates)


_FLOW_ROUNDOFF = 4.0 * np.finfo(float).eps


def _deficiency_flow(a: np.ndarray, b: np.ndarray, adj: np.ndarray) -> float:
    """max_B a(B) - b(N(B)) via max-flow: a(S) - maxflow."""
    ia = np.flatnonzero(a > 0)
    ib = np.flatnonzero(b > 0)
    total = float(a[ia].sum())
    if ia.size == 0:
        return 0.0
    if ib.size == 0:
        return total
    g = nx.DiGraph()
    for i in ia:
        g.add_edge("s", ("a", int(i)), capacity=float(a[i]))
    for j in ib:
        g.add_edge(("b", int(j)), "t", capacity=float(b[j]))
    for i in ia:
        for j in ib:
            if adj[i, j]:
                g.add_edge(("a", int(i)), ("b", int(j)))  # infinite capacity
    if "t" not in g or "s" not in g:
        return total
    gap = total - nx.maximum_flow_value(g, "s", "t")
    # augmenting-path sums carry roundoff; a saturated source is exact 0
    return 0.0 if gap <= _FLOW_ROUNDOFF * (ia.size + ib.size) * total else gap


def _deficiency_subsets(a: np.ndarray, b: np.ndarray, adj: np.ndarray) -> float:
    """Same quantity by enumerating every subset of supp(a)."""
    ia = np.flatnonzero(a > 0)
    if ia.size > SUBSET_LIMIT:
        raise ValueError(f"subset enumeration limited to {SUBSET_LIMIT} atoms")
    best = 0.0
    for mask in range(1, 1 << ia.size):
        members = [ia[i] for i in range(ia.size) if mask >> i & 1]
        nbhd = np.any(adj[members], axis=0)
        best = max(best, float(a[members].sum() - b[nbhd].sum()))
    return best


def prohorov(lam: FiniteMeasure, nu: FiniteMeasure, method: str = "flow") -> float:
    """Exact Prohorov distance between finitely supported measures.

    For eps in (d_k, d_{k+1}] (consecutive distinct distances, d_0 = 0)
    the open eps-neighbourhood relation is {d <= d_k}, so the worst
    deficiency G_k = max_B lam(B) - nu(B^eps) (and symmetrically) is
    constant there and nonincreasing in k. The distance is
    min_k max(d_k, G_k), located by bisection on k.

    ``method="subsets"`` enumerates subsets instead of solving max-flow;
    above ``SUBSET_LIMIT`` joint atoms it falls back to the flow route.
    """
    space = _check_space(lam, nu)
    if method == "subsets" and np.count_nonzero((lam.weights > 0) | (nu.weights > 0)) > SUBSET_LIMIT:
        method = "flow"
    if method == "flow":
        deficiency = _deficiency_flow
    elif method == "subsets":
        deficiency = _deficiency_subsets
    else:
        raise ValueError(f"unknown method {method!r}")
    a = lam.weights
    b = nu.weights
    supp = np.flatnonzero((a > 0) | (b > 0))
    if supp.size == 0:
        return 0.0
    sub = space.dist[np.ix_(supp, supp)]
    a_s, b_s = a[supp], b[supp]
    levels = np.unique(np.concatenate([[0.0], sub.ravel()]))

    cache: dict[int, float] = {}

    def g(k: int) -> float:
        if k not in cache:
            adj = sub <= levels[k]
            cache[k] = max(deficiency(a_s, b_s, adj), deficiency(b_s, a_s, adj))
        return cache[k]

    # smallest k with G_k <= d_k (exists: the last level links everything
    # within the support, leaving only the total-mass gap)
    lo, hi = 0, levels.size - 1
    if g(hi) > levels[hi]:
        return float(g(hi))
    while lo < hi:
        mid = (lo + hi) // 2
        if g(mid) <= levels[mid]:
            hi = mid
        else:
            lo = mid + 1
    k = lo
    best = float(levels[k])
    if k > 0:
        best = min(best, g(k - 1))
    return best


def rho_a(lam: FiniteMeasure, nu: FiniteMeasure) -> float:
    """Prohorov distance plus the mollified atomic discrepancy."""
    return prohorov(lam, nu) + atomic_discrepancy(lam, nu)
