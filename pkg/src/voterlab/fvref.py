"""Fleming-Viot reference statistics from the Kingman coalescent with killing.

A sample of n individuals at time t is generated backward: lineages merge
pairwise at rate 1 and each lineage is hit by mutation at rate mu(1).
A lineage killed by mutation takes a fresh mu-bar type; lineages alive
at time 0 copy types drawn from the initial measure. A nonatomic start
hands out globally unique labels (encoded as negative integers so they
never collide with real types).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _engine
from .coalescent import kingman_tail_samples
from .generators import ProductTestFunction
from .measures import FiniteMeasure
from .typespace import MutationMeasure, normalize

__all__ = [
    "FVSpec",
    "fv_sample_types",
    "fv_moment",
    "fv_diversity_mean",
    "fv_blockcount_dist",
    "fv_atoms_sample",
    "fv_functional_samples",
]


@dataclass(frozen=True)
class FVSpec:
    """Initial condition and mutation measure of a Fleming-Viot process."""

    mutation: MutationMeasure
    initial: FiniteMeasure | None = None
    nonatomic: bool = False

    def __post_init__(self):
        if self.nonatomic:
            if self.initial is not None:
                raise ValueError("a nonatomic start takes no initial measure")
        else:
            if self.initial is None:
                raise ValueError("need an initial measure or the nonatomic flag")
            if not self.initial.is_probability:
                raise ValueError("initial measure must be a probability measure")

    @property
    def theta(self) -> float:
        return self.mutation.total


def _genealogy(n: int, t: float, theta: float, rng: np.random.Generator):
    """Backward genealogy of n lineages over a window of length t.

    Returns (owner, killed) where owner[i] is the ancestral class of
    sample i and killed[c] tells whether class c was hit by mutation.
    """
    parent = list(range(n))
    alive = list(range(n))
    killed = {}
    s = 0.0
    while alive:
        k = len(alive)
        coal = k * (k - 1) / 2.0
        rate = coal + k * theta
        if rate == 0.0:
            break
        s += rng.exponential(1.0 / rate)
        if s > t:
            break
        if rng.random() * rate < coal:
            i, j = rng.choice(k, size=2, replace=False)
            a, b = alive[i], alive[j]
            parent[b] = a
            alive.pop(j)
        else:
            i = int(rng.integers(k))
            killed[alive.pop(i)] = True

    def root(a):
        while parent[a] != a:
            a = parent[a]
        return a

    return [root(i) for i in range(n)], killed


def fv_sample_types(spec: FVSpec, n: int, t: float, rng: np.random.Generator) -> list[int]:
    """Types of n individuals sampled from X_t.

    Real types are indices into the type space; in the nonatomic case
    surviving ancestors get unique negative labels.
    """
    if n < 1:
        raise ValueError("sample size must be at least 1")
    if t < 0:
        raise ValueError("time must be nonnegative")
    owner, killed = _genealogy(n, t, spec.theta, rng)
    mbar = normalize(spec.mutation).weights if spec.theta > 0 else None
    label = {}
    fresh = -1
    for c in sorted(set(owner)):
        if killed.get(c):
            label[c] = int(rng.choice(mbar.size, p=mbar))
        elif spec.nonatomic:
            label[c] = fresh
            fresh -= 1
        else:
            label[c] = int(rng.choice(spec.initial.weights.size, p=spec.initial.weights))
    return [label[c] for c in owner]


def fv_moment(spec: FVSpec, phi: ProductTestFunction, t: float, replicas: int,
              rng: np.random.Generator) -> tuple[float, float]:
    """E[prod <f_i, X_t>] by averaging prod f_i(tau_i) over k-samples.

    Unique nonatomic labels contribute 0 to every f_i, matching a
    diffuse initial measure placed off the finite type space.
    """
    if replicas < 1000:
        raise ValueError("need at least 10^3 replicas")
    vals = np.empty(replicas)
    for r in range(replicas):
        types = fv_sample_types(spec, phi.k, t, rng)
        prod = 1.0
        for i, s in enumerate(types):
            prod *= phi.fs[i][s] if s >= 0 else 0.0
        vals[r] = prod
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas))


def fv_diversity_mean(theta: float, t: float, mutant_div: float = 0.0, initial_div: float = 0.0,
                      cross: float = 0.0) -> float:
    """E[Div(X_t)], the chance that two sampled individuals share a type.

    The pair coalesces before either lineage mutates with probability
    (1 - e^{-(1+2theta)t}) / (1 + 2theta). ``mutant_div`` is the sum of
    squared mu-bar weights, ``initial_div`` that of X_0 and ``cross`` is
    <X_0, mu-bar>. All default to 0, the nonatomic start with a diffuse
    mutation law.
    """
    if theta < 0 or t < 0:
        raise ValueError("theta and t must be nonnegative")
    r = 1.0 + 2.0 * theta
    base = -math.expm1(-r * t) / r
    untouched = math.exp(-r * t) * initial_div
    if theta == 0.0:
        return base + untouched
    # one lineage mutates first; the other then mutates too (both) or survives
    first = 2.0 * theta * base
    survive = 2.0 * theta * math.exp(-theta * t) * -math.expm1(-(1.0 + theta) * t) / (1.0 + theta)
    return base + mutant_div * (first - survive) + cross * survive + untouched


def fv_blockcount_dist(j: int, t: float, replicas: int, rng: np.random.Generator,
                       n_start: int = 1000, method: str = "tail") -> tuple[float, float]:
    """P(Kingman block count at time t <= j) with its standard error.

    ``method="tail"`` samples sum_{i>j} Z_i (entrance from infinity,
    truncated at tail mean below 1e-4); ``method="finite"`` simulates a
    coalescent started from ``n_start`` lineages.
    """
    if j < 1:
        raise ValueError("j must be at least 1")
    if t <= 0:
        return 0.0, 0.0
    if method == "tail":
        s = kingman_tail_samples([j], replicas, rng)[:, 0]
        hit = s <= t
    elif method == "finite":
        counts = _engine.kingman_finite_batch(int(n_start), float(t), int(replicas), rng)
        hit = counts <= j
    else:
        raise ValueError(f"unknown method {method!r}")
    p = float(hit.mean())
    return p, float(math.sqrt(max(p * (1 - p), 0.0) / replicas))


def kingman_block_counts(t: float, replicas: int, rng: np.random.Generator,
                         n_start: int = 20001) -> np.ndarray:
    """Block counts of the Kingman coalescent at time t (large-n entrance)."""
    return _engine.kingman_finite_batch(int(n_start), float(t), int(replicas), rng)


def fv_atoms_sample(t: float, rng: np.random.Generator, n_start: int = 20001) -> np.ndarray:
    """Atom masses of X_t for mu = 0 and a nonatomic start.

    Given K blocks at time t, the frequencies are Dirichlet(1, ..., 1).
    """
    k = int(_engine.kingman_finite_batch(int(n_start), float(t), 1, rng)[0])
    return np.sort(rng.dirichlet(np.ones(k)))[::-1]


def fv_functional_samples(t: float, replicas: int, rng: np.random.Generator,
                          n_start: int = 20001) -> dict[str, np.ndarray]:
    """Entropy, diversity and atom count of X_t (mu = 0, nonatomic start)."""
    ent = np.empty(replicas)
    div = np.empty(replicas)
    cnt = np.empty(replicas, dtype=np.int64)
    counts = _engine.kingman_finite_batch(int(n_start), float(t), int(replicas), rng)
    for r in range(replicas):
        a = rng.dirichlet(np.ones(int(counts[r])))
        a = a[a > 0]
        ent[r] = -np.sum(a * np.log(a))
        div[r] = np.sum(a * a)
        cnt[r] = counts[r]
    return {"entropy": ent, "diversity": div, "atoms": cnt}
