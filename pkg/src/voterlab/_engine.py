"""JIT-compiled inner loops shared by the simulation modules.

Every routine takes a ``numpy.random.Generator`` (Philox) so draws come
from the same documented stream as the pure-Python paths. Kernels are
passed in CSR form: ``indptr``, ``indices`` and per-row cumulative
probabilities ``cum`` (last entry of each row forced to 1).
"""

import numpy as np
from numba import njit

_CACHE = True


@njit(cache=_CACHE, nogil=True)
def sample_row(indptr, indices, cum, x, u):
    lo = indptr[x]
    hi = indptr[x + 1] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return indices[lo]


@njit(cache=_CACHE, nogil=True)
def sample_cum(cum, u):
    lo = 0
    hi = cum.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=_CACHE, nogil=True)
def pair_meeting_batch(indptr, indices, cum, xs, ys, caps, rng):
    """Meeting times of independent rate-1 chains; censored at ``caps``."""
    n = xs.shape[0]
    out = np.empty(n)
    censored = np.zeros(n, dtype=np.bool_)
    for r in range(n):
        a = xs[r]
        b = ys[r]
        t = 0.0
        if a == b:
            out[r] = 0.0
            continue
        cap = caps[r]
        while True:
            t += rng.standard_exponential() * 0.5
            if t > cap:
                out[r] = cap
                censored[r] = True
                break
            u = rng.random()
            if rng.random() < 0.5:
                a = sample_row(indptr, indices, cum, a, u)
            else:
                b = sample_row(indptr, indices, cum, b, u)
            if a == b:
                out[r] = t
                break
    return out, censored


@njit(cache=_CACHE, nogil=True)
def coalesce_step_run(indptr, indices, cum, n_sites, pos, blk, k, t0, t1, rng,
                      merge_from, merge_into, merge_time):
    """Advance effective walkers ``pos[:k]`` (block ids ``blk``) from t0 to t1.

    Returns (k, n_merges). Merged walkers are swap-removed; ``pos`` and
    ``blk`` are updated in place.
    """
    occ = np.full(n_sites, -1, dtype=np.int64)
    for i in range(k):
        occ[pos[i]] = i
    t = t0
    nm = 0
    while k > 0:
        t += rng.standard_exponential() / k
        if t > t1:
            break
        i = rng.integers(0, k)
        x = pos[i]
        y = sample_row(indptr, indices, cum, x, rng.random())
        j = occ[y]
        occ[x] = -1
        if j >= 0:
            merge_from[nm] = blk[i]
            merge_into[nm] = blk[j]
            merge_time[nm] = t
            nm += 1
            last = k - 1
            if i != last:
                pos[i] = pos[last]
                blk[i] = blk[last]
                occ[pos[i]] = i
            k -= 1
        else:
            pos[i] = y
            occ[y] = i
    return k, nm


@njit(cache=_CACHE, nogil=True)
def block_hits_batch(indptr, indices, cum, n, replicas, cap, rng):
    """First hitting times of every block count, all-sites start.

    Returns an array (replicas, n + 1) with column j holding the first
    time the block count equals j (np.nan when censored at ``cap``;
    counts skipped never occur since merges are one at a time).
    """
    out = np.full((replicas, n + 1), np.nan)
    pos = np.empty(n, dtype=np.int64)
    occ = np.empty(n, dtype=np.int64)
    for r in range(replicas):
        for i in range(n):
            pos[i] = i
            occ[i] = i
        k = n
        t = 0.0
        out[r, n] = 0.0
        while k > 1:
            t += rng.standard_exponential() / k
            if t > cap:
                break
            i = rng.integers(0, k)
            x = pos[i]
            y = sample_row(indptr, indices, cum, x, rng.random())
            j = occ[y]
            occ[x] = -1
            if j >= 0:
                last = k - 1
                if i != last:
                    pos[i] = pos[last]
                    occ[pos[i]] = i
                k -= 1
                out[r, k] = t
            else:
                pos[i] = y
                occ[y] = i
    return out


@njit(cache=_CACHE, nogil=True)
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@njit(cache=_CACHE, nogil=True)
def partition_batch(indptr, indices, cum, n, t_end, replicas, rng):
    """Block representative of every start site at time ``t_end``."""
    out = np.empty((replicas, n), dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    occ = np.empty(n, dtype=np.int64)
    blk = np.empty(n, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    for r in range(replicas):
        for i in range(n):
            pos[i] = i
            occ[i] = i
            blk[i] = i
            parent[i] = i
        k = n
        t = 0.0
        while k > 1:
            t += rng.standard_exponential() / k
            if t > t_end:
                break
            i = rng.integers(0, k)
            x = pos[i]
            y = sample_row(indptr, indices, cum, x, rng.random())
            j = occ[y]
            occ[x] = -1
            if j >= 0:
                parent[blk[i]] = blk[j]
                last = k - 1
                if i != last:
                    pos[i] = pos[last]
                    blk[i] = blk[last]
                    occ[pos[i]] = i
                k -= 1
            else:
                pos[i] = y
                occ[y] = i
        for s in range(n):
            out[r, s] = _find(parent, s)
    return out


@njit(cache=_CACHE, nogil=True)
def kingman_tail_batch(j_list, k_max, size, rng):
    """Samples of sum_{i=j+1}^{k_max} Z_i, Z_i ~ Exp(mean 1/C(i,2)).

    One set of Z's per sample serves every j in ``j_list`` (each column
    has the exact marginal law; columns are dependent).
    """
    m = j_list.shape[0]
    out = np.zeros((size, m))
    for s in range(size):
        acc = 0.0
        col = m - 1
        # j_list sorted ascending; accumulate from k_max downward
        for i in range(k_max, 1, -1):
            while col >= 0 and j_list[col] >= i:
                out[s, col] = acc
                col -= 1
            if col < 0:
                break
            acc += rng.standard_exponential() * 2.0 / (i * (i - 1.0))
        while col >= 0:
            out[s, col] = acc
            col -= 1
    return out


@njit(cache=_CACHE, nogil=True)
def voter_forward_batch(indptr, indices, cum, xi0, mut_cum, mut_rate, times,
                        replicas, rng):
    """Direct Gillespie simulation of the voter model with mutation.

    Returns configurations (replicas, len(times), n) at each grid time.
    """
    n = xi0.shape[0]
    g = times.shape[0]
    out = np.empty((replicas, g, n), dtype=np.int64)
    xi = np.empty(n, dtype=np.int64)
    total = n * (1.0 + mut_rate)
    p_arrow = 1.0 / (1.0 + mut_rate)
    for r in range(replicas):
        for x in range(n):
            xi[x] = xi0[x]
        t = 0.0
        gi = 0
        while gi < g:
            t += rng.standard_exponential() / total
            while gi < g and times[gi] < t:
                for x in range(n):
                    out[r, gi, x] = xi[x]
                gi += 1
            if gi >= g:
                break
            x = rng.integers(0, n)
            if rng.random() < p_arrow:
                y = sample_row(indptr, indices, cum, x, rng.random())
                xi[x] = xi[y]
            else:
                xi[x] = sample_cum(mut_cum, rng.random())
    return out


@njit(cache=_CACHE, nogil=True)
def two_lineage_batch(indptr, indices, cum, x0, y0, t, mut_rate, mut_cum,
                      replicas, rng):
    """Two backward dual lineages with mutation marks on their paths.

    Returns arrays: e_x, m_x, e_y, m_y (first-mark backward time and mark
    type, inf / -1 if none), meet (inf if no meeting by t), end_x, end_y.
    """
    inf = np.inf
    ex = np.full(replicas, inf)
    ey = np.full(replicas, inf)
    mx = np.full(replicas, -1, dtype=np.int64)
    my = np.full(replicas, -1, dtype=np.int64)
    meet = np.full(replicas, inf)
    endx = np.empty(replicas, dtype=np.int64)
    endy = np.empty(replicas, dtype=np.int64)
    for r in range(replicas):
        a = x0
        b = y0
        s = 0.0
        joined = a == b
        if joined:
            meet[r] = 0.0
        while True:
            nlin = 1 if joined else 2
            rate = nlin * (1.0 + mut_rate)
            s += rng.standard_exponential() / rate
            if s > t:
                break
            which = 0
            if not joined and rng.random() < 0.5:
                which = 1
            if rng.random() * (1.0 + mut_rate) < 1.0:
                u = rng.random()
                if which == 0:
                    a = sample_row(indptr, indices, cum, a, u)
                else:
                    b = sample_row(indptr, indices, cum, b, u)
                if not joined and a == b:
                    joined = True
                    meet[r] = s
            else:
                mt = sample_cum(mut_cum, rng.random())
                if which == 0 or joined:
                    if ex[r] == inf:
                        ex[r] = s
                        mx[r] = mt
                if which == 1 or joined:
                    if ey[r] == inf:
                        ey[r] = s
                        my[r] = mt
        endx[r] = a
        endy[r] = b if not joined else a
    return ex, mx, ey, my, meet, endx, endy


@njit(cache=_CACHE, nogil=True)
def kingman_finite_batch(n_start, t, replicas, rng):
    """Block count at time t of a Kingman coalescent from n_start lineages."""
    out = np.empty(replicas, dtype=np.int64)
    for r in range(replicas):
        k = n_start
        s = 0.0
        while k > 1:
            s += rng.standard_exponential() * 2.0 / (k * (k - 1.0))
            if s > t:
                break
            k -= 1
        out[r] = k
    return out
