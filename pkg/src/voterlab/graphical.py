"""Space-time graphical construction of the voter model with mutation.

An :class:`EventLog` materializes, per site, the arrow events (time,
target) of a rate-1 Poisson process and the mutation marks (time, type)
of a rate-mu(1) Poisson process on (0, T]. The forward voter model and
the backward dual paths both read the same log, so the duality identity
can be checked exactly on each realization.

Events are totally ordered by the key (time, site, kind) with arrows
(kind 0) before mutations (kind 1); the forward pass applies events in
increasing key order and the backward pass walks keys downward, so ties
in floating-point time (probability zero) are still resolved the same
way in both directions.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _engine
from .kernel import Kernel
from .typespace import MutationMeasure, normalize

__all__ = [
    "EventLog",
    "DualPath",
    "substream",
    "generate_log",
    "forward_voter",
    "backward_dual",
    "duality_check",
    "duality_gap_bound",
    "GapBound",
    "simulate_voter",
    "dump_log",
    "load_log",
]

ARROW = 0
MUTATION = 1
MAX_EXPECTED_EVENTS = 10**8
LOG_MAGIC = b"VLOG"
LOG_VERSION = 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the substream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class EventLog:
    horizon: float
    arrow_times: tuple
    arrow_targets: tuple
    mut_times: tuple
    mut_types: tuple
    seed: int = 0
    # per-site merged view, sorted by (time, kind)
    _merged: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not self._merged:
            merged = []
            for x in range(self.n_sites):
                t = np.concatenate([self.arrow_times[x], self.mut_times[x]])
                kind = np.concatenate([
                    np.full(self.arrow_times[x].size, ARROW, dtype=np.int64),
                    np.full(self.mut_times[x].size, MUTATION, dtype=np.int64),
                ])
                payload = np.concatenate([self.arrow_targets[x], self.mut_types[x]]).astype(np.int64)
                order = np.lexsort((kind, t))
                merged.append((t[order], kind[order], payload[order]))
            object.__setattr__(self, "_merged", tuple(merged))

    @property
    def n_sites(self) -> int:
        return len(self.arrow_times)

    @property
    def n_events(self) -> int:
        return sum(a.size for a in self.arrow_times) + sum(m.size for m in self.mut_times)

    def site_events(self, x: int):
        """(times, kinds, payloads) at site x sorted by (time, kind)."""
        return self._merged[x]

    def global_events(self, t: float):
        """All events with time <= t as arrays sorted by (time, site, kind)."""
        times, sites, kinds, payloads = [], [], [], []
        for x in range(self.n_sites):
            et, ek, ep = self._merged[x]
            keep = et <= t
            times.append(et[keep])
            sites.append(np.full(int(keep.sum()), x, dtype=np.int64))
            kinds.append(ek[keep])
            payloads.append(ep[keep])
        times = np.concatenate(times)
        sites = np.concatenate(sites)
        kinds = np.concatenate(kinds)
        payloads = np.concatenate(payloads)
        order = np.lexsort((kinds, sites, times))
        return times[order], sites[order], kinds[order], payloads[order]


@dataclass(frozen=True)
class DualPath:
    """Backward path X^{x,t} with its first mutation mark.

    ``jumps`` holds (backward time s, new site) pairs, starting with
    (0, x); ``first_mutation_time`` is e(x, t) = t - V or inf.
    """

    start: tuple
    jumps: tuple
    first_mutation_time: float
    mutant_type: int | None

    @property
    def end_site(self) -> int:
        return self.jumps[-1][1]

    def site_at(self, s: float) -> int:
        site = self.jumps[0][1]
        for when, where in self.jumps[1:]:
            if when <= s:
                site = where
            else:
                break
        return site


def generate_log(kernel: Kernel, mu: MutationMeasure | None, T: float, seed: int) -> EventLog:
    """Sample the graphical representation on (0, T].

    Site x draws from its own Philox substream ``(seed, x)``: first the
    arrow count, times and targets, then the mutation count, times and
    marks.
    """
    if T <= 0:
        raise ValueError("horizon must be positive")
    n = kernel.n_sites
    rate_mut = 0.0 if mu is None else mu.total
    expected = n * T * (1.0 + rate_mut)
    if expected > MAX_EXPECTED_EVENTS:
        raise MemoryError(f"expected {expected:.3g} events exceeds the {MAX_EXPECTED_EVENTS:.0e} guard")
    indptr, indices, cum = kernel.csr
    mbar_cum = None
    if rate_mut > 0:
        mbar_cum = np.cumsum(normalize(mu).weights)
        mbar_cum[-1] = 1.0
    at, atg, mt, mty = [], [], [], []
    for x in range(n):
        rng = substream(seed, x)
        k = rng.poisson(T)
        times = np.sort(T * (1.0 - rng.random(k)))
        u = rng.random(k)
        row = slice(indptr[x], indptr[x + 1])
        targets = indices[row][np.searchsorted(cum[row], u, side="right").clip(max=indptr[x + 1] - indptr[x] - 1)]
        at.append(times)
        atg.append(targets.astype(np.int64))
        if rate_mut > 0:
            km = rng.poisson(rate_mut * T)
            mtimes = np.sort(T * (1.0 - rng.random(km)))
            marks = np.searchsorted(mbar_cum, rng.random(km), side="right").clip(max=mbar_cum.size - 1)
        else:
            mtimes = np.empty(0)
            marks = np.empty(0, dtype=np.int64)
        mt.append(mtimes)
        mty.append(marks.astype(np.int64))
    for arr in at + atg + mt + mty:
        arr.setflags(write=False)
    return EventLog(float(T), tuple(at), tuple(atg), tuple(mt), tuple(mty), int(seed))


def forward_voter(log: EventLog, xi0, t: float) -> np.ndarray:
    """Configuration at time t obtained by replaying the log forward."""
    if t > log.horizon:
        raise ValueError("t exceeds the log horizon")
    xi = np.array(xi0, dtype=np.int64)
    if xi.shape != (log.n_sites,):
        raise ValueError("configuration length does not match the log")
    _, sites, kinds, payloads = log.global_events(t)
    for x, kind, p in zip(sites.tolist(), kinds.tolist(), payloads.tolist()):
        xi[x] = xi[p] if kind == ARROW else p
    return xi


def _last_before(log: EventLog, site: int, key: tuple) -> int:
    """Index of the last event at ``site`` whose key is below ``key``."""
    times, kinds, _ = log.site_events(site)
    i = int(np.searchsorted(times, key[0], side="right")) - 1
    while i >= 0 and times[i] == key[0] and (site, int(kinds[i])) >= (key[1], key[2]):
        i -= 1
    return i


def backward_dual(log: EventLog, x: int, t: float) -> DualPath:
    """Follow arrows backward from (x, t), recording the first mutation mark."""
    if t > log.horizon:
        raise ValueError("t exceeds the log horizon")
    site = int(x)
    key = (float(t), math.inf, math.inf)
    jumps = [(0.0, site)]
    e = math.inf
    mark = None
    while True:
        i = _last_before(log, site, key)
        if i < 0:
            break
        times, kinds, payloads = log.site_events(site)
        when = float(times[i])
        kind = int(kinds[i])
        key = (when, site, kind)
        if kind == MUTATION:
            if mark is None:
                e = t - when
                mark = int(payloads[i])
        else:
            site = int(payloads[i])
            jumps.append((t - when, site))
    return DualPath((int(x), float(t)), tuple(jumps), e, mark)


def duality_check(log: EventLog, xi0, t: float) -> bool:
    """Exact pathwise comparison of the forward state and its dual reading."""
    xi0 = np.asarray(xi0, dtype=np.int64)
    fwd = forward_voter(log, xi0, t)
    for x in range(log.n_sites):
        path = backward_dual(log, x, t)
        expected = path.mutant_type if path.first_mutation_time <= t else int(xi0[path.end_site])
        if fwd[x] != expected:
            return False
    return True


def dual_meeting_time(a: DualPath, b: DualPath, t: float) -> float:
    """First backward time at which two dual paths share a site (inf if none by t)."""
    times = sorted({s for s, _ in a.jumps} | {s for s, _ in b.jumps})
    for s in times:
        if s <= t and a.site_at(s) == b.site_at(s):
            return s
    return math.inf


@dataclass(frozen=True)
class GapBound:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    replicas: int

    @property
    def holds(self) -> bool:
        """lhs <= rhs + 4 SE (SE combining both estimates)."""
        return self.lhs <= self.rhs + 4.0 * math.hypot(self.lhs_se, self.rhs_se)


def _check_pair_function(f: np.ndarray):
    if np.any(np.diag(f) != 0.0):
        raise ValueError("pair function must vanish on the diagonal")
    if np.any(np.abs(f) > 1.0):
        raise ValueError("pair function must be bounded by 1")


def duality_gap_bound(kernel: Kernel, mu: MutationMeasure | None, xi0, x: int, y: int,
                      f, t: float, replicas: int, rng: np.random.Generator) -> GapBound:
    """Monte-Carlo check of the two-site duality bound.

    Each replica samples the marks of the graphical construction along the
    two backward paths from (x, t) and (y, t) only; by the Poisson
    restriction property this has the law of a full log. The forward
    values come from the duality identity, the dual values from the
    endpoints, and the meeting time from the same paths.
    """
    f = np.asarray(f, dtype=float)
    _check_pair_function(f)
    if replicas < 10_000:
        raise ValueError("need at least 10^4 replicas")
    xi0 = np.asarray(xi0, dtype=np.int64)
    rate = 0.0 if mu is None else mu.total
    if rate > 0:
        mcum = np.cumsum(normalize(mu).weights)
        mcum[-1] = 1.0
    else:
        mcum = np.ones(1)
    indptr, indices, cum = kernel.csr
    ex, mx, ey, my, meet, endx, endy = _engine.two_lineage_batch(
        indptr, indices, cum, int(x), int(y), float(t), float(rate), mcum, int(replicas), rng
    )
    fx = np.where(ex <= t, mx, xi0[endx])
    fy = np.where(ey <= t, my, xi0[endy])
    diff = f[fx, fy] - f[xi0[endx], xi0[endy]]
    lhs = abs(float(diff.mean()))
    lhs_se = float(diff.std(ddof=1) / math.sqrt(replicas))
    # per-replica rhs integrand: (1 - e^{-2 m t}) 1{M > t} + 2 m (M ^ t)
    rhs_terms = (1.0 - math.exp(-2.0 * rate * t)) * (meet > t) + 2.0 * rate * np.minimum(meet, t)
    rhs = float(rhs_terms.mean())
    rhs_se = float(rhs_terms.std(ddof=1) / math.sqrt(replicas))
    return GapBound(lhs, lhs_se, rhs, rhs_se, int(replicas))


def duality_gap_from_logs(kernel: Kernel, mu: MutationMeasure | None, xi0, x: int, y: int,
                          f, t: float, seeds) -> tuple[np.ndarray, np.ndarray]:
    """Per-log samples of the forward-minus-dual difference and meeting time.

    Slow reference for :func:`duality_gap_bound` built from full logs.
    """
    f = np.asarray(f, dtype=float)
    _check_pair_function(f)
    xi0 = np.asarray(xi0, dtype=np.int64)
    diffs, meets = [], []
    for seed in seeds:
        log = generate_log(kernel, mu, t, seed)
        fwd = forward_voter(log, xi0, t)
        px = backward_dual(log, x, t)
        py = backward_dual(log, y, t)
        diffs.append(f[fwd[x], fwd[y]] - f[xi0[px.end_site], xi0[py.end_site]])
        meets.append(dual_meeting_time(px, py, t))
    return np.array(diffs), np.array(meets)


def simulate_voter(kernel: Kernel, mu: MutationMeasure | None, xi0, times,
                   replicas: int, rng: np.random.Generator) -> np.ndarray:
    """Configurations at ``times`` for independent voter-model runs.

    Direct event simulation (same law as the log construction) for the
    large replica counts of the sweeps; shape (replicas, len(times), N).
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be nonnegative and nondecreasing")
    xi0 = np.asarray(xi0, dtype=np.int64)
    rate = 0.0 if mu is None else mu.total
    if rate > 0:
        mcum = np.cumsum(normalize(mu).weights)
        mcum[-1] = 1.0
    else:
        mcum = np.ones(1)
    indptr, indices, cum = kernel.csr
    return _engine.voter_forward_batch(indptr, indices, cum, xi0, mcum, float(rate), times,
                                       int(replicas), rng)


def dump_log(log: EventLog, path) -> None:
    """Binary little-endian dump: header, then per-site event arrays."""
    buf = io.BytesIO()
    buf.write(LOG_MAGIC)
    buf.write(struct.pack("<IIdQ", LOG_VERSION, log.n_sites, log.horizon, log.seed))
    for x in range(log.n_sites):
        buf.write(struct.pack("<I", log.arrow_times[x].size))
        buf.write(log.arrow_times[x].astype("<f8").tobytes())
        buf.write(log.arrow_targets[x].astype("<u4").tobytes())
        buf.write(struct.pack("<I", log.mut_times[x].size))
        buf.write(log.mut_times[x].astype("<f8").tobytes())
        buf.write(log.mut_types[x].astype("<u4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_log(path) -> EventLog:
    data = Path(path).read_bytes()
    if data[:4] != LOG_MAGIC:
        raise ValueError("not an event-log dump")
    version, n, horizon, seed = struct.unpack_from("<IIdQ", data, 4)
    if version != LOG_VERSION:
        raise ValueError(f"unsupported log version {version}")
    off = 4 + struct.calcsize("<IIdQ")
    at, atg, mt, mty = [], [], [], []
    for _ in range(n):
        for times_list, payload_list in ((at, atg), (mt, mty)):
            (k,) = struct.unpack_from("<I", data, off)
            off += 4
            times_list.append(np.frombuffer(data, "<f8", k, off).astype(float))
            off += 8 * k
            payload_list.append(np.frombuffer(data, "<u4", k, off).astype(np.int64))
            off += 4 * k
    return EventLog(horizon, tuple(at), tuple(atg), tuple(mt), tuple(mty), int(seed))
