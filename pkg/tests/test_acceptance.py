"""End-to-end acceptance criteria; each test prints one CRITERION line."""

import math
import time

import numpy as np
import pytest
from scipy import stats

from voterlab.cli.config import parse_text
from voterlab.cli.suites import RUNNERS, RunContext, SuiteAbort
from voterlab.coalescent import (
    block_hitting_batch,
    gamma_exact,
    gamma_mc,
    kingman_tail_samples,
    meeting_tail_profile,
)
from voterlab.graphical import simulate_voter, substream
from voterlab.kernel import build_graph_family, random_kernel
from voterlab.measures import prohorov, rho_a
from voterlab.typespace import TypeSpace

from test_measures import colliding, measure, random_prob, random_space

pytestmark = pytest.mark.acceptance

SEED = 20240601


def report(n, ok, budget, elapsed, detail):
    ok = ok and elapsed < budget
    print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} [{elapsed:.1f}s / {budget:.0f}s] {detail}")
    return ok


def run_suite(text):
    cfg = parse_text(text)
    ctx = RunContext(cfg, SEED, 1, None, False)
    try:
        return RUNNERS[cfg.suite](ctx), None
    except SuiteAbort as exc:
        return None, str(exc)


def rng(*key):
    return substream(SEED, 99, *key)


def test_criterion_1_pathwise_duality():
    t0 = time.perf_counter()
    res, abort = run_suite("suite = duality\nfamily = weighted_er\nsizes = [8]\nreplicas = 10000\n"
                           "instances = 10000\nbound_instances = 0\nmax_sites = 8\nmax_types = 4\n"
                           "t_max = 5.0\nmu_max = 1.0\n")
    el = time.perf_counter() - t0
    ok = abort is None and res.metrics["pass_count"] == 10_000
    detail = abort or f"{res.metrics['pass_count']}/10000 exact matches"
    assert report(1, ok, 60, el, detail)


def test_criterion_2_generator_oracles():
    t0 = time.perf_counter()
    res, abort = run_suite("suite = generators\nfamily = weighted_er\nsizes = [6]\nreplicas = 1\n"
                           "instances = 1000\n")
    el = time.perf_counter() - t0
    ok = abort is None and res.metrics["pass_count"] == 1000
    detail = abort or f"{res.metrics['pass_count']}/1000 at relative tolerance 1e-10"
    assert report(2, ok, 60, el, detail)


def test_criterion_3_meeting_scale():
    t0 = time.perf_counter()
    worst = max(abs(gamma_exact(build_graph_family("complete", n)) - (n - 1) ** 2 / (2 * n))
                for n in range(2, 201))
    z = []
    for i in range(10):
        q = random_kernel(8, rng(3, i))
        est, se = gamma_mc(q, 100_000, rng(3, 100 + i))
        z.append(abs(est - gamma_exact(q)) / se)
    el = time.perf_counter() - t0
    ok = worst <= 1e-8 and max(z) <= 3
    assert report(3, ok, 120, el, f"max |gamma_exact - closed form| = {worst:.2e}; "
                                  f"max MC z-score = {max(z):.2f}")


def test_criterion_4_exponential_limit():
    t0 = time.perf_counter()
    n = 100
    q = build_graph_family("complete", n)
    grid = np.array([0.5, 1.0, 2.0])
    prof = meeting_tail_profile(q, gamma_exact(q), grid, 100_000, rng(4))
    a = (n - 1) / n
    tail_z = np.abs(prof.tail - a * a * np.exp(-grid * a)) / prof.tail_se
    int_z = np.abs(prof.integral - -np.expm1(-grid)) / prof.integral_se
    el = time.perf_counter() - t0
    ok = bool(np.all(tail_z <= 3) and np.all(int_z <= 3))
    assert report(4, ok, 300, el,
                  "tail z = " + ", ".join(f"{v:.2f}" for v in tail_z)
                  + "; integral vs 1-e^-t z = " + ", ".join(f"{v:.2f}" for v in int_z))


def test_criterion_5_block_count_limit():
    t0 = time.perf_counter()
    n, reps = 500, 10_000
    q = build_graph_family("complete", n)
    g = gamma_exact(q)
    js = [1, 2, 5]
    hits = block_hitting_batch(q, js, reps, rng(5, 0))
    ref = kingman_tail_samples(js, reps, rng(5, 1))
    ks = [float(stats.ks_2samp(hits[:, c] / g, ref[:, c]).statistic) for c in range(3)]
    el = time.perf_counter() - t0
    ok = not np.isnan(hits).any() and max(ks) < 0.03
    assert report(5, ok, 600, el, "KS " + ", ".join(f"j={j}: {k:.4f}" for j, k in zip(js, ks)))


def diversity_at_one(n, reps):
    q = build_graph_family("complete", n)
    cfgs = simulate_voter(q, None, np.arange(n), [gamma_exact(q)], reps, rng(6, n))[:, 0]
    div = np.array([np.sum((np.bincount(c, minlength=n) / n) ** 2) for c in cfgs])
    return div.mean(), div.std(ddof=1) / math.sqrt(reps)


def test_criterion_6_diversity_limit():
    t0 = time.perf_counter()
    target = 1 - math.exp(-1)
    rows = []
    for n in (128, 256):
        m, se = diversity_at_one(n, 4000)
        rows.append((n, abs(m - target), se, max(3 * se, 2 / n)))
    el = time.perf_counter() - t0
    within = all(err <= tol for _, err, _, tol in rows)
    (_, e1, s1, _), (_, e2, s2, _) = rows
    decreasing = e2 <= e1 + 2 * math.hypot(s1, s2)
    assert report(6, within and decreasing, 600, el,
                  "; ".join(f"N={n}: |err| {e:.5f} (tol {t:.5f})" for n, e, _, t in rows)
                  + f"; decreasing={decreasing}")


def test_criterion_7_duality_bound():
    t0 = time.perf_counter()
    res, abort = run_suite("suite = duality\nfamily = weighted_er\nsizes = [5]\nreplicas = 10000\n"
                           "instances = 1\nbound_instances = 100\nbound_replicas = 10000\n")
    el = time.perf_counter() - t0
    ok = abort is None and res.metrics["bound_pass"] == 100
    detail = abort or f"{res.metrics['bound_pass']}/100 instances with lhs <= rhs + 4 SE"
    assert report(7, ok, 300, el, detail)


def test_criterion_8_metric_correctness():
    t0 = time.perf_counter()
    worst_tri, sym_ok = 0.0, True
    for i in range(1000):
        r = rng(8, i)
        m = int(r.integers(2, 7))
        sp = random_space(r, m)
        lam, nu, eta = (measure(sp, random_prob(r, m)) for _ in range(3))
        sym_ok &= rho_a(lam, nu) == rho_a(nu, lam)
        worst_tri = max(worst_tri, rho_a(lam, eta) - rho_a(lam, nu) - rho_a(nu, eta))
    seq = [(prohorov(*colliding(m)), rho_a(*colliding(m))) for m in (2, 8, 64, 1024, 2**16)]
    el = time.perf_counter() - t0
    p_last, r_last = seq[-1]
    collide_ok = (all(b[0] < a[0] for a, b in zip(seq, seq[1:])) and p_last < 1e-4
                  and abs(r_last - 0.5) < 1e-4)
    ok = sym_ok and worst_tri <= 1e-9 and collide_ok
    assert report(8, ok, 60, el, f"symmetry exact={sym_ok}; worst triangle excess {worst_tri:.2e}; "
                                 f"colliding: prohorov {p_last:.2e}, rho_a {r_last:.6f}")


def test_criterion_9_martingale_flatness():
    t0 = time.perf_counter()
    n, reps = 128, 10_000
    q = build_graph_family("complete", n)
    grid = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 3.0])
    f = rng(9, 0).uniform(-1, 1, n)
    xi0 = np.arange(n)
    cfgs = simulate_voter(q, None, xi0, gamma_exact(q) * grid, reps, rng(9, 1))
    vals = f[cfgs].mean(axis=2)
    start = float(f.mean())
    se = vals.std(axis=0, ddof=1) / math.sqrt(reps)
    z = np.abs(vals.mean(axis=0) - start)[1:] / se[1:]
    el = time.perf_counter() - t0
    ok = bool(np.all(z <= 3) and np.all(vals[:, 0] == start))
    assert report(9, ok, 300, el, "z = " + ", ".join(f"{v:.2f}" for v in z))
