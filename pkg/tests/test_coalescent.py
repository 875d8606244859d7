import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from voterlab.coalescent import (
    CoalescingSystem,
    GammaTooLarge,
    block_hitting_batch,
    block_hitting_times,
    coalescing_partitions,
    expected_meeting_matrix,
    gamma_exact,
    gamma_mc,
    gamma_mc_detail,
    kingman_tail_sample,
    kingman_tail_samples,
    kingman_truncation,
    meeting_tail_profile,
    meeting_time_sample,
    meeting_times,
    run_until,
)
from voterlab.kernel import build_graph_family, random_kernel, semigroup

from conftest import philox


def complete(n):
    return build_graph_family("complete", n)


# ------------------------------------------------------------- run_until


def test_single_walker_marginal():
    q = random_kernel(5, philox(1))
    rng = philox(2)
    ends = np.empty(100_000, dtype=int)
    for r in range(ends.size):
        ends[r] = run_until(CoalescingSystem.from_sites(q, [3]), 0.7, rng).walkers[3]
    emp = np.bincount(ends, minlength=5) / ends.size
    assert 0.5 * np.abs(emp - semigroup(q, 0.7)[3]).sum() < 0.01


def test_same_site_walkers_start_merged():
    q = random_kernel(4, philox(3))
    sys_ = CoalescingSystem(q, {"a": 2, "b": 2, "c": 0})
    assert sys_.block_count == 2
    assert sorted(sys_.block_of("a")) == ["a", "b"]
    with pytest.raises(ValueError):
        run_until(run_until(sys_, 1.0, philox(1)), 0.5, philox(1))


@given(st.integers(0, 2**32 - 1))
def test_block_count_nonincreasing(seed):
    q = random_kernel(7, philox(seed))
    rng = philox(seed + 1)
    sys_ = CoalescingSystem.from_sites(q)
    counts = [sys_.block_count]
    for t in np.linspace(0.2, 6, 15):
        run_until(sys_, t, rng)
        counts.append(sys_.block_count)
        sites = sys_.block_sites()
        assert len(set(sites)) == len(sites)
    assert all(b <= a for a, b in zip(counts, counts[1:]))


@given(st.integers(0, 2**32 - 1), st.permutations(list("abcdef")))
def test_label_exchangeability(seed, perm):
    q = random_kernel(6, philox(seed))
    base = CoalescingSystem(q, {lab: i for i, lab in enumerate("abcdef")})
    relabel = dict(zip("abcdef", perm))
    other = CoalescingSystem(q, {relabel[lab]: i for i, lab in enumerate("abcdef")})
    run_until(base, 2.0, philox(seed + 7))
    run_until(other, 2.0, philox(seed + 7))
    mapped = sorted(sorted(relabel[l] for l in b) for b in base.partition)
    assert mapped == sorted(sorted(b) for b in other.partition)


# --------------------------------------------------------- meeting times


def test_meeting_same_site_is_zero():
    t, censored = meeting_time_sample(complete(5), 2, 2, philox(1), cap=10.0)
    assert t == 0.0 and not censored


def test_meeting_censoring():
    t, censored = meeting_time_sample(build_graph_family("cycle", 40), 0, 20, philox(1), cap=1e-3)
    assert censored and t == pytest.approx(1e-3)


def test_meeting_complete_exponential():
    n = 50
    xs = np.zeros(100_000, dtype=np.int64)
    ys = np.ones(100_000, dtype=np.int64)
    times, censored = meeting_times(complete(n), xs, ys, philox(4), math.inf)
    assert not censored.any()
    ks = stats.kstest(times, "expon", args=(0, (n - 1) / 2)).statistic
    assert ks < 0.02


def test_meeting_mean_matches_linear_solve():
    for seed in range(3):
        q = random_kernel(6, philox(10 + seed))
        h = expected_meeting_matrix(q)
        reps = 20_000
        times, _ = meeting_times(q, np.zeros(reps, np.int64), np.full(reps, 3, np.int64), philox(20 + seed),
                                 math.inf)
        assert abs(times.mean() - h[0, 3]) <= 3.5 * times.std() / math.sqrt(reps)


# ---------------------------------------------------------------- gamma


def test_gamma_examples():
    assert gamma_exact(complete(2)) == pytest.approx(0.25, abs=1e-12)
    for n in (3, 10, 57):
        assert gamma_exact(complete(n)) == pytest.approx((n - 1) ** 2 / (2 * n), abs=1e-9)


def test_gamma_residual_and_symmetry():
    q = random_kernel(7, philox(5))
    h = expected_meeting_matrix(q)
    assert np.allclose(np.diag(h), 0)
    assert np.allclose(h, h.T, atol=1e-9)
    off = ~np.eye(7, dtype=bool)
    resid = 2 * h - q.q @ h - h @ q.q.T - 1
    assert np.max(np.abs(resid[off])) <= 1e-10


def test_gamma_iterative_path_matches_closed_form():
    # sizes large enough to skip the dense solve
    n = 120
    assert gamma_exact(complete(n)) == pytest.approx((n - 1) ** 2 / (2 * n), abs=1e-8)
    # cycle: h(x, y) = d (n - d) / 2 at distance d, pi uniform
    n = 90
    d = np.arange(n)
    assert gamma_exact(build_graph_family("cycle", n)) == pytest.approx(float(np.mean(d * (n - d) / 2)), rel=1e-9)


def test_gamma_guard():
    with pytest.raises(GammaTooLarge):
        gamma_exact(build_graph_family("cycle", 1001))


def test_gamma_mc_cycle_four():
    est, se = gamma_mc(build_graph_family("cycle", 4), 100_000, philox(6))
    assert abs(est - gamma_exact(build_graph_family("cycle", 4))) <= 3 * se


def test_gamma_mc_includes_diagonal_starts():
    est, se, censored = gamma_mc_detail(complete(2), 40_000, philox(7))
    assert censored == 0
    assert abs(est - 0.25) <= 3 * se
    with pytest.raises(ValueError):
        gamma_mc(complete(2), 999, philox(7))


# ---------------------------------------------------------- tail profile


def test_tail_profile_complete():
    n = 30
    k = complete(n)
    gamma = gamma_exact(k)
    prof = meeting_tail_profile(k, gamma, [0.0, 1.0], 50_000, philox(8))
    a = (n - 1) / n
    assert prof.tail[0] == pytest.approx(a * a, abs=1e-12)
    assert abs(prof.tail[1] - a * a * math.exp(-a)) <= 3.5 * prof.tail_se[1]
    assert abs(prof.integral[1] - a * -math.expm1(-a)) <= 3.5 * prof.integral_se[1]
    assert prof.integral[0] == 0.0


def test_tail_distance_to_exponential_shrinks():
    dists = []
    grid = np.linspace(0, 3, 31)
    for n in (8, 16, 32, 64):
        k = complete(n)
        prof = meeting_tail_profile(k, gamma_exact(k), grid, 100_000, philox(n))
        dists.append(np.max(np.abs(prof.tail - np.exp(-grid))))
    assert all(b < a for a, b in zip(dists, dists[1:]))


# -------------------------------------------------------- block hitting


def test_block_hitting_basics():
    k = complete(12)
    times, censored = block_hitting_times(k, [12, 6, 3, 2, 1], philox(9))
    assert times[0] == 0.0 and not censored.any()
    assert np.all(np.diff(times) >= 0)
    with pytest.raises(ValueError):
        block_hitting_batch(k, [13], 1, philox(1))


def test_block_hitting_censoring():
    hits = block_hitting_batch(build_graph_family("cycle", 30), [1], 20, philox(10), cap=1.0)
    assert np.all(np.isnan(hits))


def test_block_hitting_complete_means():
    n = 40
    k = complete(n)
    hits = block_hitting_batch(k, [1, 2, 5], 20_000, philox(11))
    for col, j in enumerate((1, 2, 5)):
        # inter-count times are Exponential(m (m - 1) / (n - 1)) from m = n down to j + 1
        mean = sum((n - 1) / (m * (m - 1)) for m in range(j + 1, n + 1))
        assert abs(hits[:, col].mean() - mean) <= 4 * hits[:, col].std() / math.sqrt(20_000)


def test_block_medians_bounded_in_n():
    medians = []
    for n in (16, 64, 256):
        k = complete(n)
        g = gamma_exact(k)
        medians.append(float(np.median(block_hitting_batch(k, [2], 2000, philox(n))[:, 0] / g)))
    assert max(medians) < 1.5 and min(medians) > 0.4


def test_partitions_complete_pair_law():
    n = 6
    k = complete(n)
    reps = coalescing_partitions(k, 0.5, 40_000, philox(12))
    together = np.mean(reps[:, 0] == reps[:, 1])
    exact = -math.expm1(-0.5 * 2 / (n - 1))
    assert abs(together - exact) <= 4 * math.sqrt(exact * (1 - exact) / 40_000)


# ------------------------------------------------------------- Kingman


def test_kingman_truncation():
    assert kingman_truncation(1e-4) == 20001
    assert 2 / kingman_truncation(1e-4) < 1e-4


def test_kingman_tail_moments():
    s = kingman_tail_sample(1, philox(13), size=100_000)
    assert np.all(s > 0)
    assert abs(s.mean() - 2.0) <= 3 * s.std() / math.sqrt(s.size)
    var_exact = sum((2 / (i * (i - 1))) ** 2 for i in range(2, 200_000))
    assert var_exact == pytest.approx(4 * (math.pi**2 / 3 - 3), rel=1e-6)
    assert abs(s.var() / var_exact - 1) < 0.05


def test_kingman_tail_columns_ordered():
    s = kingman_tail_samples([5, 1, 2], 1000, philox(14))
    assert np.all(s[:, 1] >= s[:, 2]) and np.all(s[:, 2] >= s[:, 0])
    assert isinstance(kingman_tail_sample(3, philox(1)), float)
