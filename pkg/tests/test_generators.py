import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from voterlab.generators import (
    A_mu,
    F_f,
    L_FV_phi,
    L_VM_Ff,
    L_VM_phi,
    L_VM_phi_k2,
    L_brute,
    L_mu_Ff,
    L_mu_phi,
    PairTestFunction,
    ProductTestFunction,
    c_phi,
    phi_eval,
    phi_of_config,
)
from voterlab.kernel import build_graph_family, random_kernel
from voterlab.measures import FiniteMeasure
from voterlab.typespace import MutationMeasure, discrete_space

from conftest import philox

REL = 1e-10


def close(a, b, scale):
    return abs(a - b) <= REL * max(abs(a), abs(b), scale)


def instance(seed, max_k=3):
    rng = philox(seed)
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 5))
    k = int(rng.integers(1, max_k + 1))
    q = random_kernel(n, rng)
    w = rng.random(m) * (rng.random(m) < 0.7)
    if w.sum() > 0:
        w *= 2.0 * rng.random() / w.sum()
    mu = MutationMeasure(discrete_space(m), w)
    xi = rng.integers(0, m, n)
    phi = ProductTestFunction(rng.uniform(-2, 2, (k, m)))
    pair = PairTestFunction(rng.uniform(-2, 2, (m, m)))
    return q, mu, xi, phi, pair


# ------------------------------------------------------------ evaluation


def test_phi_eval_examples():
    sp = discrete_space(2)
    lam = FiniteMeasure(sp, [0.3, 0.7])
    assert phi_eval(ProductTestFunction([[1, 1]]), lam) == 1.0
    assert phi_eval(ProductTestFunction([[1, 0], [1, 0]]), lam) == pytest.approx(0.09, abs=1e-15)
    with pytest.raises(ValueError):
        phi_eval(ProductTestFunction([[1, 0, 0]]), lam)


@given(st.integers(0, 2**32 - 1))
def test_phi_eval_naive_loop(seed):
    rng = philox(seed)
    fs = rng.uniform(-3, 3, (3, 4))
    lam = FiniteMeasure(discrete_space(4), rng.dirichlet(np.ones(4)))
    naive = 1.0
    for f in fs:
        naive *= sum(f[s] * lam.weights[s] for s in range(4))
    assert abs(phi_eval(ProductTestFunction(fs), lam) - naive) <= 1e-12


def test_order_limits():
    with pytest.raises(ValueError):
        ProductTestFunction(np.ones((17, 2)))
    with pytest.raises(ValueError):
        ProductTestFunction([[np.nan, 1.0]])
    with pytest.raises(ValueError):
        PairTestFunction(np.ones((2, 3)))


# ------------------------------------------------------------------ A_mu


def test_A_mu_examples():
    sp = discrete_space(3)
    f = np.array([1.0, -2.0, 0.5])
    mu = MutationMeasure(sp, [0.4, 0.0, 0.9])
    assert np.allclose(A_mu(mu, np.full(3, 2.5)), 0.0)
    single = MutationMeasure(sp, [0.0, 1.0, 0.0])
    assert np.allclose(A_mu(single, f), f[1] - f)
    assert np.allclose(A_mu(mu.scaled(3.0), f), 3.0 * A_mu(mu, f))


# --------------------------------------------------- closed forms vs oracle


@given(st.integers(0, 2**32 - 1))
def test_product_forms_match_brute_force(seed):
    q, mu, xi, phi, _ = instance(seed)
    F = phi_of_config(phi, q.pi)
    b_all, s_all = L_brute(q, mu, F, xi, return_scale=True)
    b_vm, s_vm = L_brute(q, None, F, xi, return_scale=True)
    vm = L_VM_phi(q, phi, xi)
    lm = L_mu_phi(mu, q.pi, phi, xi)
    assert close(vm, b_vm, s_vm)
    assert close(vm + lm, b_all, s_all)


@given(st.integers(0, 2**32 - 1))
def test_pair_forms_match_brute_force(seed):
    q, mu, xi, _, pair = instance(seed)
    F = lambda c: F_f(pair, q.pi, c)
    b_all, s_all = L_brute(q, mu, F, xi, return_scale=True)
    b_vm, s_vm = L_brute(q, None, F, xi, return_scale=True)
    vm = L_VM_Ff(q, pair, xi)
    assert close(vm, b_vm, s_vm)
    assert close(vm + L_mu_Ff(mu, q.pi, pair, xi), b_all, s_all)


@given(st.integers(0, 2**32 - 1))
def test_first_order_cases(seed):
    q, mu, xi, phi, _ = instance(seed)
    phi1 = ProductTestFunction(phi.fs[:1])
    assert L_VM_phi(q, phi1, xi) == 0.0
    lam = np.bincount(xi, weights=q.pi, minlength=phi.fs.shape[1])
    expected = float(A_mu(mu, phi1.fs[0]) @ lam)
    assert close(L_mu_phi(mu, q.pi, phi1, xi), expected, float(np.abs(A_mu(mu, phi1.fs[0])) @ lam))
    F = phi_of_config(phi1, q.pi)
    b, s = L_brute(q, mu, F, xi, return_scale=True)
    assert close(b, expected, s)


@given(st.integers(0, 2**32 - 1))
def test_second_order_display(seed):
    q, _, xi, _, _ = instance(seed)
    phi = ProductTestFunction(philox(seed + 1).uniform(-1, 1, (2, int(xi.max()) + 1)))
    a, b = L_VM_phi_k2(q, phi, xi), L_VM_phi(q, phi, xi)
    assert close(a, b, abs(a))
    with pytest.raises(ValueError):
        L_VM_phi_k2(q, ProductTestFunction(phi.fs[:1]), xi)


@given(st.integers(0, 2**32 - 1))
def test_monochromatic_and_zero_mutation(seed):
    q, mu, xi, phi, pair = instance(seed)
    mono = np.full_like(xi, xi[0])
    assert L_VM_phi(q, phi, mono) == 0.0
    assert L_VM_Ff(q, pair, mono) == 0.0
    zero = MutationMeasure.zero(mu.space)
    assert L_mu_phi(zero, q.pi, phi, xi) == 0.0
    assert L_mu_Ff(zero, q.pi, pair, xi) == 0.0
    assert L_VM_Ff(q, PairTestFunction(np.zeros_like(pair.f)), xi) == 0.0


def test_pair_mutation_monochromatic():
    sp = discrete_space(3)
    rng = philox(3)
    q = random_kernel(4, rng)
    f = rng.uniform(-1, 1, (3, 3))
    f = f + f.T
    np.fill_diagonal(f, 0.0)
    mu = MutationMeasure(sp, [0.3, 0.0, 0.5])
    xi = np.zeros(4, dtype=int)
    # the first sum vanishes; second and third leave 2 (1 - pi_diag) <f(sigma0, .), mu>
    expected = 2.0 * (1.0 - q.pi_diag) * float(f[0] @ mu.weights)
    assert L_mu_Ff(mu, q.pi, PairTestFunction(f), xi) == pytest.approx(expected, abs=1e-14)


def test_brute_constant_functional():
    q, mu, xi, _, _ = instance(4)
    assert L_brute(q, mu, lambda c: 3.7, xi) == 0.0


# ---------------------------------------------------------------- C_phi


@given(st.integers(0, 2**32 - 1))
def test_c_phi_bound(seed):
    q, _, xi, phi, _ = instance(seed, max_k=4)
    disagree = sum(q.pi[x] ** 2 * q.q[x, y]
                   for x in range(xi.size) for y in range(xi.size) if xi[x] != xi[y])
    assert abs(L_VM_phi(q, phi, xi)) <= c_phi(phi) * disagree * (1 + 1e-12)


@pytest.mark.parametrize("n", [50, 200])
def test_power_of_two_constant_is_not_a_bound_at_order_three(n):
    # one dissenting site among n on K_n, f_i = +-1: the |A| = 2 terms give ~12
    q = build_graph_family("complete", n)
    phi = ProductTestFunction([[1.0, -1.0]] * 3)
    xi = np.zeros(n, dtype=int)
    xi[0] = 1
    disagree = sum(q.pi[x] ** 2 * q.q[x, y] for x in range(n) for y in range(n) if xi[x] != xi[y])
    ratio = abs(L_VM_phi(q, phi, xi)) / disagree
    assert ratio > 2**3
    assert ratio <= c_phi(phi)


# ------------------------------------------------------------ Fleming-Viot


def test_fv_examples():
    sp = discrete_space(3)
    lam = FiniteMeasure(sp, [0.2, 0.5, 0.3])
    assert L_FV_phi(None, ProductTestFunction([[1.0, 2.0, 3.0]]), lam) == 0.0
    point = FiniteMeasure.point_mass(sp, 1)
    assert L_FV_phi(None, ProductTestFunction(np.ones((3, 3)) * [1, 2, 3]), point) == 0.0
    p = 0.3
    lam2 = FiniteMeasure(discrete_space(2), [p, 1 - p])
    ind = ProductTestFunction([[1.0, 0.0], [1.0, 0.0]])
    assert L_FV_phi(None, ind, lam2) == pytest.approx(p - p * p, abs=1e-15)


@given(st.integers(0, 2**32 - 1))
def test_fv_variance_form(seed):
    rng = philox(seed)
    m = int(rng.integers(1, 6))
    lam = FiniteMeasure(discrete_space(m), rng.dirichlet(np.ones(m)))
    f = rng.uniform(-2, 2, m)
    var = float(lam.weights @ f**2 - (lam.weights @ f) ** 2)
    assert L_FV_phi(None, ProductTestFunction([f, f]), lam) == pytest.approx(var, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_fv_generator_first_order_is_drift(seed):
    rng = philox(seed)
    m = 4
    sp = discrete_space(m)
    lam = FiniteMeasure(sp, rng.dirichlet(np.ones(m)))
    mu = MutationMeasure(sp, rng.random(m))
    f = rng.uniform(-1, 1, m)
    assert L_FV_phi(mu, ProductTestFunction([f]), lam) == pytest.approx(float(A_mu(mu, f) @ lam.weights),
                                                                        abs=1e-13)


def test_fv_limit_of_voter_generator_on_complete_graph():
    """On K_N with mu_N = mu / gamma_N, gamma_N * L_N (phi o m) tends to L_FV phi.

    Checked on configurations realising a fixed empirical measure.
    """
    sp = discrete_space(2)
    mu = MutationMeasure(sp, [0.4, 0.6])
    phi = ProductTestFunction([[1.0, -0.5], [0.3, 2.0]])
    errs = []
    for n in (20, 80, 320):
        q = build_graph_family("complete", n)
        gamma = (n - 1) ** 2 / (2 * n)
        xi = np.array([0] * (n // 4) + [1] * (n - n // 4))
        lam = FiniteMeasure(sp, np.bincount(xi, weights=q.pi, minlength=2))
        voter = gamma * (L_VM_phi(q, phi, xi) + L_mu_phi(mu.scaled(1 / gamma), q.pi, phi, xi))
        errs.append(abs(voter - L_FV_phi(mu, phi, lam)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.02
