import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsindy.bias import (
    MAX_SUBSET_SUPPORT,
    critical_noise_bounds,
    exact_critical_noise,
    gaussian_moment_block,
    gaussian_moment_inverse,
    gaussian_moments,
    general_moment_block,
    general_moment_inverse,
    general_moment_inverse_factor,
    induced_bias_terms,
    moment_matrix,
    moment_norm_bounds_check,
    mstls_critical_bounds,
    mu_star,
    predict_continuum_coefficients,
    trig_multiplier,
    uniform_moments,
)
from wsindy.errors import BudgetError, InvalidArgument, SingularBiasError
from wsindy.harness import SYSTEMS
from wsindy.sparsereg import threshold_feasibility
from wsindy.weaksys import LibrarySpec, graded_lex_exponents, weights_from_terms


def test_gaussian_block_examples():
    A = gaussian_moment_block(4, 1.0)
    assert A[0, 4] == 3.0 and A[2, 4] == 6.0
    np.testing.assert_array_equal(np.diag(A), 1.0)
    assert np.all(np.tril(A, -1) == 0)
    for k in (1, 3):
        assert np.all(np.diag(A, k) == 0)
    np.testing.assert_array_equal(gaussian_moment_block(5, 0.0), np.eye(6))


def test_product_block_entry():
    exps = graded_lex_exponents(2, 3)
    A = gaussian_moment_block(3, 0.4, n=2)
    col = exps.index((2, 1))
    assert A[exps.index((0, 1)), col] == pytest.approx(0.16)
    assert A[exps.index((2, 1)), col] == 1.0
    assert A[exps.index((1, 1)), col] == 0.0


def test_product_block_monte_carlo():
    rng = np.random.default_rng(0)
    sigma, n = 0.4, 10**6
    u = np.array([0.7, -1.3])
    x = u + sigma * rng.standard_normal((n, 2))
    exps = graded_lex_exponents(2, 3)
    A = gaussian_moment_block(3, sigma, n=2)
    for c, e in enumerate(exps):
        samples = x[:, 0] ** e[0] * x[:, 1] ** e[1]
        pred = sum(A[r, c] * u[0] ** ei[0] * u[1] ** ei[1] for r, ei in enumerate(exps))
        assert abs(samples.mean() - pred) <= 4 * samples.std() / math.sqrt(n)


@pytest.mark.parametrize("n", [1, 2])
def test_closed_form_inverse(n):
    for p in range(11):
        for sigma in (0.1, 0.5, 1.0):
            A, Ai = gaussian_moment_block(p, sigma, n), gaussian_moment_inverse(p, sigma, n)
            assert np.abs(A @ Ai - np.eye(len(A))).max() <= 1e-10
            assert np.abs(Ai - np.linalg.inv(A)).max() <= 1e-8 * max(1, np.abs(Ai).max())


def test_inverse_cubic_entry():
    sigma = 0.37
    Ai = gaussian_moment_inverse(3, sigma)
    assert Ai[1, 3] == pytest.approx(-3 * sigma**2, rel=1e-14)


def test_general_recurrence_gaussian_signs():
    f = general_moment_inverse_factor(gaussian_moments(0.6, 10))
    for q in range(0, 11, 2):
        assert f[q] == pytest.approx((-1) ** (q // 2), rel=1e-12)
    assert np.all(f[1::2] == 0)


@pytest.mark.parametrize("p", [2, 4, 6, 8])
def test_general_recurrence_uniform(p):
    M = uniform_moments(0.8, p)
    A = general_moment_block(M, p)
    np.testing.assert_allclose(general_moment_inverse(M, p), np.linalg.inv(A), atol=1e-10)


def test_general_recurrence_errors_and_undefined():
    with pytest.raises(InvalidArgument):
        general_moment_inverse_factor([2.0, 0.0])
    # an asymmetric sequence with a vanishing moment leaves that factor undefined
    f = general_moment_inverse_factor([1.0, 0.0, 0.0, 1.0])
    assert f[1] == 0 and math.isnan(f[2]) is False and np.isnan(f).sum() <= 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.1, 2.0), min_size=3, max_size=5))
def test_general_recurrence_custom_even_moments(even):
    M = [1.0]
    for e in even:
        M += [0.0, e]
    p = len(M) - 1
    A = general_moment_block(M, p)
    Ai = general_moment_inverse(M, p)
    np.testing.assert_allclose(A @ Ai, np.eye(p + 1), atol=1e-8 * max(1, np.abs(Ai).max()))


def test_trig_multiplier():
    assert trig_multiplier(0.0, "gaussian", 3.0) == 1.0
    om = 5.0
    assert trig_multiplier(om, "gaussian", 0.14 / om) >= 0.99
    a = 0.5
    assert abs(trig_multiplier(math.pi / a, "uniform", a / math.sqrt(3))) <= 1e-15
    assert trig_multiplier([1.0, 2.0], "gaussian", 0.3) == pytest.approx(
        trig_multiplier(1.0, "gaussian", 0.3) * trig_multiplier(2.0, "gaussian", 0.3))
    with pytest.raises(InvalidArgument):
        trig_multiplier(1.0, "cauchy", 1.0)


def test_trig_monte_carlo():
    rng = np.random.default_rng(1)
    sigma, om, n = 0.5, 2.0, 10**6
    for u in (-1.0, 0.3, 2.0):
        x = np.cos(om * (u + sigma * rng.standard_normal(n)))
        assert abs(x.mean() - trig_multiplier(om, "gaussian", sigma) * np.cos(om * u)) <= 4 * x.std() / 1e3


def test_singular_trig_multiplier():
    a = 1.0
    lib = LibrarySpec(1, 1, ((1,), (0,)), trig_frequencies=((math.pi / a,),))
    mm = moment_matrix(lib, a / math.sqrt(3), "uniform")
    assert mm.A_inv is None
    with pytest.raises(SingularBiasError):
        predict_continuum_coefficients(np.zeros(lib.n_columns), mm)


def test_predict_identity_at_zero_noise():
    for name in SYSTEMS:
        spec = SYSTEMS[name]
        w = spec.true_weights()
        np.testing.assert_array_equal(predict_continuum_coefficients(w, moment_matrix(spec.library, 0.0)), w)


def test_cubic_oscillator_spurious_linear_terms():
    spec = SYSTEMS["cubic_oscillator"]
    lab = spec.library.column_index().labels()
    w = spec.true_weights()
    sigma = 0.2
    wb = predict_continuum_coefficients(w, moment_matrix(spec.library, sigma))
    # u^3 * rho = u^3 + 3 sigma^2 u, so A^-1 maps u^3 -> u^3 - 3 sigma^2 u
    assert wb[lab.index("u2"), 0] == pytest.approx(-6 * sigma**2, rel=1e-12)
    assert wb[lab.index("u1"), 0] == pytest.approx(0.3 * sigma**2, rel=1e-12)
    assert wb[lab.index("u1"), 1] == pytest.approx(6 * sigma**2, rel=1e-12)
    assert wb[lab.index("u2"), 1] == pytest.approx(0.3 * sigma**2, rel=1e-12)


def test_burgers_induced_pattern():
    spec = SYSTEMS["burgers_nl"]
    lab = spec.library.column_index().labels()
    w = spec.true_weights()[:, 0]
    sigma = 0.3
    mm = moment_matrix(spec.library, sigma)
    d = induced_bias_terms(w, mm)
    assert d[lab.index("u1")] == pytest.approx(-3 * sigma**2, abs=1e-12)
    assert d[lab.index("1")] == pytest.approx(2 * sigma**2, abs=1e-12)
    others = np.delete(d, [lab.index("u1"), lab.index("1")])
    assert np.abs(others).max() <= 1e-12
    wb = predict_continuum_coefficients(w, mm)
    np.testing.assert_allclose(wb - w, -d, atol=1e-12)


def test_case_i_no_bias():
    spec = SYSTEMS["hyper_ks"]
    w = spec.true_weights()
    wb = predict_continuum_coefficients(w, moment_matrix(spec.library, 0.7))
    np.testing.assert_allclose(wb, w, atol=1e-12)


def test_critical_noise_bounds():
    lib = SYSTEMS["lorenz"].library
    lin = weights_from_terms(lib, [{((0,), (1, 0, 0)): 1.0}, {}, {}])
    assert critical_noise_bounds(lin, lib)[:2] == (math.inf, math.inf)
    cub = weights_from_terms(lib, [{((0,), (3, 0, 0)): 1.0, ((0,), (0, 1, 0)): -1.0}, {}, {}])
    lo, hi, case = critical_noise_bounds(cub, lib)
    assert case == "case (ii)"
    assert lo == pytest.approx(1 / (6 * math.e)) and hi == pytest.approx(1 / 3)
    spec = SYSTEMS["hyper_ks"]
    assert critical_noise_bounds(spec.true_weights(), spec.library)[2] == "case (i)"
    with pytest.raises(InvalidArgument):
        critical_noise_bounds(np.zeros(lib.n_columns), lib)


def test_square_term_is_not_bias_free():
    lib = LibrarySpec(1, 2, ((1,), (0,)))
    w = weights_from_terms(lib, [{((0,), (2,)): 1.0}])
    assert critical_noise_bounds(w, lib)[2] == "case (ii)"


def test_exact_flip_cubic_oscillator():
    spec = SYSTEMS["cubic_oscillator"]
    w = spec.true_weights()
    sc = exact_critical_noise(w, spec.library)
    assert sc == pytest.approx(math.sqrt(0.1 / 6), rel=1e-6)
    lo, hi, _ = critical_noise_bounds(w, spec.library)
    assert lo <= sc**2 <= hi
    for s, sign in ((0.5 * sc, 1), (2 * sc, -1)):
        wb = predict_continuum_coefficients(w, moment_matrix(spec.library, s))
        d1 = min(threshold_feasibility(wb[:, c], np.flatnonzero(w[:, c])) for c in range(2))
        assert sign * d1 > 0


def test_mstls_critical_bounds():
    lib = LibrarySpec(1, 3, ((1,), (0,)))
    J = lib.n_columns
    G = np.linalg.qr(np.random.default_rng(2).normal(size=(30, J)))[0]
    w = weights_from_terms(lib, [{((0,), (3,)): 1.5}])[:, 0]
    lo, hi = mstls_critical_bounds(G, w, lib)
    assert lo == pytest.approx(min(1 / J, 0.5) / (3 * math.e), rel=1e-12)
    assert hi == pytest.approx(1 / 3) and lo <= hi
    spec = SYSTEMS["hyper_ks"]
    G = np.eye(spec.library.n_columns)
    assert mstls_critical_bounds(G, spec.true_weights(), spec.library) == (math.inf, math.inf)


def _mu_oracle(G, b, Sstar, J):
    best = math.inf
    for size in range(1, len(Sstar)):
        for S in itertools.combinations(Sstar, size):
            keep = [c for c in Sstar if c not in S]
            Gk = G[:, keep]
            P = Gk @ np.linalg.pinv(Gk)
            r = b - P @ b
            best = min(best, np.linalg.norm(r) / np.linalg.norm(b) - (size + 1) / J)
    return best


def test_mu_star_orthonormal_pair():
    G = np.linalg.qr(np.random.default_rng(3).normal(size=(40, 20)))[0]
    b = 2.0 * (G[:, 4] + G[:, 9])
    mu = mu_star(G, b, [4, 9], 20)
    assert mu == pytest.approx(1 / math.sqrt(2) - 2 / 20, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 6), st.integers(8, 40))
def test_mu_star_matches_projection_oracle(seed, s, J):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(50, J))
    Sstar = sorted(rng.choice(J, size=s, replace=False))
    b = G[:, Sstar] @ rng.normal(size=s)
    assert mu_star(G, b, Sstar, J) == pytest.approx(_mu_oracle(G, b, Sstar, J), abs=1e-10)
    # larger libraries only shrink the sparsity penalty
    assert mu_star(G, b, Sstar, 2 * J) >= mu_star(G, b, Sstar, J)


def test_mu_star_budget():
    G = np.eye(30)
    with pytest.raises(BudgetError):
        mu_star(G, np.ones(30), range(MAX_SUBSET_SUPPORT + 1), 30)


def test_norm_bounds_report():
    r0 = moment_norm_bounds_check(5, 0.0)
    assert r0["L_1"] == 0 and not r0["violations"]
    r = moment_norm_bounds_check(6, math.sqrt(1 / 15))
    assert r["t"] == pytest.approx(1.0) and not r["violations"]
    r4 = moment_norm_bounds_check(4, 0.3)
    assert r4["A_2"] <= r4["A_1"]


def test_moment_matrix_over_library():
    spec = SYSTEMS["burgers_nl"]
    mm = moment_matrix(spec.library, 0.4)
    assert mm.A.shape == (spec.library.n_columns,) * 2
    np.testing.assert_allclose(mm.A @ mm.A_inv, np.eye(len(mm.A)), atol=1e-10)
    lib = LibrarySpec(1, 3, ((1,), (0,)), trig_frequencies=((2.0,),))
    mm = moment_matrix(lib, 0.3)
    np.testing.assert_allclose(mm.A @ mm.A_inv, np.eye(lib.n_columns), atol=1e-12)
    with pytest.raises(InvalidArgument):
        moment_matrix(lib, 0.3, "custom", moments=[1.0, 0.0])
    with pytest.raises(InvalidArgument):
        moment_matrix(lib, 0.3, "laplace")
