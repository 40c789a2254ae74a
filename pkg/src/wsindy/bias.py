"""Noise-induced bias of polynomial and trigonometric libraries.

A noise distribution rho acts on each trial function by cross-correlation,
f_j * rho = sum_i A_ij f_i, so the continuum weak system is G* A and the
continuum least-squares coefficients are A^{-1} w*.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BudgetError, InvalidArgument, SingularBiasError
from .sparsereg import threshold_feasibility
from .weaksys import LibrarySpec, graded_lex_exponents

MAX_SUBSET_SUPPORT = 20
RHO_FLOOR = 1e-14


def double_factorial(n: int) -> int:
    """n!! with the convention (-1)!! = 0!! = 1."""
    if n <= 0:
        return 1
    return math.prod(range(n, 0, -2))


def gaussian_moments(sigma: float, p: int) -> np.ndarray:
    return np.array([double_factorial(q - 1) * sigma**q if q % 2 == 0 else 0.0
                     for q in range(p + 1)])


def uniform_moments(sigma: float, p: int) -> np.ndarray:
    """Moments of the uniform law on [-a, a] with a = sqrt(3) sigma."""
    a = math.sqrt(3.0) * sigma
    return np.array([a**q / (q + 1) if q % 2 == 0 else 0.0 for q in range(p + 1)])


def _univariate_block(moments: np.ndarray, p: int) -> np.ndarray:
    A = np.zeros((p + 1, p + 1))
    for j in range(p + 1):
        for i in range(j + 1):
            A[i, j] = math.comb(j, i) * moments[j - i]
    return A


def _product_block(univariate: np.ndarray, p_max: int, n: int) -> np.ndarray:
    """Entry (i, j) over graded-lex exponents is prod_k univariate[i_k, j_k]."""
    exps = graded_lex_exponents(n, p_max)
    A = np.zeros((len(exps), len(exps)))
    for c, ej in enumerate(exps):
        for r, ei in enumerate(exps):
            if all(a <= b for a, b in zip(ei, ej)):
                A[r, c] = math.prod(univariate[a, b] for a, b in zip(ei, ej))
    return A


def gaussian_moment_block(p_max: int, sigma: float, n: int = 1) -> np.ndarray:
    """Moment matrix of N(0, sigma^2 I) over monomials of total degree <= p_max.

    Univariate entries are C(j, i) (j-i-1)!! sigma^(j-i) for even j - i.
    """
    return _product_block(_univariate_block(gaussian_moments(sigma, p_max), p_max), p_max, n)


def gaussian_moment_inverse(p_max: int, sigma: float, n: int = 1) -> np.ndarray:
    """Closed-form inverse: each univariate factor picks up the sign (-1)^((j-i)/2)."""
    M = gaussian_moments(sigma, p_max)
    signed = np.array([M[q] * (-1) ** (q // 2) for q in range(p_max + 1)])
    return _product_block(_univariate_block(signed, p_max), p_max, n)


def general_moment_block(moments: Sequence[float], p_max: int, n: int = 1) -> np.ndarray:
    M = np.asarray(moments, dtype=np.float64)
    return _product_block(_univariate_block(M, p_max), p_max, n)


def general_moment_inverse_factor(moments: Sequence[float]) -> np.ndarray:
    """Factors f(q) with (A^-1)_ij = f(j - i) A_ij for the univariate moment matrix.

    f(0) = 1 and f(q) = -sum_{l<q} C(q, l) M_{q-l} M_l f(l) / M_q. Where M_q = 0
    the entry A_ij itself vanishes; f(q) is reported as 0 if the inverse entry is
    also 0 there and NaN (undefined) otherwise.
    """
    M = np.asarray(moments, dtype=np.float64)
    if M.size == 0 or M[0] != 1.0:
        raise InvalidArgument("moment sequence must start with M_0 = 1")
    p = M.size - 1
    # inverse moments m'_q = f(q) M_q satisfy sum_l C(q, l) M_{q-l} m'_l = [q == 0]
    minv = np.zeros(p + 1)
    minv[0] = 1.0
    for q in range(1, p + 1):
        minv[q] = -sum(math.comb(q, l) * M[q - l] * minv[l] for l in range(q))
    f = np.empty(p + 1)
    for q in range(p + 1):
        if M[q] != 0:
            f[q] = minv[q] / M[q]
        else:
            f[q] = 0.0 if minv[q] == 0 else np.nan
    return f


def general_moment_inverse(moments: Sequence[float], p_max: int, n: int = 1) -> np.ndarray:
    M = np.asarray(moments, dtype=np.float64)[: p_max + 1]
    f = general_moment_inverse_factor(M)
    f = np.where(np.isnan(f), 0.0, f)
    return _product_block(_univariate_block(f * M, p_max), p_max, n)


def trig_multiplier(omega, distribution: str = "gaussian", sigma: float = 0.0) -> float:
    """Characteristic function of the i.i.d. noise at omega (product over components)."""
    om = np.atleast_1d(np.asarray(omega, dtype=np.float64))
    if distribution == "gaussian":
        return float(np.exp(-0.5 * sigma**2 * np.dot(om, om)))
    if distribution == "uniform":
        a = math.sqrt(3.0) * sigma
        # numpy sinc is sin(pi x)/(pi x)
        return float(np.prod(np.sinc(om * a / np.pi)))
    raise InvalidArgument(f"no characteristic function for {distribution!r}")


@dataclass(frozen=True)
class MomentMatrix:
    library: LibrarySpec
    sigma: float
    distribution: str
    A: np.ndarray
    A_inv: np.ndarray | None
    moments: tuple[float, ...] | None = None


def _block_pieces(library: LibrarySpec, sigma, distribution, moments):
    n, p = library.state_dim, library.poly_max_total_degree
    if distribution == "gaussian":
        A_poly = gaussian_moment_block(p, sigma, n)
        Ainv_poly = gaussian_moment_inverse(p, sigma, n)
    else:
        if distribution == "uniform":
            M = uniform_moments(sigma, p)
        elif distribution == "custom":
            if moments is None or len(moments) < p + 1:
                raise InvalidArgument(f"custom distribution needs moments M_0..M_{p}")
            M = np.asarray(moments[: p + 1], dtype=np.float64)
        else:
            raise InvalidArgument(f"unknown distribution {distribution!r}")
        A_poly = general_moment_block(M, p, n)
        f = general_moment_inverse_factor(M)
        Ainv_poly = None if np.isnan(f).any() else general_moment_inverse(M, p, n)
    rho = []
    for om in library.trig_frequencies:
        if distribution == "custom":
            raise InvalidArgument("custom moment sequences cover polynomial libraries only")
        r = trig_multiplier(om, distribution, sigma)
        rho += [r, r]
    return A_poly, Ainv_poly, np.array(rho)


def moment_matrix(
    library: LibrarySpec,
    sigma: float,
    distribution: str = "gaussian",
    moments: Sequence[float] | None = None,
) -> MomentMatrix:
    """Block-diagonal bias operator over the library's retained columns."""
    A_poly, Ainv_poly, rho = _block_pieces(library, sigma, distribution, moments)
    J = library.J
    block = np.zeros((J, J))
    block[: A_poly.shape[0], : A_poly.shape[0]] = A_poly
    block[A_poly.shape[0]:, A_poly.shape[0]:] = np.diag(rho)
    inv_block = None
    # sinc zeros land at ~1e-17 in floating point; treat those as exact zeros
    if Ainv_poly is not None and np.all(np.abs(rho) > RHO_FLOOR):
        inv_block = np.zeros((J, J))
        inv_block[: A_poly.shape[0], : A_poly.shape[0]] = Ainv_poly
        inv_block[A_poly.shape[0]:, A_poly.shape[0]:] = np.diag(1.0 / rho) if rho.size else 0
    cols = library.column_index()
    idx = np.array([(s - 1) * J + (j - 1) for s, j in cols.pairs])
    full = np.kron(np.eye(library.S), block)[np.ix_(idx, idx)]
    # dropping the constant column of a derivative block is exact: the block is
    # upper triangular, so the inverse of the trailing block is the trailing
    # block of the inverse
    full_inv = None
    if inv_block is not None:
        full_inv = np.kron(np.eye(library.S), inv_block)[np.ix_(idx, idx)]
    return MomentMatrix(
        library, float(sigma), distribution, full, full_inv,
        None if moments is None else tuple(float(m) for m in moments),
    )


def predict_continuum_coefficients(w_true, mm: MomentMatrix) -> np.ndarray:
    """Continuum least-squares coefficients A^{-1} w* reached by noisy data."""
    if mm.A_inv is None:
        raise SingularBiasError("moment matrix has a vanishing multiplier or undefined inverse")
    return mm.A_inv @ np.asarray(w_true, dtype=np.float64)


def induced_bias_terms(w_true, mm: MomentMatrix) -> np.ndarray:
    """(A - I) w*: the terms added to the true model when every trial function is
    replaced by its noise-averaged version f * rho."""
    w = np.asarray(w_true, dtype=np.float64)
    return mm.A @ w - w


def _column_degrees(library: LibrarySpec) -> tuple[np.ndarray, list]:
    cols = library.column_index()
    deg = np.array([cols.trials[j - 1].degree for _, j in cols.pairs])
    return deg, cols


def _true_support(w_true) -> np.ndarray:
    w = np.asarray(w_true, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    S = np.flatnonzero(np.any(w != 0, axis=1))
    if S.size == 0:
        raise InvalidArgument("true support is empty")
    return S


def is_bias_free_case(w_true, library: LibrarySpec) -> bool:
    """Degree <= 2 on the true support and no pure square u_i^2 outside derivatives."""
    S = _true_support(w_true)
    deg, cols = _column_degrees(library)
    if deg[S].max() > 2:
        return False
    for c in S:
        alpha, tf = cols.descriptor(c)
        if tf.kind == "poly" and not any(alpha) and max(tf.params) == 2:
            return False
    return True


def critical_noise_bounds(w_true, library: LibrarySpec) -> tuple[float, float, str]:
    """Bracket (lower, upper) on sigma_c^2 and a case tag."""
    S = _true_support(w_true)
    if is_bias_free_case(w_true, library):
        return math.inf, math.inf, "case (i)"
    deg, _ = _column_degrees(library)
    p = int(deg[S].max())
    cp2 = math.comb(p, 2)
    mags = np.abs(np.asarray(w_true, dtype=np.float64).reshape(len(deg), -1))[S]
    mags = mags[mags > 0]
    lower = mags.min() / mags.max() / (2 * cp2 * math.e)
    return float(lower), 1.0 / cp2, "case (ii)"


def exact_critical_noise(w_true, library: LibrarySpec, sigma_max: float = 10.0) -> float:
    """Smallest sigma at which the predicted continuum coefficients lose the
    threshold gap (delta_1 <= 0), located by scan and bisection. The value is the
    "exact (pattern)" flip point; inf if no flip occurs below ``sigma_max``."""
    w = np.asarray(w_true, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    if is_bias_free_case(w, library):
        return math.inf

    def gap(sig):
        wb = predict_continuum_coefficients(w, moment_matrix(library, sig))
        return min(threshold_feasibility(wb[:, r], np.flatnonzero(w[:, r]))
                   for r in range(w.shape[1]) if np.any(w[:, r]))

    sig = np.concatenate([[0.0], np.geomspace(1e-4, sigma_max, 200)])
    vals = [gap(s) for s in sig]
    for i in range(1, len(sig)):
        if vals[i] <= 0 < vals[i - 1]:
            lo, hi = sig[i - 1], sig[i]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if gap(mid) > 0:
                    lo = mid
                else:
                    hi = mid
            return float(0.5 * (lo + hi))
    return math.inf


def mstls_critical_bounds(G_star, w_true, library: LibrarySpec) -> tuple[float, float]:
    """Bracket on sigma_c^2 for one-shot MSTLS on the continuum system."""
    G = np.asarray(G_star, dtype=np.float64)
    w = np.asarray(w_true, dtype=np.float64)
    S = _true_support(w)
    if is_bias_free_case(w, library):
        return math.inf, math.inf
    deg, cols = _column_degrees(library)
    p = int(deg[S].max())
    cp2 = math.comb(p, 2)
    poly = np.array([cols.trials[j - 1].kind == "poly" for _, j in cols.pairs])
    Gp = G[:, poly & (deg <= p)]
    J = G.shape[1]
    ratio1 = np.linalg.norm(G @ w) / (J * np.linalg.norm(Gp, 2) * np.linalg.norm(w))
    mags = np.abs(w)[S]
    ratio2 = mags.min() / (2 * mags.max())
    return float(min(ratio1, ratio2) / (math.e * cp2)), 1.0 / cp2


def mu_star(G_star, b_star, true_support, n_columns: int) -> float:
    """min over nonempty proper subsets S of S* of ||P_perp b*|| / ||b*|| - (|S|+1)/J,
    where the projection removes span(G*_{S* minus S})."""
    G = np.asarray(G_star, dtype=np.float64)
    b = np.asarray(b_star, dtype=np.float64).ravel()
    Sstar = sorted(int(i) for i in np.unique(np.asarray(true_support)))
    if len(Sstar) > MAX_SUBSET_SUPPORT:
        raise BudgetError(f"|S*| = {len(Sstar)} exceeds enumeration budget {MAX_SUBSET_SUPPORT}")
    nb = np.linalg.norm(b)
    best = math.inf
    for size in range(1, len(Sstar)):
        for S in itertools.combinations(Sstar, size):
            keep = [c for c in Sstar if c not in S]
            Q, _ = np.linalg.qr(G[:, keep])
            r = b - Q @ (Q.T @ b)
            best = min(best, np.linalg.norm(r) / nb - (size + 1) / n_columns)
    return float(best)


def moment_norm_bounds_check(p: int, sigma: float) -> dict:
    """Norms of the Gaussian moment matrix A = I + L and the exponential bounds."""
    A = gaussian_moment_block(p, sigma)
    L = A - np.eye(p + 1)
    t = sigma**2 * math.comb(p, 2)
    rep = {
        "p": p,
        "sigma": sigma,
        "t": t,
        "A_1": float(np.linalg.norm(A, 1)),
        "A_2": float(np.linalg.norm(A, 2)),
        "A_inf": float(np.linalg.norm(A, np.inf)),
        "L_1": float(np.linalg.norm(L, 1)),
        "A_1_bound": math.exp(t),
        "L_1_bound": t * math.exp(t),
        "l_branch": t <= 1,
    }
    rep["A_1_ok"] = rep["A_1"] <= rep["A_1_bound"] * (1 + 1e-12)
    rep["L_1_ok"] = (not rep["l_branch"]) or rep["L_1"] <= rep["L_1_bound"] * (1 + 1e-12) + 1e-300
    rep["violations"] = [k for k in ("A_1_ok", "L_1_ok") if not rep[k]]
    return rep
