"""Hard thresholding, sequential thresholding least squares and the MSTLS line search."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidArgument

RANK_TOL = 1e-10
DEFAULT_LAMBDAS = 10.0 ** np.linspace(-4, 0, 100)


def hard_threshold(w: np.ndarray, lam: float) -> np.ndarray:
    """Zero every entry with |w_i| < lam (entries equal to lam are kept)."""
    if lam < 0:
        raise InvalidArgument("threshold must be nonnegative")
    w = np.asarray(w, dtype=np.float64)
    return np.where(np.abs(w) >= lam, w, 0.0)


def _min_norm_lsq(A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """SVD least squares on unit-norm columns, truncating singular values below
    RANK_TOL * s_max. Equilibrating first makes the rank decision independent of
    column scale; zero columns are rank defects."""
    scale = np.linalg.norm(A, axis=0)
    live = scale > 0
    x = np.zeros(A.shape[1])
    if not live.any():
        return x, True
    U, s, Vt = np.linalg.svd(A[:, live] / scale[live], full_matrices=False)
    keep = s > RANK_TOL * s[0]
    coef = (U[:, keep].T @ y) / s[keep]
    x[live] = (Vt[keep].T @ coef) / scale[live]
    return x, bool(keep.sum() < A.shape[1])


def restricted_lsq(G, b, support, return_rank: bool = False):
    """Minimum-norm least squares over the columns in ``support``, embedded in R^J.

    With ``return_rank`` the pair (weights, rank_deficient) is returned.
    """
    G = np.asarray(G, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    idx = _support_indices(support, G.shape[1])
    w = np.zeros(G.shape[1])
    deficient = False
    if idx.size:
        w[idx], deficient = _min_norm_lsq(G[:, idx], b)
    return (w, deficient) if return_rank else w


def _support_indices(support, n: int) -> np.ndarray:
    s = np.asarray(support)
    if s.dtype == bool:
        return np.flatnonzero(s)
    return np.unique(s.astype(np.int64))


class _ReducedProblem:
    """Least squares on a fixed (G, b) via one thin QR of G.

    For any column subset S, ||G_S w - b||^2 = ||R_S w - Q^T b||^2 + const, so
    restricted solves only touch the small triangular factor. Solutions are
    memoized by support.
    """

    def __init__(self, G: np.ndarray, b: np.ndarray):
        self.G = np.asarray(G, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.n = self.G.shape[1]
        Q, self.R = scipy.linalg.qr(self.G, mode="economic")
        self.c = Q.T @ self.b
        self._cache: dict[bytes, tuple[np.ndarray, bool]] = {}

    def solve(self, mask: np.ndarray) -> tuple[np.ndarray, bool]:
        key = mask.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            w = np.zeros(self.n)
            deficient = False
            if mask.any():
                w[mask], deficient = _min_norm_lsq(self.R[:, mask], self.c)
            hit = (w, deficient)
            self._cache[key] = hit
        return hit[0].copy(), hit[1]

    def norm_G(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(self.R @ v))


@dataclass
class SparseModel:
    weights: np.ndarray
    support: tuple[int, ...]
    lambda_hat: float
    loss_trace: list[tuple[float, float, int]] = field(default_factory=list)
    iterations: int = 0
    rank_deficient: bool = False
    reference_norm: float = float("nan")

    def write_loss_trace(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["lambda", "loss", "support_size"])
            for lam, loss, size in self.loss_trace:
                wr.writerow([repr(float(lam)), repr(float(loss)), int(size)])


def _stls_core(prob: _ReducedProblem, w0: np.ndarray, lam: float, max_iters: int):
    w = w0.copy()
    mask = np.ones(prob.n, dtype=bool)
    deficient = False
    it = 0
    while it < max_iters:
        new_mask = (np.abs(w) >= lam) & mask
        if it > 0 and np.array_equal(new_mask, mask):
            break
        mask = new_mask
        w, deficient = prob.solve(mask)
        it += 1
    return w, it, deficient


def stls(G, b, lam: float, max_iters: int | None = None) -> SparseModel:
    """Alternate restricted least squares and hard thresholding until the support
    stops changing or ``max_iters`` thresholding rounds have run."""
    if lam < 0:
        raise InvalidArgument("threshold must be nonnegative")
    prob = _ReducedProblem(G, b)
    max_iters = prob.n if max_iters is None else int(max_iters)
    if max_iters < 1:
        raise InvalidArgument("max_iters must be >= 1")
    w0, def0 = prob.solve(np.ones(prob.n, dtype=bool))
    w, it, deficient = _stls_core(prob, w0, lam, max_iters)
    return SparseModel(w, tuple(np.flatnonzero(w)), float(lam), [], it, deficient or def0)


def one_shot_lambda_grid(w0) -> np.ndarray:
    """Midpoints between consecutive distinct sorted |w0| values, with 0 prepended."""
    mags = np.unique(np.concatenate([[0.0], np.abs(np.asarray(w0, dtype=np.float64))]))
    if mags.size < 2:
        return np.array([0.0])
    return np.unique(0.5 * (mags[:-1] + mags[1:]))


def _round_sig(x: float, digits: int = 12) -> float:
    return float(f"{x:.{digits}g}")


def mstls(
    G,
    b,
    lambda_grid: Sequence[float] | None = None,
    stls_iters: int | None = None,
    mode: str = "grid",
    loss_denominator: str = "Gw0",
) -> SparseModel:
    """Threshold line search minimizing ||G(w^lam - w0)||/||G w0|| + ||w^lam||_0 / J.

    ``mode="grid"`` uses ``lambda_grid`` (default 10**linspace(-4, 0, 100)) with full
    STLS; ``mode="oneshot"`` uses the midpoint grid from w0 and a single
    thresholding round. ``loss_denominator="b"`` swaps the denominator for ||b||.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1:
        raise InvalidArgument("mstls takes one response column; use fit_columns")
    prob = _ReducedProblem(G, b)
    J = prob.n
    w0, def0 = prob.solve(np.ones(J, dtype=bool))
    if mode == "oneshot":
        grid = one_shot_lambda_grid(w0) if lambda_grid is None else np.asarray(lambda_grid)
        iters = 1 if stls_iters is None else int(stls_iters)
    elif mode == "grid":
        grid = DEFAULT_LAMBDAS if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
        iters = J if stls_iters is None else int(stls_iters)
    else:
        raise InvalidArgument(f"unknown mode {mode!r}")
    if grid.size == 0 or iters < 1:
        raise InvalidArgument("need a nonempty threshold grid and stls_iters >= 1")
    if loss_denominator == "Gw0":
        ref = prob.norm_G(w0)
    elif loss_denominator == "b":
        ref = float(np.linalg.norm(b))
    else:
        raise InvalidArgument(f"unknown loss denominator {loss_denominator!r}")

    trace = []
    best = None
    for lam in grid:
        w, it, deficient = _stls_core(prob, w0, float(lam), iters)
        nnz = int(np.count_nonzero(w))
        resid = prob.norm_G(w - w0)
        ratio = resid / ref if ref > 0 else (0.0 if resid == 0 else np.inf)
        loss = ratio + nnz / J
        trace.append((float(lam), float(loss), nnz))
        key = _round_sig(loss)
        # strict comparison keeps the smallest lambda among ties when the grid ascends
        if best is None or key < best[0] or (key == best[0] and lam < best[1]):
            best = (key, float(lam), w, it, deficient)
    _, lam_hat, w, it, deficient = best
    return SparseModel(
        w, tuple(np.flatnonzero(w)), lam_hat, trace, it, deficient or def0, ref
    )


def fit_columns(G, B, **kwargs) -> list[SparseModel]:
    """Run :func:`mstls` independently on each response column of ``B``."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    return [mstls(G, B[:, i], **kwargs) for i in range(B.shape[1])]


def threshold_feasibility(w_ls, true_support) -> float:
    """min over the true support of |w| minus max over its complement."""
    w = np.abs(np.asarray(w_ls, dtype=np.float64))
    idx = _support_indices(true_support, w.size)
    if idx.size == 0:
        raise InvalidArgument("true support must be nonempty")
    off = np.ones(w.size, dtype=bool)
    off[idx] = False
    return float(w[idx].min() - (w[off].max() if off.any() else 0.0))
