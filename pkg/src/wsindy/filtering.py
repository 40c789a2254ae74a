"""Moving-average pre-filtering, noise-level estimation and filter-width selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .core_data import Dataset
from .errors import InvalidArgument

# unit-norm 6th difference; annihilates polynomials of degree <= 5
NOISE_STENCIL = np.array([1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0]) / math.sqrt(924.0)

# numpy.pad names for the two reflection conventions
_PAD_MODES = {"mirror": "reflect", "half_sample": "symmetric"}


@dataclass(frozen=True)
class FilterSpec:
    """Separable simple moving average with odd per-axis widths."""

    widths: tuple[int, ...]
    boundary: str = "mirror"

    def __post_init__(self):
        w = tuple(int(x) for x in self.widths)
        if any(x < 1 or x % 2 == 0 for x in w):
            raise InvalidArgument(f"filter widths must be odd and >= 1, got {w}")
        if self.boundary not in _PAD_MODES:
            raise InvalidArgument(f"unknown boundary {self.boundary!r}")
        object.__setattr__(self, "widths", w)

    @property
    def total_width(self) -> int:
        return int(np.prod(self.widths))

    def weights(self) -> np.ndarray:
        return np.full(self.widths, 1.0 / self.total_width)


def moving_average_array(values: np.ndarray, widths: Sequence[int], boundary: str = "mirror"):
    """Centered moving average over the leading ``len(widths)`` axes.

    ``mirror`` reflects about the edge sample without repeating it
    (d c b | a b c d | c b a); ``half_sample`` repeats it.
    """
    out = np.asarray(values, dtype=np.float64)
    mode = _PAD_MODES[boundary]
    for q, w in enumerate(widths):
        if w == 1:
            continue
        n = out.shape[q]
        r = w // 2
        if w > n or (mode == "reflect" and r > n - 1):
            raise InvalidArgument(f"filter width {w} exceeds axis {q} of length {n}")
        moved = np.moveaxis(out, q, -1)
        shape = moved.shape
        flat = np.ascontiguousarray(moved.reshape(-1, n))
        padded = np.ascontiguousarray(np.pad(flat, ((0, 0), (r, r)), mode=mode))
        sm = kernels.moving_sum_lastaxis(padded, w) / w
        out = np.moveaxis(sm.reshape(shape), -1, q)
    return np.ascontiguousarray(out)


def moving_average(dataset: Dataset, spec: FilterSpec) -> Dataset:
    if len(spec.widths) != dataset.grid.dims:
        raise InvalidArgument("one filter width per grid axis required")
    vals = moving_average_array(dataset.values, spec.widths, spec.boundary)
    meta = dict(dataset.meta)
    meta["filter_widths"] = ",".join(map(str, spec.widths))
    return replace(dataset, values=vals, meta=meta)


@dataclass(frozen=True)
class NoiseEstimate:
    sigma_est: float
    per_axis: tuple[float, ...]
    method: str = "6th-difference rms, median over axes"


def estimate_sigma(dataset: Dataset | np.ndarray, dims: int | None = None) -> NoiseEstimate:
    """RMS response of the annihilating stencil along each axis, median across axes."""
    if isinstance(dataset, Dataset):
        vals, dims = dataset.values, dataset.grid.dims
    else:
        vals = np.asarray(dataset, dtype=np.float64)
        if dims is None:
            dims = vals.ndim
        if vals.ndim == dims:
            vals = vals[..., None]
    per_axis = []
    for q in range(dims):
        n = vals.shape[q]
        if n < len(NOISE_STENCIL):
            raise InvalidArgument(f"axis {q} has {n} < 7 points")
        moved = np.moveaxis(vals, q, -1)
        win = np.lib.stride_tricks.sliding_window_view(moved, len(NOISE_STENCIL), axis=-1)
        resp = win @ NOISE_STENCIL
        per_axis.append(float(np.sqrt(np.mean(resp**2))))
    return NoiseEstimate(float(np.median(per_axis)), tuple(per_axis))


def _largest_odd_at_most(x: float) -> int:
    n = max(1, int(math.floor(x)))
    return n if n % 2 == 1 else n - 1


def filter_width_heuristic(
    sigma_est: float, p_max: int, tau_star: float, d: int, m: int
) -> tuple[int, ...]:
    """Per-axis odd widths floor(min(2 (C(p,2) sigma^2 / tau)^(1/(d+1)), m^(1/(d+1)) / 2)).

    ``d`` is the number of spatial axes, ``m`` the test-function support size in points.
    """
    if not 0 < tau_star <= 1:
        raise InvalidArgument("tau_star must lie in (0, 1]")
    e = 1.0 / (d + 1)
    a = 2.0 * (math.comb(p_max, 2) * sigma_est**2 / tau_star) ** e
    b = m**e / 2.0
    return (_largest_odd_at_most(min(a, b)),) * (d + 1)


def smaf_polynomial(n, ratio):
    """p(n) = n^5 - n^3 - ratio."""
    return n**5 - n**3 - ratio


def smaf_root(ratio: float) -> float:
    """Positive root of n^5 - n^3 - ratio by bisection on [1, 2 max(1, ratio^(1/3))]."""
    lo, hi = 1.0, 2.0 * max(1.0, ratio ** (1.0 / 3.0))
    if smaf_polynomial(lo, ratio) >= 0:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if smaf_polynomial(mid, ratio) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return hi


def _second_derivative_weights(length: int, h: float) -> np.ndarray:
    """Weights giving 2 a_2 of a least-squares quadratic fit on ``length`` samples."""
    x = (np.arange(length) - (length - 1) / 2.0) * h
    V = np.vander(x, 3, increasing=True)
    return 2.0 * np.linalg.pinv(V)[2]


@dataclass
class AdaptiveWidth:
    width: int
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _clamp_odd(n: int, n_max: int) -> int:
    n = min(max(n, 3), n_max)
    if n % 2 == 0:
        n = n + 1 if n + 1 <= n_max else n - 1
    return n


def adaptive_smaf_width(
    series,
    sigma_est: float,
    h: float,
    gamma: float = 2.0,
    tau: float = 1e-6,
    n_max: int = 101,
    n0: int = 3,
    max_iter: int = 20,
) -> AdaptiveWidth:
    """Iterate curvature estimate and bias-variance optimal moving-average width."""
    y = np.asarray(series, dtype=np.float64).ravel()
    if n_max < 3:
        raise InvalidArgument("n_max must be >= 3")
    n = _clamp_odd(int(n0), n_max)
    seen = [n]
    history = []
    for it in range(1, max_iter + 1):
        length = max(3, int(round(gamma * n)))
        length = min(length, y.size)
        wts = _second_derivative_weights(length, h)
        a2x2 = np.lib.stride_tricks.sliding_window_view(y, length) @ wts
        d = float(np.mean(np.abs(a2x2)))
        L = (d + tau) ** 2 * h**4 / 144.0
        root = smaf_root(sigma_est**2 / L)
        n_new = _clamp_odd(int(math.ceil(root - 1e-9)), n_max)
        history.append((n, d, L, root, n_new))
        if n_new in seen:
            return AdaptiveWidth(n_new, it, n_new == n, history)
        seen.append(n_new)
        n = n_new
    return AdaptiveWidth(n, max_iter, False, history)
