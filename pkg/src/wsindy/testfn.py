"""The compactly supported bump test function and its convolution stencils."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .core_data import Grid
from .errors import InvalidArgument

# below this value of 1 - v**2 the bump and all its derivatives are taken as 0
EDGE_CUTOFF = 1e-10


class BumpFunction:
    r"""phi(v) = exp(c / (v**2 - 1)) on (-1, 1), zero elsewhere.

    Derivatives are exact: phi^(k)(v) = P_k(v) / (v**2 - 1)**(2k) * phi(v), with
    the polynomials P_k generated symbolically by

        P_{k+1} = P_k' (v^2-1)^2 - 4 k v (v^2-1) P_k - 2 c v P_k.
    """

    def __init__(self, shape_constant: float = 9.0, max_order: int = 8):
        self.shape_constant = float(shape_constant)
        self._polys = [Polynomial([1.0])]
        self._extend(max_order)

    @property
    def max_order(self) -> int:
        return len(self._polys) - 1

    def _extend(self, order: int) -> None:
        c = self.shape_constant
        v = Polynomial([0.0, 1.0])
        q = v**2 - 1
        while len(self._polys) <= order:
            k = len(self._polys) - 1
            p = self._polys[-1]
            self._polys.append(p.deriv() * q**2 - 4 * k * v * q * p - 2 * c * v * p)

    def prefactor(self, k: int) -> tuple[np.ndarray, int]:
        """Coefficients of P_k (ascending) and the power 2k of (v^2 - 1)."""
        self._extend(k)
        return self._polys[k].coef.copy(), 2 * k

    def __call__(self, v, k: int = 0):
        if k < 0:
            raise InvalidArgument("derivative order must be nonnegative")
        self._extend(k)
        v = np.asarray(v, dtype=np.float64)
        out = np.zeros_like(v)
        gap = 1.0 - v * v
        inside = gap >= EDGE_CUTOFF
        vi = v[inside]
        q = -gap[inside]
        out[inside] = self._polys[k](vi) / q ** (2 * k) * np.exp(self.shape_constant / q)
        return out if out.ndim else float(out)


_DEFAULT_BUMP = BumpFunction()


def bump_eval(k: int, v, bump: BumpFunction | None = None):
    """k-th derivative of the default bump exp(9/(v^2-1))."""
    return (bump or _DEFAULT_BUMP)(v, k)


@dataclass(frozen=True)
class Stencil:
    """Sampled derivative of the separable test function times the volume element.

    ``weights[o_1 + m_1, ..., o_D + m_D]`` holds d^alpha psi at offset
    (o_1 h_1, ..., o_D h_D) multiplied by prod(h). ``factors`` are the 1-D
    pieces whose outer product equals ``weights``.
    """

    alpha: tuple[int, ...]
    radii: tuple[int, ...]
    weights: np.ndarray
    factors: tuple[np.ndarray, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.weights.shape


def axis_factor(radius: int, h: float, order: int, bump: BumpFunction | None = None):
    """1-D samples of d^order/dy^order phi(y / (radius h)) on the offsets -r..r."""
    bump = bump or _DEFAULT_BUMP
    if radius == 0:
        return np.array([1.0 if order == 0 else 0.0])
    v = np.arange(-radius, radius + 1) / radius
    return bump(v, order) * (radius * h) ** (-order)


def build_stencil(
    grid: Grid,
    radii: Sequence[int],
    alpha: Sequence[int],
    bump: BumpFunction | None = None,
) -> Stencil:
    radii = tuple(int(r) for r in radii)
    alpha = tuple(int(a) for a in alpha)
    if len(radii) != grid.dims or len(alpha) != grid.dims:
        raise InvalidArgument("radii and alpha must have one entry per grid axis")
    if any(r < 0 for r in radii) or any(a < 0 for a in alpha):
        raise InvalidArgument("radii and derivative orders must be nonnegative")
    for r, n in zip(radii, grid.counts):
        if 2 * r + 1 > n:
            raise InvalidArgument(f"stencil width {2 * r + 1} exceeds axis count {n}")
    h = grid.resolution
    factors = tuple(
        axis_factor(r, hq, a, bump) * hq for r, hq, a in zip(radii, h, alpha)
    )
    weights = factors[0]
    for f in factors[1:]:
        weights = np.multiply.outer(weights, f)
    weights = np.ascontiguousarray(weights)
    weights.setflags(write=False)
    return Stencil(alpha, radii, weights, factors)


def support_size(stencil: Stencil | Sequence[int]) -> int:
    radii = stencil.radii if isinstance(stencil, Stencil) else stencil
    return int(np.prod([2 * r + 1 for r in radii]))


def radii_for_fraction(grid: Grid, fraction: Sequence[float]) -> tuple[int, ...]:
    """Half-widths so the support covers ``fraction`` of each axis, rounded down."""
    out = []
    for f, n in zip(fraction, grid.counts):
        out.append(max(1, int(np.floor(f * (n - 1) / 2))))
    return tuple(out)
