"""Trial-function libraries and assembly of the convolutional weak system (G, b)."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .core_data import Dataset, Grid
from .errors import InvalidArgument
from .testfn import build_stencil


@dataclass(frozen=True)
class TrialFunction:
    """A monomial prod u_i^p_i (kind "poly") or cos/sin(omega . u)."""

    kind: str
    params: tuple

    @property
    def degree(self) -> int:
        return int(sum(self.params)) if self.kind == "poly" else 0

    @property
    def is_constant(self) -> bool:
        return self.kind == "poly" and self.degree == 0

    def label(self) -> str:
        if self.kind == "poly":
            parts = []
            for i, p in enumerate(self.params):
                if p == 1:
                    parts.append(f"u{i + 1}")
                elif p > 1:
                    parts.append(f"u{i + 1}^{p}")
            return "*".join(parts) if parts else "1"
        arg = "+".join(f"{w:g}*u{i + 1}" for i, w in enumerate(self.params) if w != 0)
        return f"{self.kind}({arg or '0'})"


def graded_lex_exponents(n: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent vectors of total degree <= ``degree``, by degree then lexicographically
    descending (u1^2 before u1*u2 before u2^2)."""
    out = []
    for d in range(degree + 1):
        block = [
            e for e in itertools.product(range(d, -1, -1), repeat=n) if sum(e) == d
        ]
        out.extend(block)
    return out


@dataclass(frozen=True)
class ColumnIndex:
    """Map between matrix columns and (derivative block s, trial function j).

    ``pairs[c] = (s, j)`` with s in 1..S and j in 1..J. A full library has
    ``c = (s - 1) J + j`` (1-based); columns that are identically zero may be
    dropped, in which case ``pairs`` lists the retained ones in the same order.
    """

    J: int
    S: int
    pairs: tuple[tuple[int, int], ...]
    alphas: tuple[tuple[int, ...], ...]
    trials: tuple[TrialFunction, ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def column_of(self, s: int, j: int) -> int:
        """0-based column position of the pair (s, j), or -1 if absent."""
        try:
            return self.pairs.index((s, j))
        except ValueError:
            return -1

    def descriptor(self, c: int) -> tuple[tuple[int, ...], TrialFunction]:
        s, j = self.pairs[c]
        return self.alphas[s - 1], self.trials[j - 1]

    def labels(self) -> list[str]:
        out = []
        for c in range(len(self)):
            alpha, tf = self.descriptor(c)
            if any(alpha):
                out.append(f"D{list(alpha)}[{tf.label()}]".replace(" ", ""))
            else:
                out.append(tf.label())
        return out


@dataclass(frozen=True)
class LibrarySpec:
    """Monomials of total degree <= poly_max_total_degree over ``state_dim`` variables,
    then cos/sin pairs for each frequency, crossed with derivative multi-indices.

    ``derivative_multi_indices[0]`` is the left-hand-side operator alpha^0.
    """

    state_dim: int
    poly_max_total_degree: int
    derivative_multi_indices: tuple[tuple[int, ...], ...]
    trig_frequencies: tuple[tuple[float, ...], ...] = ()
    drop_null_columns: bool = True

    def __post_init__(self):
        alphas = tuple(tuple(int(a) for a in al) for al in self.derivative_multi_indices)
        freqs = tuple(tuple(float(w) for w in om) for om in self.trig_frequencies)
        object.__setattr__(self, "derivative_multi_indices", alphas)
        object.__setattr__(self, "trig_frequencies", freqs)
        if self.state_dim < 1 or self.poly_max_total_degree < 0:
            raise InvalidArgument("state_dim >= 1 and degree >= 0 required")
        if len(alphas) < 2:
            raise InvalidArgument("need alpha^0 and at least one right-hand-side operator")
        if len({len(a) for a in alphas}) != 1:
            raise InvalidArgument("derivative multi-indices must share a length")
        if alphas[0] in alphas[1:]:
            raise InvalidArgument("alpha^0 may not be repeated on the right-hand side")
        if any(len(om) != self.state_dim for om in freqs):
            raise InvalidArgument("frequencies must have state_dim entries")

    @property
    def lhs_alpha(self) -> tuple[int, ...]:
        return self.derivative_multi_indices[0]

    @property
    def rhs_alphas(self) -> tuple[tuple[int, ...], ...]:
        return self.derivative_multi_indices[1:]

    @property
    def S(self) -> int:
        return len(self.rhs_alphas)

    def trial_functions(self) -> tuple[TrialFunction, ...]:
        out = [
            TrialFunction("poly", e)
            for e in graded_lex_exponents(self.state_dim, self.poly_max_total_degree)
        ]
        for om in self.trig_frequencies:
            out.append(TrialFunction("cos", om))
            out.append(TrialFunction("sin", om))
        return tuple(out)

    @property
    def J(self) -> int:
        return len(self.trial_functions())

    def column_index(self) -> ColumnIndex:
        trials = self.trial_functions()
        pairs = []
        for s, alpha in enumerate(self.rhs_alphas, start=1):
            for j, tf in enumerate(trials, start=1):
                # a derivative of the constant trial function is identically zero
                if self.drop_null_columns and any(alpha) and tf.is_constant:
                    continue
                pairs.append((s, j))
        return ColumnIndex(len(trials), self.S, tuple(pairs), self.rhs_alphas, trials)

    @property
    def n_columns(self) -> int:
        return len(self.column_index())


def eval_trial(descriptor: TrialFunction, U: np.ndarray) -> np.ndarray:
    """Evaluate a trial function pointwise on values with the state on the last axis."""
    U = np.asarray(U, dtype=np.float64)
    if descriptor.kind == "poly":
        out = np.ones(U.shape[:-1])
        for i, p in enumerate(descriptor.params):
            if p:
                out = out * U[..., i] ** p
        return out
    arg = U @ np.asarray(descriptor.params, dtype=np.float64)
    return np.cos(arg) if descriptor.kind == "cos" else np.sin(arg)


def choose_query_points(
    grid: Grid, stencil_radii: Sequence[int], requested_K: int
) -> np.ndarray:
    """Equally spaced lattice of interior points, shape (K, dims).

    Per-axis counts are the largest whose product does not exceed the request,
    grown one axis at a time so the lattice stays as balanced as possible.
    """
    if requested_K < 1:
        raise InvalidArgument("requested_K must be >= 1")
    radii = [int(r) for r in stencil_radii]
    avail = [n - 2 * r for n, r in zip(grid.counts, radii)]
    if len(radii) != grid.dims or min(avail) < 1:
        raise InvalidArgument("no admissible interior query point for this stencil")
    counts = [1] * grid.dims
    while True:
        grown = False
        for q in sorted(range(grid.dims), key=lambda q: (counts[q] / avail[q], q)):
            if counts[q] < avail[q] and np.prod(counts) // counts[q] * (counts[q] + 1) <= requested_K:
                counts[q] += 1
                grown = True
                break
        if not grown:
            break
    per_axis = []
    for n, r, k in zip(grid.counts, radii, counts):
        lo, hi = r, n - 1 - r
        if k == 1:
            per_axis.append(np.array([(lo + hi) // 2]))
        else:
            per_axis.append(np.round(np.linspace(lo, hi, k)).astype(np.int64))
    mesh = np.meshgrid(*per_axis, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1).astype(np.int64)


def footprint_offsets(grid: Grid, radii: Sequence[int]) -> np.ndarray:
    """Flat (row-major) offsets of every stencil entry relative to its center."""
    strides = np.cumprod((grid.counts[1:] + (1,))[::-1])[::-1]
    axes = [np.arange(-r, r + 1) * st for r, st in zip(radii, strides)]
    total = axes[0]
    for a in axes[1:]:
        total = np.add.outer(total, a)
    return np.ascontiguousarray(np.asarray(total, dtype=np.int64).ravel())


def _flat_centers(grid: Grid, query_points: np.ndarray) -> np.ndarray:
    qp = np.asarray(query_points, dtype=np.int64).reshape(-1, grid.dims)
    return np.ascontiguousarray(np.ravel_multi_index(qp.T, grid.counts).astype(np.int64))


def convolve_at(
    fields: np.ndarray,
    grid: Grid,
    radii: Sequence[int],
    alphas: Sequence[Sequence[int]],
    query_points: np.ndarray,
) -> np.ndarray:
    """(d^alpha psi * field)(x_k) for each alpha and field column; shape (K, len(alphas), J).

    ``fields`` has shape counts + (J,). The convolution is evaluated as a
    correlation with the reversed stencil.
    """
    X = np.ascontiguousarray(fields.reshape(grid.size, -1), dtype=np.float64)
    W = np.stack(
        [build_stencil(grid, radii, a).weights[(slice(None, None, -1),) * grid.dims].ravel()
         for a in alphas]
    )
    offsets = footprint_offsets(grid, radii)
    centers = _flat_centers(grid, query_points)
    return kernels.accumulate(X, centers, offsets, np.ascontiguousarray(W))


@dataclass
class WeakSystem:
    G: np.ndarray
    b: np.ndarray
    query_points: np.ndarray
    column_index: ColumnIndex
    stencil_radii: tuple[int, ...]
    grid: Grid
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.G.shape[0]

    @property
    def m(self) -> int:
        return int(np.prod([2 * r + 1 for r in self.stencil_radii]))

    def residual(self, w: np.ndarray) -> float:
        """||G w - b|| / ||b|| (Frobenius over all response columns)."""
        w = np.asarray(w, dtype=np.float64).reshape(self.G.shape[1], -1)
        return float(np.linalg.norm(self.G @ w - self.b) / np.linalg.norm(self.b))


def assemble(
    dataset: Dataset,
    library: LibrarySpec,
    stencil_radii: Sequence[int],
    query_points: np.ndarray | None = None,
    requested_K: int = 1000,
) -> WeakSystem:
    grid = dataset.grid
    radii = tuple(int(r) for r in stencil_radii)
    if library.state_dim != dataset.state_dim:
        raise InvalidArgument("library state_dim disagrees with the dataset")
    if len(library.lhs_alpha) != grid.dims:
        raise InvalidArgument("derivative multi-indices must have one entry per grid axis")
    cols = library.column_index()
    if len(cols) == 0:
        raise InvalidArgument("library has no columns")
    if query_points is None:
        query_points = choose_query_points(grid, radii, requested_K)
    query_points = np.asarray(query_points, dtype=np.int64).reshape(-1, grid.dims)
    for q in range(grid.dims):
        col = query_points[:, q]
        if col.min() < radii[q] or col.max() > grid.counts[q] - 1 - radii[q]:
            raise InvalidArgument("query point footprint leaves the grid")

    U = dataset.values
    trials = cols.trials
    fields = np.stack([eval_trial(tf, U) for tf in trials], axis=-1)
    conv = convolve_at(fields, grid, radii, library.rhs_alphas, query_points)
    idx = np.array([(s - 1) * cols.J + (j - 1) for s, j in cols.pairs])
    G = conv.reshape(len(query_points), -1)[:, idx]
    b = convolve_at(U, grid, radii, [library.lhs_alpha], query_points)[:, 0, :]
    meta = {
        "K": len(query_points),
        "m": int(np.prod([2 * r + 1 for r in radii])),
        "radii": radii,
        "support_fraction": tuple(2 * r * h / (b_ - a) for r, h, (a, b_) in
                                  zip(radii, grid.resolution, grid.extents)),
        "backend": kernels.BACKEND,
    }
    return WeakSystem(G, b, query_points, cols, radii, grid, meta)


def weights_from_terms(library: LibrarySpec, terms: Sequence[dict]) -> np.ndarray:
    """Build a (n_columns, n_responses) weight matrix from per-response term maps.

    Each map sends (alpha, exponent-or-trial) to a coefficient; exponents may be
    given as plain tuples for monomials.
    """
    cols = library.column_index()
    W = np.zeros((len(cols), len(terms)))
    for r, term_map in enumerate(terms):
        for (alpha, tf), coef in term_map.items():
            if not isinstance(tf, TrialFunction):
                tf = TrialFunction("poly", tuple(tf))
            s = cols.alphas.index(tuple(alpha)) + 1
            j = cols.trials.index(tf) + 1
            c = cols.column_of(s, j)
            if c < 0:
                raise InvalidArgument(f"term {alpha}, {tf.label()} is not a library column")
            W[c, r] = coef
    return W


def write_system_csv(system: WeakSystem, path: str | Path) -> None:
    """Dump [G | b] with a header of column descriptors."""
    n = system.b.shape[1]
    header = system.column_index.labels() + [f"b{i + 1}" for i in range(n)]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in np.hstack([system.G, system.b]):
            wr.writerow([repr(float(x)) for x in row])
