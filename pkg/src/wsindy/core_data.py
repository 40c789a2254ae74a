"""Uniform grids, datasets, noise injection and the WSD1 file format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, InvalidArgument

MAGIC = b"WSDATA1\0"


@dataclass(frozen=True)
class Grid:
    """Equally spaced lattice; the last axis is time by convention."""

    extents: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.extents) != len(self.counts) or not self.counts:
            raise InvalidArgument("extents and counts must have the same nonzero length")
        for (a, b), n in zip(self.extents, self.counts):
            if n < 2:
                raise InvalidArgument(f"axis count {n} < 2")
            if not b > a:
                raise InvalidArgument(f"degenerate extent [{a}, {b}]")

    @property
    def dims(self) -> int:
        return len(self.counts)

    @property
    def resolution(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for (a, b), n in zip(self.extents, self.counts))

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def axis(self, q: int) -> np.ndarray:
        a, b = self.extents[q]
        return np.linspace(a, b, self.counts[q])

    def axes(self) -> list[np.ndarray]:
        return [self.axis(q) for q in range(self.dims)]


def make_grid(extents: Sequence[Sequence[float]], counts: Sequence[int]) -> Grid:
    ext = tuple((float(a), float(b)) for a, b in extents)
    cnt = tuple(int(n) for n in counts)
    return Grid(ext, cnt)


@dataclass(frozen=True)
class Dataset:
    grid: Grid
    values: np.ndarray
    kind: str = "clean"
    sigma: float = 0.0
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim == self.grid.dims:
            vals = vals[..., None]
        if vals.shape[:-1] != self.grid.counts:
            raise InvalidArgument(
                f"values shape {vals.shape} does not match grid counts {self.grid.counts}"
            )
        if self.kind not in ("clean", "noisy"):
            raise InvalidArgument(f"unknown dataset kind {self.kind!r}")
        if self.kind == "clean" and self.sigma != 0:
            raise InvalidArgument("clean datasets carry sigma = 0")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def state_dim(self) -> int:
        return self.values.shape[-1]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.kind == other.kind
            and self.sigma == other.sigma
            and self.seed == other.seed
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class NoiseSpec:
    distribution: str = "gaussian"
    level_mode: str = "absolute_sigma"
    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.distribution not in ("gaussian", "uniform"):
            raise InvalidArgument(f"unknown noise distribution {self.distribution!r}")
        if self.level_mode not in ("absolute_sigma", "noise_ratio"):
            raise InvalidArgument(f"unknown level mode {self.level_mode!r}")
        if self.level < 0:
            raise InvalidArgument("noise level must be nonnegative")


def subsample(dataset: Dataset, factor_per_axis: int | Sequence[int]) -> Dataset:
    """Keep every ``factor``-th sample along each axis, anchored at index 0."""
    g = dataset.grid
    if np.isscalar(factor_per_axis):
        factors = (int(factor_per_axis),) * g.dims
    else:
        factors = tuple(int(f) for f in factor_per_axis)
    if len(factors) != g.dims or any(f < 1 for f in factors):
        raise InvalidArgument(f"invalid subsampling factors {factor_per_axis}")
    sl = tuple(slice(0, None, f) for f in factors)
    vals = dataset.values[sl]
    h = g.resolution
    extents = []
    for q, f in enumerate(factors):
        a = g.extents[q][0]
        n = vals.shape[q]
        extents.append((a, a + (n - 1) * f * h[q]))
    grid = make_grid(extents, vals.shape[:-1])
    return replace(dataset, grid=grid, values=vals, meta=dict(dataset.meta))


def stdev_all(dataset: Dataset | np.ndarray) -> float:
    """Population standard deviation of every entry, flattened."""
    vals = dataset.values if isinstance(dataset, Dataset) else np.asarray(dataset)
    return float(np.std(vals.ravel()))


def noise_rng(seed: int) -> np.random.Generator:
    # counter-based generator; draws fill arrays in row-major order
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def add_noise(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    if dataset.kind != "clean":
        raise InvalidArgument("noise may only be added to clean data")
    if spec.level_mode == "noise_ratio":
        sigma = spec.level * stdev_all(dataset)
    else:
        sigma = float(spec.level)
    rng = noise_rng(spec.seed)
    shape = dataset.values.shape
    if spec.distribution == "gaussian":
        eps = rng.standard_normal(size=shape)
    else:
        eps = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=shape)
    meta = dict(dataset.meta)
    meta.update(
        noise_distribution=spec.distribution,
        sigma_mode=spec.level_mode,
        noise_level=spec.level,
    )
    return Dataset(
        grid=dataset.grid,
        values=dataset.values + sigma * eps,
        kind="noisy",
        sigma=sigma,
        seed=int(spec.seed),
        meta=meta,
    )


def _header_text(ds: Dataset) -> str:
    g = ds.grid
    lines = [
        f"dims={g.dims}",
        "counts=" + ",".join(str(n) for n in g.counts),
        "extents=" + ";".join(f"{a!r},{b!r}" for a, b in g.extents),
        f"state_dim={ds.state_dim}",
        f"kind={ds.kind}",
        f"sigma={float(ds.sigma)!r}",
        f"seed={'none' if ds.seed is None else int(ds.seed)}",
    ]
    for k, v in sorted(ds.meta.items()):
        text = str(v)
        if "\n" in text or "=" in str(k):
            continue
        lines.append(f"meta.{k}={text}")
    return "\n".join(lines)


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    header = _header_text(dataset).encode("utf-8")
    payload = np.ascontiguousarray(dataset.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)


def read_dataset(path: str | Path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:8] != MAGIC:
        raise FormatError("bad magic")
    (hlen,) = struct.unpack("<I", raw[8:12])
    if 12 + hlen > len(raw):
        raise FormatError("truncated header")
    try:
        text = raw[12 : 12 + hlen].decode("utf-8")
        kv = dict(line.split("=", 1) for line in text.splitlines() if line)
        dims = int(kv["dims"])
        counts = tuple(int(c) for c in kv["counts"].split(","))
        extents = tuple(
            tuple(float(x) for x in pair.split(",")) for pair in kv["extents"].split(";")
        )
        state_dim = int(kv["state_dim"])
        kind = kv["kind"]
        sigma = float(kv["sigma"])
        seed = None if kv["seed"] == "none" else int(kv["seed"])
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed header: {exc}") from exc
    if len(counts) != dims or len(extents) != dims:
        raise FormatError("dims disagrees with counts/extents")
    payload = raw[12 + hlen :]
    expected = int(np.prod(counts)) * state_dim * 8
    if len(payload) != expected:
        raise FormatError(f"payload has {len(payload)} bytes, header implies {expected}")
    vals = np.frombuffer(payload, dtype="<f8").reshape(counts + (state_dim,))
    meta = {k[5:]: v for k, v in kv.items() if k.startswith("meta.")}
    try:
        grid = make_grid(extents, counts)
        return Dataset(grid, vals.astype(np.float64), kind, sigma, seed, meta)
    except InvalidArgument as exc:
        raise FormatError(str(exc)) from exc
