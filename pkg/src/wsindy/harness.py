"""End-to-end discovery, Monte-Carlo sweeps, metrics and result tables."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core_data import Dataset, NoiseSpec, add_noise, subsample
from .errors import InvalidArgument, WsindyError
from .filtering import (
    FilterSpec,
    adaptive_smaf_width,
    estimate_sigma,
    filter_width_heuristic,
    moving_average,
)
from .simulate import SIMULATORS, SimConfig
from .sparsereg import SparseModel, fit_columns
from .testfn import radii_for_fraction
from .weaksys import LibrarySpec, WeakSystem, assemble, choose_query_points, weights_from_terms


@dataclass(frozen=True)
class SystemSpec:
    name: str
    library: LibrarySpec
    terms: tuple
    support_fraction: tuple[float, ...]

    def true_weights(self, library: LibrarySpec | None = None) -> np.ndarray:
        return weights_from_terms(library or self.library, [dict(t) for t in self.terms])


def _ode_alphas():
    return ((1,), (0,))


def _pde_alphas(q_max):
    return ((0, 1),) + tuple((q, 0) for q in range(q_max + 1))


SYSTEMS = {
    "lorenz": SystemSpec(
        "lorenz",
        LibrarySpec(3, 6, _ode_alphas()),
        (
            {((0,), (1, 0, 0)): -10.0, ((0,), (0, 1, 0)): 10.0},
            {((0,), (1, 0, 0)): 28.0, ((0,), (0, 1, 0)): -1.0, ((0,), (1, 0, 1)): -1.0},
            {((0,), (0, 0, 1)): -8.0 / 3.0, ((0,), (1, 1, 0)): 1.0},
        ),
        (0.02,),
    ),
    "cubic_oscillator": SystemSpec(
        "cubic_oscillator",
        LibrarySpec(2, 6, _ode_alphas()),
        (
            {((0,), (3, 0)): -0.1, ((0,), (0, 3)): 2.0},
            {((0,), (3, 0)): -2.0, ((0,), (0, 3)): -0.1},
        ),
        (0.02,),
    ),
    "burgers_nl": SystemSpec(
        "burgers_nl",
        LibrarySpec(1, 6, _pde_alphas(6)),
        (
            {
                ((2, 0), (1,)): 0.01,
                ((1, 0), (2,)): -0.5,
                ((0, 0), (3,)): -1.0,
                ((0, 0), (2,)): 2.0,
                ((0, 0), (0,)): 1.0,
            },
        ),
        (0.25, 0.25),
    ),
    "hyper_ks": SystemSpec(
        "hyper_ks",
        LibrarySpec(1, 8, _pde_alphas(8)),
        (
            {
                ((4, 0), (1,)): 1.0,
                ((6, 0), (1,)): 0.75,
                ((1, 0), (2,)): -0.5,
                ((3, 0), (2,)): 0.1,
            },
        ),
        (0.2, 0.2),
    ),
}


@dataclass(frozen=True)
class Hyperparams:
    library: LibrarySpec
    support_fraction: tuple[float, ...] | None = None
    radii: tuple[int, ...] | None = None
    K: int = 1000
    mode: str = "grid"
    filter_mode: str = "off"
    tau_star: float = 0.01
    lambda_grid: tuple[float, ...] | None = None


@dataclass
class DiscoveryResult:
    models: list[SparseModel]
    weights: np.ndarray
    system: WeakSystem
    radii: tuple[int, ...]
    filter_widths: tuple[int, ...] | None
    sigma_est: float | None

    @property
    def m(self) -> int:
        return self.system.m

    @property
    def K(self) -> int:
        return self.system.K

    @property
    def lambda_hat(self) -> float:
        return float(max(mod.lambda_hat for mod in self.models))

    def residual(self) -> float:
        return self.system.residual(self.weights)


def _adaptive_widths(dataset: Dataset, sigma_est: float) -> tuple[int, ...]:
    g = dataset.grid
    widths = []
    for q in range(g.dims):
        moved = np.moveaxis(dataset.values, q, 0)
        mid = tuple(s // 2 for s in moved.shape[1:-1])
        cands = []
        for c in range(dataset.state_dim):
            series = moved[(slice(None),) + mid + (c,)]
            n_max = max(3, (g.counts[q] // 4) | 1)
            cands.append(adaptive_smaf_width(series, sigma_est, g.resolution[q], n_max=n_max).width)
        w = int(np.median(cands))
        widths.append(w if w % 2 else w - 1)
    return tuple(widths)


def run_discovery(dataset: Dataset, hp: Hyperparams) -> DiscoveryResult:
    """Optional filter, weak-system assembly, then MSTLS on each state component."""
    if hp.radii is not None:
        radii = tuple(hp.radii)
    elif hp.support_fraction is not None:
        radii = radii_for_fraction(dataset.grid, hp.support_fraction)
    else:
        raise InvalidArgument("give either radii or support_fraction")
    m = int(np.prod([2 * r + 1 for r in radii]))
    widths = None
    sig = None
    data = dataset
    if hp.filter_mode != "off":
        sig = estimate_sigma(dataset).sigma_est
        if hp.filter_mode == "heuristic":
            widths = filter_width_heuristic(
                sig, hp.library.poly_max_total_degree, hp.tau_star, dataset.grid.dims - 1, m
            )
        elif hp.filter_mode == "adaptive":
            widths = _adaptive_widths(dataset, sig)
        else:
            raise InvalidArgument(f"unknown filter mode {hp.filter_mode!r}")
        data = moving_average(dataset, FilterSpec(widths))
    ws = assemble(data, hp.library, radii, requested_K=hp.K)
    kw = {"mode": hp.mode}
    if hp.lambda_grid is not None:
        kw["lambda_grid"] = np.asarray(hp.lambda_grid)
    models = fit_columns(ws.G, ws.b, **kw)
    W = np.stack([mod.weights for mod in models], axis=1)
    return DiscoveryResult(models, W, ws, radii, widths, sig)


def metrics(w_hat, w_true) -> tuple[bool, bool, float]:
    """(support equal, support contained, max relative error over the true support)."""
    w_hat = np.asarray(w_hat, dtype=np.float64)
    w_true = np.asarray(w_true, dtype=np.float64)
    S_hat = w_hat != 0
    S_true = w_true != 0
    exact = bool(np.array_equal(S_hat, S_true))
    subset = bool(not np.any(S_hat & ~S_true))
    e_inf = float(np.max(np.abs(w_hat[S_true] - w_true[S_true]) / np.abs(w_true[S_true])))
    return exact, subset, e_inf


@dataclass
class ExperimentConfig:
    system: str
    ladder: tuple[int, ...] = (1,)
    noise_levels: tuple[float, ...] = (0.0,)
    sigma_mode: str = "noise_ratio"
    distribution: str = "gaussian"
    trials: int = 20
    support_fraction: tuple[float, ...] | None = None
    radii: tuple[int, ...] | None = None
    p_max: int | None = None
    K: int = 1000
    mode: str = "grid"
    filter_mode: str = "off"
    tau_star: float = 0.01
    master_seed: int = 0
    n_t: int | None = None
    n_x: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise InvalidArgument(f"unknown system {self.system!r}")
        if self.trials < 1 or not self.ladder:
            raise InvalidArgument("need trials >= 1 and a nonempty ladder")
        if self.sigma_mode not in ("noise_ratio", "absolute_sigma"):
            raise InvalidArgument(f"unknown sigma mode {self.sigma_mode!r}")

    def library(self) -> LibrarySpec:
        lib = SYSTEMS[self.system].library
        if self.p_max is not None:
            lib = replace(lib, poly_max_total_degree=self.p_max)
        return lib

    def hyperparams(self) -> Hyperparams:
        frac = self.support_fraction or SYSTEMS[self.system].support_fraction
        return Hyperparams(
            self.library(),
            support_fraction=None if self.radii else tuple(frac),
            radii=self.radii,
            K=self.K,
            mode=self.mode,
            filter_mode=self.filter_mode,
            tau_star=self.tau_star,
        )


@dataclass
class TrialResult:
    system: str
    sigma_mode: str
    sigma: float
    m: int
    trial: int
    support_exact: bool
    support_subset: bool
    e_inf: float
    lambda_hat: float
    runtime_ms: float
    seed: int
    status: str = "ok"
    sigma_index: int = 0
    m_index: int = 0


RESULT_COLUMNS = [
    "system", "sigma_mode", "sigma", "m", "trial", "support_exact", "support_subset",
    "e_inf", "lambda_hat", "runtime_ms", "seed", "status",
]
AGGREGATE_COLUMNS = [
    "system", "sigma", "m", "p_exact", "p_subset", "mean_e_inf_exact", "mean_e_inf_all",
    "n_trials",
]


def trial_seed(master_seed: int, sigma_index: int, m_index: int, trial: int) -> int:
    """Stable 64-bit seed for one (noise level, resolution, trial) cell entry."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(sigma_index, m_index, trial))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[TrialResult]
    cells: list[dict] = field(default_factory=list)

    def aggregates(self) -> list[dict]:
        return aggregate(self.rows)


def aggregate(rows: Sequence[TrialResult]) -> list[dict]:
    groups: dict[tuple, list[TrialResult]] = {}
    for r in rows:
        groups.setdefault((r.system, r.sigma_index, r.m_index), []).append(r)
    out = []
    for (system, _, _), rs in sorted(groups.items(), key=lambda kv: kv[0]):
        ok = [r for r in rs if r.status == "ok"]
        n = len(ok)
        exact = [r for r in ok if r.support_exact]
        out.append({
            "system": system,
            "sigma": rs[0].sigma,
            "m": rs[0].m,
            "p_exact": len(exact) / n if n else float("nan"),
            "p_subset": sum(r.support_subset for r in ok) / n if n else float("nan"),
            "mean_e_inf_exact": float(np.mean([r.e_inf for r in exact])) if exact else float("nan"),
            "mean_e_inf_all": float(np.mean([r.e_inf for r in ok])) if ok else float("nan"),
            "n_trials": n,
        })
    return out


def clean_dataset(config: ExperimentConfig) -> Dataset:
    sim = SimConfig(config.system, n_t=config.n_t, n_x=config.n_x)
    return SIMULATORS[config.system](sim)


def run_experiment(
    config: ExperimentConfig,
    clean: Dataset | None = None,
    progress: Callable[[TrialResult], None] | None = None,
) -> ExperimentResult:
    """Sweep noise levels x resolutions x trials; failures become rows, never aborts."""
    clean = clean if clean is not None else clean_dataset(config)
    hp = config.hyperparams()
    w_true = SYSTEMS[config.system].true_weights(hp.library)
    levels = [subsample(clean, f) for f in config.ladder]
    cells = []
    tasks = []
    for mi, data in enumerate(levels):
        radii = hp.radii or radii_for_fraction(data.grid, hp.support_fraction)
        m = int(np.prod([2 * r + 1 for r in radii]))
        cells.append({"m_index": mi, "factor": config.ladder[mi], "counts": data.grid.counts,
                      "radii": radii, "m": m})
        for si, level in enumerate(config.noise_levels):
            for t in range(config.trials):
                tasks.append((si, mi, t, level, data, radii, m))

    def one(task):
        si, mi, t, level, data, radii, m = task
        seed = trial_seed(config.master_seed, si, mi, t)
        t0 = time.perf_counter()
        try:
            noisy = add_noise(data, NoiseSpec(config.distribution, config.sigma_mode, level, seed))
            res = run_discovery(noisy, replace(hp, radii=radii))
            exact, subset, e_inf = metrics(res.weights, w_true)
            row = TrialResult(config.system, config.sigma_mode, level, m, t, exact, subset,
                              e_inf, res.lambda_hat, 0.0, seed, "ok", si, mi)
        except (WsindyError, np.linalg.LinAlgError, FloatingPointError) as exc:
            row = TrialResult(config.system, config.sigma_mode, level, m, t, False, False,
                              float("nan"), float("nan"), 0.0, seed,
                              f"error:{type(exc).__name__}", si, mi)
        row.runtime_ms = (time.perf_counter() - t0) * 1e3
        if progress is not None:
            progress(row)
        return row

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as ex:
            rows = list(ex.map(one, tasks))
    else:
        rows = [one(task) for task in tasks]
    rows.sort(key=lambda r: (r.sigma_index, r.m_index, r.trial))
    return ExperimentResult(config, rows, cells)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, tuple):
        return "x".join(str(v) for v in x)
    return str(x)


def write_results_csv(rows: Sequence[TrialResult], path, include_runtime: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(RESULT_COLUMNS)
        for r in rows:
            vals = [getattr(r, c) for c in RESULT_COLUMNS]
            if not include_runtime:
                vals[RESULT_COLUMNS.index("runtime_ms")] = 0.0
            else:
                vals[RESULT_COLUMNS.index("runtime_ms")] = round(r.runtime_ms, 3)
            wr.writerow([_fmt(v) for v in vals])


def write_aggregate_csv(aggs: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(AGGREGATE_COLUMNS)
        for a in aggs:
            wr.writerow([_fmt(a[c]) for c in AGGREGATE_COLUMNS])


def write_cells_csv(cells: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["m_index", "factor", "counts", "radii", "m"])
        for c in cells:
            wr.writerow([_fmt(c[k]) for k in ["m_index", "factor", "counts", "radii", "m"]])


def read_results_csv(path) -> list[TrialResult]:
    rows = []
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            rows.append(TrialResult(
                d["system"], d["sigma_mode"], float(d["sigma"]), int(d["m"]), int(d["trial"]),
                d["support_exact"] == "1", d["support_subset"] == "1", float(d["e_inf"]),
                float(d["lambda_hat"]), float(d["runtime_ms"]), int(d["seed"]), d["status"],
            ))
    # cell indices follow first appearance order of (sigma, m)
    sig_idx: dict = {}
    m_idx: dict = {}
    for r in rows:
        r.sigma_index = sig_idx.setdefault(r.sigma, len(sig_idx))
        r.m_index = m_idx.setdefault(r.m, len(m_idx))
    return rows


_CONFIG_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_tuple(text, conv):
    return tuple(conv(x) for x in text.replace(";", ",").split(",") if x.strip())


def parse_config(text: str) -> ExperimentConfig:
    """Read flat ``key=value`` lines (``#`` comments allowed) into a config."""
    kv = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"bad config line {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in _CONFIG_TYPES:
            raise InvalidArgument(f"unknown config key {k!r}")
        kv[k] = v
    out = {}
    for k, v in kv.items():
        if k in ("ladder", "radii"):
            out[k] = _parse_tuple(v, int)
        elif k in ("noise_levels", "support_fraction"):
            out[k] = _parse_tuple(v, float)
        elif k in ("trials", "K", "master_seed", "p_max", "n_t", "n_x", "workers"):
            out[k] = int(v)
        elif k == "tau_star":
            out[k] = float(v)
        else:
            out[k] = v
    return ExperimentConfig(**out)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


@dataclass
class ConcentrationReport:
    factors: tuple[int, ...]
    m: tuple[int, ...]
    median_errors: tuple[float, ...]
    decay_factors: tuple[float, ...]
    reference_draws: int
    note: str = "reference is a noise-ensemble average at the finest grid (approximation)"


def concentration_study(
    clean: Dataset,
    library: LibrarySpec,
    factors: Sequence[int],
    coarse_radii: Sequence[int],
    sigma: float,
    n_draws: int = 20,
    n_reference: int = 200,
    K: int = 200,
    reference_factor: int = 1,
    seed: int = 0,
) -> ConcentrationReport:
    """Median max-entry deviation of noisy G from a reference, across resolutions.

    Query points are fixed physical locations chosen on the coarsest level;
    stencil radii scale exactly with the subsampling factor so every level
    tests the same physical function.
    """
    coarsest = max(factors)
    if any(coarsest % f for f in factors) or coarsest % reference_factor:
        raise InvalidArgument("factors must divide the coarsest factor")
    coarse = subsample(clean, coarsest)
    qp_coarse = choose_query_points(coarse.grid, coarse_radii, K)

    def level(f):
        data = subsample(clean, f)
        scale = coarsest // f
        radii = tuple(r * scale for r in coarse_radii)
        return data, radii, qp_coarse * scale

    rng_root = np.random.SeedSequence(int(seed))
    ref_data, ref_radii, ref_qp = level(reference_factor)
    ref_seeds = rng_root.spawn(1)[0].generate_state(n_reference, np.uint64)
    acc = None
    for s in ref_seeds:
        noisy = add_noise(ref_data, NoiseSpec("gaussian", "absolute_sigma", sigma, int(s)))
        G = assemble(noisy, library, ref_radii, ref_qp).G
        acc = G if acc is None else acc + G
    G_ref = acc / n_reference

    medians, ms = [], []
    for i, f in enumerate(sorted(factors, reverse=True)):
        data, radii, qp = level(f)
        seeds = np.random.SeedSequence(int(seed), spawn_key=(1, i)).generate_state(n_draws, np.uint64)
        errs = []
        for s in seeds:
            noisy = add_noise(data, NoiseSpec("gaussian", "absolute_sigma", sigma, int(s)))
            errs.append(np.max(np.abs(assemble(noisy, library, radii, qp).G - G_ref)))
        medians.append(float(np.median(errs)))
        ms.append(int(np.prod([2 * r + 1 for r in radii])))
    decay = tuple(medians[i] / medians[i + 1] for i in range(len(medians) - 1))
    return ConcentrationReport(
        tuple(sorted(factors, reverse=True)), tuple(ms), tuple(medians), decay, n_reference
    )
