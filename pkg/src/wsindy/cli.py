"""Command line entry point: simulate, discover, experiment, bias, estimate-noise."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace

import numpy as np

from .bias import (
    critical_noise_bounds,
    exact_critical_noise,
    moment_matrix,
    mstls_critical_bounds,
    mu_star,
    predict_continuum_coefficients,
)
from .core_data import NoiseSpec, add_noise, read_dataset, write_dataset
from .errors import WsindyError
from .filtering import estimate_sigma
from .harness import (
    SYSTEMS,
    Hyperparams,
    load_config,
    metrics,
    run_discovery,
    run_experiment,
    write_aggregate_csv,
    write_cells_csv,
    write_results_csv,
)
from .simulate import SimConfig, simulate
from .sparsereg import threshold_feasibility
from .testfn import radii_for_fraction
from .weaksys import assemble, write_system_csv


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _library(system, p_max):
    lib = SYSTEMS[system].library
    return lib if p_max is None else replace(lib, poly_max_total_degree=p_max)


def cmd_simulate(args) -> int:
    cfg = SimConfig(args.system, t_final=args.t_final, n_t=args.n_t, n_x=args.n_x,
                    burn_in=args.burn_in)
    ds = simulate(cfg)
    if args.noise > 0:
        ds = add_noise(ds, NoiseSpec(args.distribution, args.sigma_mode, args.noise, args.seed))
    write_dataset(ds, args.out)
    print(f"wrote {args.out}: counts={ds.grid.counts} state_dim={ds.state_dim} kind={ds.kind}")
    return 0


def cmd_discover(args) -> int:
    ds = read_dataset(args.data)
    lib = _library(args.system, args.p_max)
    frac = args.support_fraction or SYSTEMS[args.system].support_fraction
    hp = Hyperparams(lib, support_fraction=None if args.radii else frac, radii=args.radii,
                     K=args.K, mode=args.mode, filter_mode=args.filter, tau_star=args.tau_star)
    res = run_discovery(ds, hp)
    labels = res.system.column_index.labels()
    print(f"radii={res.radii} m={res.m} K={res.K} filter={res.filter_widths}")
    for c in range(res.weights.shape[1]):
        terms = [f"{res.weights[i, c]:+.6g} {labels[i]}" for i in np.flatnonzero(res.weights[:, c])]
        print(f"du{c + 1}: " + (" ".join(terms) if terms else "0"))
    w_true = SYSTEMS[args.system].true_weights(lib)
    if ds.state_dim == w_true.shape[1]:
        exact, subset, e_inf = metrics(res.weights, w_true)
        print(f"support_exact={int(exact)} support_subset={int(subset)} e_inf={e_inf:.6g}")
    if args.weights_csv:
        with open(args.weights_csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["term"] + [f"u{c + 1}" for c in range(res.weights.shape[1])])
            for i, lab in enumerate(labels):
                wr.writerow([lab] + [repr(float(x)) for x in res.weights[i]])
    if args.loss_trace:
        res.models[0].write_loss_trace(args.loss_trace)
    if args.system_csv:
        write_system_csv(res.system, args.system_csv)
    return 0


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)

    def progress(row):
        if args.verbose:
            print(f"sigma={row.sigma:g} m={row.m} trial={row.trial} exact={int(row.support_exact)}"
                  f" status={row.status}", file=sys.stderr)

    result = run_experiment(cfg, progress=progress)
    write_results_csv(result.rows, args.out, include_runtime=not args.no_runtime)
    aggs = result.aggregates()
    if args.aggregate:
        write_aggregate_csv(aggs, args.aggregate)
    if args.cells:
        write_cells_csv(result.cells, args.cells)
    print(f"{'sigma':>10} {'m':>8} {'p_exact':>8} {'p_subset':>8} {'E_inf':>10} {'n':>4}")
    for a in aggs:
        print(f"{a['sigma']:>10.4g} {a['m']:>8d} {a['p_exact']:>8.3f} {a['p_subset']:>8.3f}"
              f" {a['mean_e_inf_exact']:>10.4g} {a['n_trials']:>4d}")
    return 0


def cmd_bias(args) -> int:
    spec = SYSTEMS[args.system]
    lib = _library(args.system, args.p_max)
    w = spec.true_weights(lib)
    labels = lib.column_index().labels()
    lo, hi, case = critical_noise_bounds(w, lib)
    flip = exact_critical_noise(w, lib)
    print(f"system={args.system} {case}")
    print(f"sigma_c^2 bracket: [{lo:.6g}, {hi:.6g}]  "
          f"sigma_c bracket: [{math.sqrt(lo):.6g}, {math.sqrt(hi):.6g}]")
    print(f"sigma_c exact (pattern): {flip:.6g}")
    if args.clean_data:
        ds = read_dataset(args.clean_data)
        ws = assemble(ds, lib, radii_for_fraction(ds.grid, spec.support_fraction))
        G_star, b_star = ws.G, ws.b
        mlo, mhi = mstls_critical_bounds(G_star, w, lib)
        print(f"MSTLS sigma_c^2 bracket: [{mlo:.6g}, {mhi:.6g}]")
        for c in range(w.shape[1]):
            mu = mu_star(G_star, b_star[:, c], np.flatnonzero(w[:, c]), lib.n_columns)
            print(f"mu* (u{c + 1}): {mu:.6g}")
    rows = []
    for sig in args.sigma:
        wb = predict_continuum_coefficients(w, moment_matrix(lib, sig, args.distribution))
        for c in range(w.shape[1]):
            d1 = threshold_feasibility(wb[:, c], np.flatnonzero(w[:, c]))
            print(f"\nsigma={sig:g} u{c + 1}: delta_1={d1:+.6g}")
            print(f"  {'term':<22} {'w*':>12} {'w_bar':>12}")
            for i in np.flatnonzero((np.abs(wb[:, c]) > 1e-14) | (w[:, c] != 0)):
                print(f"  {labels[i]:<22} {w[i, c]:>12.6g} {wb[i, c]:>12.6g}")
                rows.append([sig, c + 1, labels[i], repr(float(w[i, c])), repr(float(wb[i, c])),
                             repr(float(d1))])
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["sigma", "component", "term", "w_true", "w_bar", "delta_1"])
            wr.writerows(rows)
    return 0


def cmd_estimate_noise(args) -> int:
    est = estimate_sigma(read_dataset(args.data))
    print(f"sigma_est={est.sigma_est:.6g}")
    for q, s in enumerate(est.per_axis):
        print(f"axis{q}={s:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wsindy", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    systems = sorted(SYSTEMS)

    s = sub.add_parser("simulate", help="write a reference solution as a WSD1 file")
    s.add_argument("system", choices=systems)
    s.add_argument("--out", required=True)
    s.add_argument("--t-final", type=float)
    s.add_argument("--n-t", type=int)
    s.add_argument("--n-x", type=int)
    s.add_argument("--burn-in", type=float, default=0.0)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--sigma-mode", choices=["noise_ratio", "absolute_sigma"], default="noise_ratio")
    s.add_argument("--distribution", choices=["gaussian", "uniform"], default="gaussian")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("discover", help="run filter, assembly and MSTLS on a WSD1 file")
    d.add_argument("data")
    d.add_argument("--system", choices=systems, required=True)
    d.add_argument("--p-max", type=int)
    d.add_argument("--support-fraction", type=_floats)
    d.add_argument("--radii", type=_ints)
    d.add_argument("--K", type=int, default=1000)
    d.add_argument("--mode", choices=["grid", "oneshot"], default="grid")
    d.add_argument("--filter", choices=["off", "heuristic", "adaptive"], default="off")
    d.add_argument("--tau-star", type=float, default=0.01)
    d.add_argument("--weights-csv")
    d.add_argument("--loss-trace")
    d.add_argument("--system-csv")
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("experiment", help="Monte-Carlo sweep from a key=value config")
    e.add_argument("config")
    e.add_argument("--out", required=True)
    e.add_argument("--aggregate")
    e.add_argument("--cells")
    e.add_argument("--workers", type=int)
    e.add_argument("--no-runtime", action="store_true", help="write runtime_ms as 0")
    e.add_argument("-v", "--verbose", action="store_true")
    e.set_defaults(func=cmd_experiment)

    b = sub.add_parser("bias", help="continuum coefficients and critical-noise brackets")
    b.add_argument("system", choices=systems)
    b.add_argument("--sigma", type=_floats, default=(0.0,))
    b.add_argument("--distribution", choices=["gaussian", "uniform"], default="gaussian")
    b.add_argument("--p-max", type=int)
    b.add_argument("--clean-data", help="WSD1 file used to form G*, b* for mu*")
    b.add_argument("--csv")
    b.set_defaults(func=cmd_bias)

    n = sub.add_parser("estimate-noise", help="6th-difference noise estimate of a WSD1 file")
    n.add_argument("data")
    n.set_defaults(func=cmd_estimate_noise)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WsindyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
