"""Batch command-line front end.

Exit codes: 0 success, 2 input or domain error, 3 numerical failure. Each run
writes its files under ``--out`` (default: $MIXFBM_OUTPUT_DIR or the working
directory) and prints a JSON summary to stdout. Outputs contain no timestamps,
so a fixed seed reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import estimation as est
from . import filtering as flt
from . import io
from . import kernels as kn
from . import paths as pth
from . import solver as sv
from .errors import InputError, MixFbmError, NumericalError


def _base(args, default: str) -> Path:
    if args.out:
        return Path(args.out)
    return io.default_output_dir() / default


def _meta(args, **extra) -> dict:
    fields = dict(
        command=args.command,
        seed=getattr(args, "seed", None),
        H=args.H,
        n=getattr(args, "n", None),
        T=getattr(args, "T", None),
        tolerances=sv.TOLERANCES,
    )
    fields.update(extra)
    return io.provenance(**fields)


def _emit(args, summary: dict, base: Path, csv_spec=None, gnuplot=None) -> dict:
    """Write CSV (+ JSON sidecar) or JSON only, per ``--format``."""
    files = []
    if csv_spec is not None and args.format == "csv":
        header, rows = csv_spec
        files.append(str(io.write_csv(base.with_suffix(".csv"), header, rows, meta=summary["provenance"])))
        if args.emit_gnuplot and gnuplot is not None:
            files.append(str(io.write_gnuplot(base.with_suffix(".gp"), base.with_suffix(".csv"), **gnuplot)))
    elif csv_spec is not None:
        header, rows = csv_spec
        summary = dict(summary, data={"columns": list(header), "rows": [list(r) for r in rows]})
    files.append(str(io.write_json(base.with_suffix(".json"), summary)))
    return summary


# ---------------------------------------------------------------- commands


def cmd_constants(args) -> dict:
    p = kn.constants(args.H)
    summary = {"provenance": io.provenance(command="constants", H=args.H), "constants": p.as_dict()}
    if args.out:
        io.write_json(Path(args.out).with_suffix(".json"), summary)
    return summary


def cmd_solve(args) -> dict:
    base = _base(args, "kernel")
    H = kn.constants(args.H).H
    mesh = args.mesh or None
    if args.tilde:
        fam = sv.solve_tilde_family(H, args.T, args.n, mesh_n=mesh)
        header = ["s", "t", "g_tilde", "R_tilde"]
        fields = [fam.g, fam.R]
    else:
        deriv = args.derivatives and H >= 0.5
        fam = sv.solve_g_family(H, args.T, args.n, derivatives=deriv, mesh_n=mesh)
        header = ["s", "t", "g", "g_dot", "R", "G"]
        blank = np.full(fam.g.shape, np.nan)
        fields = [fam.g] + ([fam.g_dot, fam.R, fam.G] if deriv else [blank, blank, blank])
    t = fam.grid.nodes
    rows = []
    for j in range(len(t)):
        for i in range(j + 1):
            rows.append([t[i], t[j]] + [F[j, i] for F in fields])
    summary = {
        "provenance": _meta(args, mesh_n=fam.mesh_n, tilde=bool(args.tilde)),
        "g_diag_T": fam.g_diag[-1],
        "bracket_T": fam.bracket[-1],
        "g_min": float(np.nanmin(fam.g)),
        "g_max": float(np.nanmax(fam.g)),
    }
    gp = dict(title=f"g(s,T), H={H}", using="1:3", xlabel="s", ylabel="g")
    return _emit(args, summary, base, (header, rows), gp)


def _sample(args, theta=None, components=("B", "BH")):
    grid = sv.Grid(args.n, args.T)
    return pth.simulate(args.H, grid, args.paths, args.seed, theta=theta,
                        method=getattr(args, "method", "cholesky"), components=components)


def _components(name: str):
    return {"mixed": ("B", "BH"), "B": ("B",), "BH": ("BH",)}[name]


def cmd_simulate(args) -> dict:
    base = _base(args, "paths")
    ps = _sample(args, theta=args.theta, components=_components(args.reference))
    labels = ps.labels
    t = ps.grid.nodes
    rows = []
    for p in range(ps.n_paths):
        for j in range(len(t)):
            rows.append([p, t[j]] + [ps[lab][p, j] for lab in labels])
    summary = {
        "provenance": _meta(args, theta=args.theta, n_paths=args.paths, reference=args.reference,
                            method=args.method),
        "X_T_mean": float(np.mean(ps["X"][:, -1])),
        "X_T_var": float(np.var(ps["X"][:, -1])),
    }
    gp = dict(title=f"paths, H={args.H}", using="2:5", xlabel="t", ylabel="X")
    return _emit(args, summary, base, (["path", "t"] + list(labels), rows), gp)


def _route(H: float, density: str) -> str:
    if density != "auto":
        return density
    if H == 0.5 or H > 0.75:
        return "wiener"
    if H < 0.25:
        return "fbm"
    return "wiener"  # the regime guard reports the singular range


def cmd_filter(args) -> dict:
    base = _base(args, "filter")
    H = kn.constants(args.H).H
    route = _route(H, args.density)
    default_ref = {"wiener": "B", "fbm": "BH", "none": "mixed"}[route]
    ps = _sample(args, components=_components(args.reference or default_ref))
    extra = {}
    if route == "fbm":
        flt._regime_fbm(H)
        tf = sv.solve_tilde_family(H, args.T, args.n)
        ld = flt.rn_density_fbm(tf, ps)
        M = W = phi = None
    else:
        if route == "wiener":
            flt._regime_wiener(H)
        if H < 0.5:
            fam = sv.solve_g_family(H, args.T, args.n)
            M = flt.martingale_path(fam, ps)
            W = phi = ld = None
        else:
            fam = sv.solve_g_family(H, args.T, args.n, derivatives=route == "wiener" and H != 0.5)
            out = flt.filter_paths(fam, ps, density=route == "wiener")
            M, W, phi, ld = out.M, out.W, out.phi, out.log_density
        if H == 0.5:
            extra["max_abs_M_minus_X_over_2"] = float(np.max(np.abs(M - ps["X"] / 2)))
    rows = []
    for p in range(ps.n_paths):
        row = [p]
        row.append(M[p, -1] if M is not None else None)
        row.append(W[p, -1] if W is not None else None)
        row.append(phi[p, -1] if phi is not None else None)
        if ld is not None:
            row += [ld[p], np.exp(ld[p]) if abs(ld[p]) < 30 else None]
        else:
            row += [None, None]
        rows.append(row)
    summary = {"provenance": _meta(args, route=route, n_paths=args.paths,
                                   reference=args.reference or default_ref)}
    summary.update(extra)
    if ld is not None:
        D = np.exp(np.clip(ld, -700, 700))
        summary.update(log_density_mean=float(np.mean(ld)), density_mean=float(np.mean(D)),
                       density_se=float(np.std(D, ddof=1) / np.sqrt(len(D))) if len(D) > 1 else None)
    header = ["path", "M_T", "W_T", "phi_T", "log_density", "density"]
    return _emit(args, summary, base, (header, rows))


def cmd_estimate(args) -> dict:
    base = _base(args, "estimate")
    grid = sv.Grid(args.n, args.T)
    ps = pth.simulate(args.H, grid, 1, args.seed, theta=args.theta)
    col = sv.solve_g(args.H, args.T, min(max(args.n, 64), 512))
    rep = est.mle_theta(col, grid, ps["Y"][0])
    summary = {"provenance": _meta(args, theta=args.theta), "report": rep.as_dict()}
    return _emit(args, summary, base)


def cmd_montecarlo(args) -> dict:
    base = _base(args, "montecarlo")
    reps = est.monte_carlo_mle(args.H, args.theta, args.T, args.n, args.reps, args.seed)
    rows = [[r.T, r.bias, r.bias_se, r.empirical_variance, r.variance_se, r.exact_variance,
             r.scaled_variance, r.asymptotic_constant] for r in reps]
    header = ["T", "bias", "bias_se", "empirical_variance", "variance_se", "exact_variance",
              "scaled_variance", "asymptotic_constant"]
    scaled = [r.scaled_variance for r in reps]
    summary = {
        "provenance": _meta(args, theta=args.theta, n_reps=args.reps),
        "reports": [r.as_dict() for r in reps],
        "scaled_variance_monotone": bool(all(a > b for a, b in zip(scaled, scaled[1:]))),
    }
    gp = dict(title=f"scaled variance, H={args.H}", using="1:7", xlabel="T", ylabel="scaled variance",
              logscale="x")
    return _emit(args, summary, base, (header, rows), gp)


def cmd_diagnose(args) -> dict:
    base = _base(args, "variation")
    ps = _sample(args)
    rep = pth.variation_diagnostic(ps[args.component], args.p, args.max_level)
    rows = [[int(l), s] for l, s in zip(rep.levels, rep.sums)]
    summary = {
        "provenance": _meta(args, n_paths=args.paths, p=args.p, component=args.component),
        "levels": rep.levels, "sums": rep.sums,
    }
    gp = dict(title=f"{args.p}-variation, H={args.H}", using="1:2", xlabel="level", ylabel="sum",
              logscale="y")
    return _emit(args, summary, base, (["level", "sum"], rows), gp)


# ---------------------------------------------------------------- parser


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixfbm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, T=True, n=True, seed=True, paths=False, out=True):
        sp.add_argument("--H", type=float, required=True, help="Hurst exponent in (0, 1]")
        if T:
            sp.add_argument("--T", type=float, default=1.0, help="horizon")
        if n:
            sp.add_argument("--n", type=int, default=256, help="grid panels (>= 8)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        if paths:
            sp.add_argument("--paths", type=_positive_int, default=100)
        if out:
            sp.add_argument("--out", help="output path without extension")
            sp.add_argument("--format", choices=("csv", "json"), default="csv")
            sp.add_argument("--emit-gnuplot", action="store_true", help="write a companion gnuplot script")

    sp = sub.add_parser("constants", help="print c_H, lambda_H, beta_H")
    sp.add_argument("--H", type=float, required=True)
    sp.add_argument("--out", help="also write JSON here")
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("solve", help="solve for the kernel family")
    common(sp, seed=False)
    sp.add_argument("--derivatives", action="store_true", help="also g_dot, R and G (H >= 1/2)")
    sp.add_argument("--tilde", action="store_true", help="tilde family (H < 1/2)")
    sp.add_argument("--mesh", type=int, default=0, help="unit-mesh panels (default min(max(n,64),256))")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("simulate", help="simulate paths")
    common(sp, paths=True)
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--reference", choices=("mixed", "B", "BH"), default="mixed")
    sp.add_argument("--method", choices=("cholesky", "circulant"), default="cholesky")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("filter", help="martingale, innovation and densities")
    common(sp, paths=True)
    sp.add_argument("--density", choices=("auto", "wiener", "fbm", "none"), default="auto")
    sp.add_argument("--reference", choices=("mixed", "B", "BH"), default=None,
                    help="law of the simulated paths (default: the density's reference measure)")
    sp.set_defaults(func=cmd_filter)

    sp = sub.add_parser("estimate", help="drift MLE from one simulated path")
    common(sp)
    sp.add_argument("--theta", type=float, default=1.0)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("montecarlo", help="Monte Carlo study of the drift MLE")
    sp.add_argument("--H", type=float, required=True)
    sp.add_argument("--theta", type=float, default=1.0)
    sp.add_argument("--T", type=float, nargs="+", default=[1.0])
    sp.add_argument("--n", type=int, default=256)
    sp.add_argument("--reps", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--emit-gnuplot", action="store_true")
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("diagnose", help="p-variation over dyadic partitions")
    common(sp, paths=True)
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--max-level", type=int, default=8)
    sp.add_argument("--component", choices=("X", "B", "BH"), default="X")
    sp.set_defaults(func=cmd_diagnose)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except MixFbmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(io.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
