"""Command-line front end.

Subcommands: cf-stats, spectrum, transport, constants.  Every run writes
machine-readable CSV (default) or JSON; the first line of every output
embeds a hash of the fully resolved configuration, so identical
configurations produce byte-identical files.  Exit codes: 0 success,
2 validation failure, 3 numerical non-convergence.

Environment: STURMIAN_OUTDIR overrides the default output directory,
STURMIAN_THREADS caps the BLAS thread pools (read before numpy loads).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence


def _apply_thread_env():
    threads = os.environ.get("STURMIAN_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


_apply_thread_env()

import numpy as np

from . import cf as cfmod
from . import spectrum as spmod
from . import tracemap as tmmod
from . import transport as tpmod
from .errors import NonConvergedError, SturmianError, ValidationError

EXIT_VALIDATION = 2
EXIT_NONCONVERGED = 3


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

def _config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _fmt(x) -> str:
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


class OutputWriter:
    def __init__(self, outdir: Path, fmt: str, config: dict):
        self.outdir = outdir
        self.fmt = fmt
        self.config = config
        self.hash = _config_hash(config)
        outdir.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []

    def table(self, name: str, header: list[str], rows: list[list]):
        if self.fmt == "csv":
            path = self.outdir / f"{name}.csv"
            lines = [f"# config={self.hash}", ",".join(header)]
            lines += [",".join(_fmt(v) for v in row) for row in rows]
            path.write_text("\n".join(lines) + "\n")
        else:
            path = self.outdir / f"{name}.json"
            payload = {
                "config_hash": self.hash,
                "config": self.config,
                "columns": header,
                "rows": _plain(rows),
            }
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        self.written.append(str(path))

    def summary(self, name: str, data: dict):
        path = self.outdir / f"{name}.json"
        payload = {"config_hash": self.hash, "config": self.config, **_plain(data)}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        self.written.append(str(path))


def _resolve_config(args: argparse.Namespace, keys: list[str]) -> dict:
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config file {args.config}: {exc}")
        if not isinstance(file_cfg, dict):
            raise ValidationError("config file must hold a JSON object")
    config = {}
    for key in keys:
        cli_val = getattr(args, key.replace("-", "_"))
        if cli_val is not None:
            config[key] = cli_val
        elif key in file_cfg:
            config[key] = file_cfg[key]
    return config


def _model_params(config: dict) -> tmmod.ModelParams:
    kind = config.get("model", "offdiag")
    if kind not in ("diag", "offdiag"):
        raise ValidationError("model must be 'diag' or 'offdiag'")
    l1 = config.get("l1")
    if l1 is None:
        raise ValidationError("--l1 is required")
    if kind == "diag":
        return tmmod.ModelParams.diagonal(float(l1))
    l2 = config.get("l2", 1.0)
    return tmmod.ModelParams.offdiagonal(float(l1), float(l2))


def _outdir(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(os.environ.get("STURMIAN_OUTDIR", "."))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_cf_stats(args) -> int:
    config = _resolve_config(args, ["cf", "k", "format"])
    config.setdefault("cf", "golden")
    config.setdefault("k", 1000)
    config.setdefault("format", args.format or "csv")
    cf = cfmod.ContinuedFraction.parse(config["cf"])
    k = int(config["k"])
    if k < 1:
        raise ValidationError("--k must be >= 1")
    quotients = cf.quotients(k)

    writer = OutputWriter(_outdir(args), config["format"], config)
    density_rows = [
        [r, cfmod.gauss_kuzmin_density(r),
         quotients.count(r) / k]
        for r in range(1, 31)
    ]
    writer.table("cf_density", ["r", "gauss_kuzmin", "empirical"], density_rows)

    ck_rows = []
    running = 0.0
    checkpoints = sorted({min(k, max(1, int(k * f))) for f in
                          (0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0)})
    cum = np.cumsum([math.log(a + 2.0) for a in quotients])
    for j in checkpoints:
        ck_rows.append([j, 3.0 * cum[j - 1] / j])
    writer.table("cf_ck_trace", ["k", "C_k"], ck_rows)

    pair_rows = []
    pairs = list(zip(quotients[0::2], quotients[1::2]))
    npairs = len(pairs)
    for lam in range(1, 6):
        for gam in range(1, 6):
            law = cfmod.pair_probability(lam, gam)
            emp = sum(1 for pr in pairs if pr == (lam, gam)) / npairs if npairs else 0.0
            pair_rows.append([lam, gam, law, emp])
    writer.table("cf_pairs", ["lam", "gam", "law", "empirical"], pair_rows)

    c_value = cfmod.khintchin_C(1e-6)
    writer.summary("cf_stats", {
        "C_k": 3.0 * float(cum[-1]) / k,
        "khintchin_C": c_value,
        "quotients_used": k,
    })
    print(f"wrote {len(writer.written)} files to {writer.outdir}")
    return 0


def cmd_spectrum(args) -> int:
    config = _resolve_config(
        args, ["cf", "model", "l1", "l2", "level", "tol", "bounds", "format"]
    )
    config.setdefault("cf", "golden")
    config.setdefault("level", 6)
    config.setdefault("tol", 1e-12)
    config.setdefault("bounds", False)
    config.setdefault("format", args.format or "csv")
    params = _model_params(config)
    cf = cfmod.ContinuedFraction.parse(config["cf"])
    level = int(config["level"])
    if level < 2:
        raise ValidationError("--level must be >= 2")
    tol = float(config["tol"])

    writer = OutputWriter(_outdir(args), config["format"], config)
    labelled = (
        params.kind == "diagonal" and params.lambda1 > 20.0
    ) or (
        params.kind == "offdiagonal" and params.coupling > 4.0
        and cf.is_golden_through(level + 2)
    )
    band_rows = []
    measure_rows = []
    if labelled and params.kind == "diagonal":
        tree = spmod.RaymondBandTree(params, cf, level, tol=tol)
        covers = [tree.cover(k) for k in range(level + 1)]
    elif labelled:
        tree = spmod.FibonacciBandTree(params, cf, max(level, 3), tol=tol)
        covers = [tree.cover(k) for k in range(level + 1)]
    else:
        print(
            "warning: coupling below the labelled-taxonomy threshold; "
            "grid-scan fallback without labels",
            file=sys.stderr,
        )
        if config["bounds"]:
            raise ValidationError(
                "band-length bounds refuse to run below the coupling threshold"
            )
        covers = [spmod.grid_scan_bands(params, cf, k, tol=tol)
                  for k in range(2, level + 1)]
    for cover in covers:
        measure_rows.append([cover.level, len(cover.bands), cover.total_measure])
        for i, band in enumerate(cover.bands):
            row = [cover.level, i, band.lo, band.hi, band.length, band.label,
                   band.tau_str()]
            if config["bounds"] and params.kind == "diagonal":
                lo_b, hi_b = spmod.band_length_bounds(band.tau, cf, params.lambda1)
                row += [lo_b, hi_b]
            band_rows.append(row)
    header = ["level", "band_index", "lo", "hi", "length", "label", "tau"]
    if config["bounds"] and params.kind == "diagonal":
        header += ["len_lower", "len_upper"]
    writer.table("bands", header, band_rows)
    writer.table("measures", ["level", "bands", "total_measure"], measure_rows)

    if params.kind == "diagonal" and params.lambda1 > 20.0:
        counts = spmod.band_counts_sequence(cf, level)
        writer.table(
            "counts", ["level", "nI", "nII", "nIII"],
            [[c.level, c.nI, c.nII, c.nIII] for c in counts],
        )
    summary = {"levels": level, "labelled": labelled}
    if params.kind == "diagonal" and params.lambda1 > 20.0:
        summary["dim_lower_bound"] = spmod.dim_lower_bound(cf, params.lambda1, max(level, 8))
    if params.kind == "offdiagonal" and params.coupling > 8.0:
        summary["xi_c"] = spmod.xi_c(params.coupling)
        summary["alpha_upper_bound"] = spmod.alpha_upper_bound(params)
    writer.summary("spectrum_summary", summary)
    print(f"wrote {len(writer.written)} files to {writer.outdir}")
    return 0


def cmd_transport(args) -> int:
    config = _resolve_config(
        args,
        ["cf", "model", "l1", "l2", "L", "tmax", "ntimes", "N", "bound",
         "alphas", "format"],
    )
    config.setdefault("cf", "golden")
    config.setdefault("tmax", 50.0)
    config.setdefault("ntimes", 16)
    config.setdefault("bound", False)
    config.setdefault("format", args.format or "csv")
    params = _model_params(config)
    cf = cfmod.ContinuedFraction.parse(config["cf"])
    L = config.get("L")
    if L is None:
        raise ValidationError("--L is required")
    L = int(L)
    if L < 3 or L % 2 == 0:
        raise ValidationError("--L must be odd and >= 3")
    tmax = float(config["tmax"])
    if tmax <= 1.0:
        raise ValidationError("--tmax must exceed 1")
    # crude light-cone check before doing any heavy work
    speed = 2.0 * max(1.0, params.lambda1, params.lambda2)
    if params.kind == "offdiagonal" and speed * tmax > 4.0 * L:
        raise ValidationError(
            f"tmax {tmax} is far outside the box light cone for L={L}"
        )
    ntimes = int(config["ntimes"])
    if ntimes < 5:
        raise ValidationError("--ntimes must be >= 5")

    op = tpmod.build_operator(params, cf, L)
    times = np.geomspace(max(1.0, tmax / 10 ** 1.6), tmax, ntimes)
    grid = tpmod.evolve(op, times)
    writer = OutputWriter(_outdir(args), config["format"], config)

    grid_rows = [
        [int(n), float(t), float(grid.probs[i, j])]
        for j, t in enumerate(grid.times)
        for i, n in enumerate(grid.sites)
        if grid.probs[i, j] > 1e-14
    ]
    writer.table("probability_grid", ["n", "t", "prob"], grid_rows)

    n_cut = config.get("N")
    cuts = [int(n_cut)] if n_cut is not None else [int(L / 8), int(L / 4)]
    out_rows = []
    for N in cuts:
        for t in grid.times:
            P, Pr, Pl = tpmod.outside_probability(grid, N, float(t))
            out_rows.append([N, float(t), P, Pr, Pl])
    writer.table("outside", ["N", "t", "P", "P_r", "P_l"], out_rows)

    alphas = config.get("alphas") or "0.1:1.2:0.05"
    lo, hi, step = (float(v) for v in alphas.split(":"))
    alpha_grid = list(np.arange(lo, hi + 1e-12, step))
    avg_times = np.geomspace(max(2.0, tmax / 10 ** 1.6), tmax, max(6, ntimes // 2))
    agrid = tpmod.averaged_grid(op, avg_times)
    summary = tpmod.fit_exponents(agrid, alpha_grid, params=params)
    writer.table(
        "exponents", ["alpha", "slope"],
        [[a, summary.slopes[a]] for a in sorted(summary.slopes)],
    )

    bound_rows = []
    c0 = None
    if config["bound"]:
        if params.coupling <= 8.0:
            raise ValidationError("--bound requires coupling c > 8")
        ratios = []
        for T in avg_times:
            N_T = tpmod.scale_N_of_T(cf, params, float(T))
            if N_T >= (L - 1) // 2:
                continue
            lhs = tpmod.averaged_outside(op, N_T, float(T))
            rhs = tpmod.transfer_bound_rhs(params, cf, N_T, float(T), averaged=True)
            if not rhs.converged:
                raise NonConvergedError("transfer-bound quadrature did not converge")
            bound_rows.append([float(T), N_T, lhs, rhs.value])
            if rhs.value > 0:
                ratios.append(lhs / rhs.value)
        c0 = max(ratios) if ratios else None
        writer.table("bound_table", ["T", "N", "lhs", "rhs"], bound_rows)

    summary_data = {
        "valid": grid.valid,
        "offending_time": grid.offending_time,
        "alpha_estimates": summary.alpha_estimates,
        "theoretical_bound": summary.theoretical_bound,
        "fitted_C0": c0,
    }
    writer.summary("transport_summary", summary_data)
    if not grid.valid:
        print(
            f"warning: boundary mass exceeded at t={grid.offending_time}; "
            "results flagged invalid",
            file=sys.stderr,
        )
    print(f"wrote {len(writer.written)} files to {writer.outdir}")
    return 0


def cmd_constants(args) -> int:
    config = _resolve_config(args, ["terms", "tol", "xi-grid", "l1", "format"])
    config.setdefault("terms", 10 ** 5)
    config.setdefault("tol", 1e-4)
    config.setdefault("l1", 24.0)
    config.setdefault("format", args.format or "csv")
    terms = int(config["terms"])
    tol = float(config["tol"])
    l1 = float(config["l1"])

    writer = OutputWriter(_outdir(args), config["format"], config)
    d_series = spmod.compute_D(terms)
    c_value = cfmod.khintchin_C(tol)
    golden = cfmod.ContinuedFraction.golden()
    theorem5 = spmod.dim_lower_bound(golden, l1, 60)

    xi_rows = []
    grid_spec = config.get("xi-grid", "8:40:1")
    lo, hi, step = (float(v) for v in grid_spec.split(":"))
    c = lo
    while c <= hi + 1e-12:
        xi_rows.append([c, spmod.xi_c(c),
                        2.0 * math.log(tmmod.PHI) / math.log(spmod.xi_c(c))
                        if c > 8 else ""])
        c += step
    writer.table("xi_table", ["c", "xi_c", "alpha_bound"], xi_rows)

    writer.summary("constants", {
        "D": d_series.value,
        "D_tail_bound": d_series.tail_bound,
        "khintchin_C": c_value,
        "theorem5_golden_bound": theorem5,
        "lambda1": l1,
        "terms": terms,
    })
    print(f"wrote {len(writer.written)} files to {writer.outdir}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sturmian",
        description="Spectra, dimension bounds and transport bounds for "
                    "Sturmian Jacobi operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=["csv", "json"], default=None)

    p = sub.add_parser("cf-stats", help="continued-fraction statistics")
    common(p)
    p.add_argument("--cf", help="golden | silver | random:SEED | a1,a2,...")
    p.add_argument("--k", type=int, help="number of quotients")
    p.set_defaults(func=cmd_cf_stats)

    p = sub.add_parser("spectrum", help="band enumeration and dimension bounds")
    common(p)
    p.add_argument("--cf")
    p.add_argument("--model", choices=["diag", "offdiag"])
    p.add_argument("--l1", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--level", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--bounds", action="store_const", const=True, default=None,
                   help="emit per-band length bounds (diagonal model)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("transport", help="wavepacket spreading and bounds")
    common(p)
    p.add_argument("--cf")
    p.add_argument("--model", choices=["diag", "offdiag"])
    p.add_argument("--l1", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--L", type=int)
    p.add_argument("--tmax", type=float)
    p.add_argument("--ntimes", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--alphas", help="alpha grid lo:hi:step")
    p.add_argument("--bound", action="store_const", const=True, default=None)
    p.set_defaults(func=cmd_transport)

    p = sub.add_parser("constants", help="paper-constant dashboard")
    common(p)
    p.add_argument("--terms", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--xi-grid", dest="xi_grid")
    p.add_argument("--l1", type=float)
    p.set_defaults(func=cmd_constants)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NonConvergedError as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except SturmianError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
