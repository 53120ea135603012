"""Command-line front end.

Every run writes its outputs and a ``manifest.json`` (argv, resolved
settings, library versions) under ``--out``. Exit codes: 0 success, 1 domain
error, 2 usage error; failures print one JSON line on stderr naming the
error class.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, jsonutil
from .affine import (AffineSpec, Family, RegimeSpec, read_config, regime_from_config, simulate,
                     spec_from_config)
from .cir import CirParams, tabulate_ltu_limit
from .dataio import (PipelineOptions, apply_pipeline, load_csv, window_sensitivity, write_report, write_rows)
from .errors import ConfigError, InvalidInput, NearUnitError
from .estimation import estimate
from .inference import (DEFAULT_LEVELS, bootstrap, bootstrap_ci, plugin_ci, pvalue_curve, test_alpha)
from .montecarlo import (PROFILES, POWER_GRID, ExperimentConfig, bubble_study, coverage_study, dist_study_explosive,
                         dist_study_ltu, dist_study_mild, power_study)

MODEL_KEYS = ("family", "mu", "kappa", "c", "theta", "b", "sigma_eps", "regime", "gamma", "tau", "kn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# argument groups


def _common(p):
    p.add_argument("--config", help="plain-text 'key = value' config; flags override it")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--workers", type=int, default=None, help="process count hint; never changes results")


def _model(p, regime="mild"):
    g = p.add_argument_group("model")
    g.add_argument("--family", choices=[f.value for f in Family])
    for k in ("mu", "kappa", "c", "theta", "b"):
        g.add_argument(f"--{k}", type=float)
    g.add_argument("--sigma-eps", dest="sigma_eps", type=float)
    g.add_argument("--regime", choices=["local", "mild"], help=f"default {regime}")
    g.add_argument("--gamma", type=float)
    g.add_argument("--tau", type=float)
    g.add_argument("--kn", type=float)
    g.add_argument("--x0", type=float)


def _input(p):
    g = p.add_argument_group("input")
    g.add_argument("--input", required=True, help="CSV file")
    g.add_argument("--column", help="column index or header name (default: last)")
    g.add_argument("--label-column", help="column with dates or other labels")
    g.add_argument("--delimiter", default=",")
    g.add_argument("--na-policy", choices=["error", "drop"], default="error")
    g.add_argument("--units", default="")
    g.add_argument("--convert-to", help="e.g. basis_points with --units percent")


def _study(p, M_name="M"):
    p.add_argument("--profile", choices=sorted(PROFILES), default=None)
    p.add_argument(f"--{M_name}", dest="M", type=int, help="replications (default from profile)")
    p.add_argument("--B", type=int, help="bootstrap draws (default from profile)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nearunit", description="Near-unit-root affine autoregressions: simulation, "
                                              "estimation, inference and Monte Carlo studies.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate one trajectory")
    _common(p), _model(p)
    p.add_argument("--n", type=int)
    p.add_argument("--stream", type=int, default=0)

    p = sub.add_parser("estimate", help="OLS, WLS or Poisson QML fit")
    _common(p), _input(p)
    p.add_argument("--method", choices=["ols", "wls", "poisson"], default="ols")

    p = sub.add_parser("bootstrap", help="random-weight bootstrap of the OLS fit")
    _common(p), _input(p)
    p.add_argument("--B", type=int, default=5000)
    p.add_argument("--weights", choices=["Exp1", "Degenerate1"], default="Exp1")
    p.add_argument("--level", type=float, default=0.90)

    p = sub.add_parser("plugin-ci", help="plug-in intervals with k_n replaced by 1/(1 - alpha_hat)")
    _common(p), _input(p)
    p.add_argument("--level", type=float, default=0.90)
    p.add_argument("--sigma2", type=float, help="fix sigma^2 instead of estimating it")

    p = sub.add_parser("test", help="t-test of H0: alpha = alpha0")
    _common(p), _input(p)
    p.add_argument("--alpha0", type=float, required=True)
    p.add_argument("--method", choices=["PluginSE", "BootstrapSE", "SandwichSE"], default="PluginSE")
    p.add_argument("--B", type=int, default=5000)

    p = sub.add_parser("pvalue-curve", help="p-value over a grid of alpha0")
    _common(p), _input(p)
    p.add_argument("--method", choices=["PluginSE", "BootstrapSE", "SandwichSE"], default="PluginSE")
    p.add_argument("--grid", nargs=3, type=float, metavar=("START", "STOP", "STEP"),
                   help="inclusive grid (default 0.700 0.999 0.001)")
    p.add_argument("--threshold", type=float, default=0.10)
    p.add_argument("--B", type=int, default=5000)

    p = sub.add_parser("tabulate-ltu", help="Monte Carlo table of the local-to-unity limit law")
    _common(p)
    p.add_argument("--gamma", type=float, default=-1.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=10000)
    p.add_argument("--steps", type=int, default=1000)

    p = sub.add_parser("dist-study", help="sampling distribution of the OLS error")
    _common(p), _model(p), _study(p)
    p.add_argument("--n", type=int)
    p.add_argument("--wls", action="store_true", help="add WLS columns (mildly stationary only)")

    p = sub.add_parser("coverage", help="coverage of plug-in and bootstrap intervals")
    _common(p), _model(p), _study(p, "N")
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--taus", type=float, nargs="+", help="tau values (default: --tau or config)")
    p.add_argument("--levels", type=float, nargs="+", default=[0.90])
    p.add_argument("--plugin-sigma2", choices=["fixed", "estimated"])

    p = sub.add_parser("power", help="raw and size-corrected power curves")
    _common(p), _model(p), _study(p, "N")
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--alpha0", type=float, nargs="+", default=[0.95, 0.99])
    p.add_argument("--grid", nargs=3, type=float, metavar=("START", "STOP", "STEP"),
                   help="true-alpha grid (default 0.80 1.00 0.004)")
    p.add_argument("--methods", nargs="+", choices=["PluginSE", "BootstrapSE"], default=["PluginSE", "BootstrapSE"])
    p.add_argument("--plugin-sigma2", choices=["fixed", "estimated"])

    p = sub.add_parser("bubble", help="bubble-episode statistics under mild stationarity")
    _common(p), _model(p), _study(p)
    p.add_argument("--n", type=int)
    p.add_argument("--blocks", type=int, default=10)
    p.add_argument("--threshold", type=float, default=3.0, help="multiple of the marginal mean")
    p.add_argument("--comparator-sigma", type=float, default=1.0)

    p = sub.add_parser("apply", help="empirical pipeline on an observed series")
    _common(p), _input(p)
    p.add_argument("--name")
    p.add_argument("--B", type=int, default=5000)
    p.add_argument("--level", type=float, default=0.90)
    p.add_argument("--grid", nargs=3, type=float, metavar=("START", "STOP", "STEP"))
    p.add_argument("--methods", nargs="+", choices=["PluginSE", "BootstrapSE", "SandwichSE"],
                   default=["PluginSE", "BootstrapSE"])

    p = sub.add_parser("window-scan", help="persistence scale over sub-windows")
    _common(p), _input(p)
    p.add_argument("--window", action="append", required=True, metavar="START:STOP",
                   help="positions or labels; repeatable; an empty side means open")
    return ap


# ---------------------------------------------------------------------------
# helpers


def _cfg(args) -> dict:
    cfg = dict(read_config(args.config)) if getattr(args, "config", None) else {}
    for k in MODEL_KEYS + ("n", "x0"):
        v = getattr(args, k, None)
        if v is not None and not isinstance(v, list):
            cfg[k] = v
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    cfg.setdefault("family", "INARCH")
    if cfg["family"] in ("INARCH", "LinearAR1"):
        cfg.setdefault("mu", 1.0)
    if cfg["family"] == "LinearAR1":
        cfg.setdefault("sigma_eps", 1.0)
    return cfg


def _seed(cfg) -> int:
    return int(cfg.get("seed", 0))


def _workers(cfg) -> int:
    return int(cfg.get("workers", 1))


def _model_from(cfg, default_regime="mild") -> tuple[AffineSpec, RegimeSpec]:
    cfg = dict(cfg)
    cfg.setdefault("regime", default_regime)
    return spec_from_config(cfg), regime_from_config(cfg)


def _dataset(args):
    col = args.column
    if col is not None and col.lstrip("-").isdigit():
        col = int(col)
    lab = args.label_column
    if lab is not None and lab.isdigit():
        lab = int(lab)
    return load_csv(args.input, col, delimiter=args.delimiter, na_policy=args.na_policy, label_column=lab,
                    units=args.units, convert_to=args.convert_to, name=getattr(args, "name", None))


def _grid(spec, default):
    if spec is None:
        return default
    start, stop, step = spec
    if step <= 0:
        raise ConfigError("grid step must be positive")
    m = int(round((stop - start) / step))
    return np.round(start + step * np.arange(m + 1), 10)


def _profile(args, cfg) -> str:
    return args.profile or cfg.get("profile", "desk")


def _experiment(args, cfg, spec, regime, n) -> ExperimentConfig:
    kw = {"seed": _seed(cfg), "workers": _workers(cfg), "x0": float(cfg.get("x0", 0.0))}
    M = args.M if args.M is not None else cfg.get("M", cfg.get("N"))
    if M is not None:
        kw["M"] = int(M)
    elif getattr(args, "_default_M", None):
        kw["M"] = args._default_M
    B = args.B if args.B is not None else cfg.get("B")
    if B is not None:
        kw["B"] = int(B)
    return ExperimentConfig.from_profile(_profile(args, cfg), spec, regime, int(n), **kw)


def _write_csv(path: Path, header: str, rows) -> Path:
    np.savetxt(path, np.asarray(rows, dtype=float), delimiter=",", fmt="%.17g", header=header, comments="")
    return path


def _emit(out: Path, name: str, payload) -> Path:
    path = jsonutil.dump(payload, out / name)
    print(jsonutil.dumps(payload))
    return path


# ---------------------------------------------------------------------------
# subcommands (each returns the list of files written)


def cmd_simulate(args, out):
    cfg = _cfg(args)
    spec, regime = _model_from(cfg)
    n = int(cfg.get("n", 1000))
    tr = simulate(spec, regime, n, x0=float(cfg.get("x0", 0.0)), seed=_seed(cfg), stream=args.stream)
    csv_path = _write_csv(out / "trajectory.csv", "t,value", np.column_stack([np.arange(n + 1), tr.values]))
    prov = {k: v for k, v in tr.provenance.items() if k not in ("spec", "regime")}
    meta = {"family": spec.family.value, "params": spec.params(), "n": n, **prov}
    return [csv_path, _emit(out, "simulate.json", meta)]


def cmd_estimate(args, out):
    ds = _dataset(args)
    res = estimate(ds.values, args.method)
    return [_emit(out, "estimate.json", {"dataset": ds.name, **res.to_dict()})]


def cmd_bootstrap(args, out):
    cfg = _cfg(args)
    ds = _dataset(args)
    bd = bootstrap(ds.values, B=args.B, weights_dist=args.weights, seed=_seed(cfg), workers=_workers(cfg))
    ci = bootstrap_ci(bd, level=args.level)
    draws = _write_csv(out / "bootstrap_draws.csv", "alpha_b,mu_b", bd.draws)
    payload = {"dataset": ds.name, "B": bd.B, "weights": bd.weights_dist, "base": list(bd.base), **ci.to_dict(),
               **bd.meta}
    return [draws, _emit(out, "bootstrap.json", payload)]


def cmd_plugin_ci(args, out):
    ds = _dataset(args)
    est = estimate(ds.values, "ols")
    pl = plugin_ci(est, level=args.level, sigma2=args.sigma2)
    return [_emit(out, "plugin_ci.json", {"dataset": ds.name, "alpha_hat": est.alpha_hat, "mu_hat": est.mu_hat,
                                          **pl.to_dict()})]


def cmd_test(args, out):
    cfg = _cfg(args)
    ds = _dataset(args)
    kw = {"B": args.B, "seed": _seed(cfg), "workers": _workers(cfg)} if args.method == "BootstrapSE" else {}
    res = test_alpha(ds.values, args.alpha0, args.method, DEFAULT_LEVELS, **kw)
    return [_emit(out, "test.json", {"dataset": ds.name, **res.to_dict()})]


def cmd_pvalue_curve(args, out):
    cfg = _cfg(args)
    ds = _dataset(args)
    kw = {"B": args.B, "seed": _seed(cfg), "workers": _workers(cfg)} if args.method == "BootstrapSE" else {}
    c = pvalue_curve(ds.values, _grid(args.grid, None), args.method, args.threshold, **kw)
    csv_path = _write_csv(out / "pvalue_curve.csv", "alpha0,p_value", np.column_stack([c.alpha0, c.p]))
    payload = {"dataset": ds.name, "method": c.method, "se": c.se, "alpha_hat": c.alpha_hat, "region": c.region,
               "reaches_upper": c.reaches_upper, "threshold": args.threshold}
    return [csv_path, _emit(out, "pvalue_curve.json", payload)]


def cmd_tabulate_ltu(args, out):
    cfg = _cfg(args)
    tab = tabulate_ltu_limit(CirParams(args.mu, args.gamma, args.sigma2), args.paths, args.steps,
                             seed=_seed(cfg), workers=_workers(cfg))
    csv_path, json_path = tab.write(out, "ltu_limit")
    summary = tab.summary()
    summary["var"] = np.diag(tab.cov).tolist()
    json_path = jsonutil.dump(summary, json_path)
    print(jsonutil.dumps({"mean": summary["mean"], "var": summary["var"], "M": tab.M}))
    return [csv_path, json_path]


def _report_out(rep, out, subdir=None):
    target = out / subdir if subdir else out
    paths = rep.write(target)
    print(jsonutil.dumps({"study": rep.study, "summary_file": str(paths[0])}))
    return paths


def cmd_dist_study(args, out):
    cfg = _cfg(args)
    regime_kind = cfg.get("regime", "local")
    spec, regime = _model_from(cfg, "local")
    n = int(cfg.get("n", 3000))
    ec = _experiment(args, cfg, spec, regime, n)
    if regime_kind == "local":
        rep = dist_study_ltu(ec)
    elif regime.gamma > 0:
        rep = dist_study_explosive(ec)
    else:
        ec.options["wls"] = bool(args.wls)
        rep = dist_study_mild(ec)
    return _report_out(rep, out)


def _n_list(args, cfg, default):
    if args.n:
        return args.n
    if "n" in cfg:
        return [int(cfg["n"])]
    return default


def cmd_coverage(args, out):
    cfg = _cfg(args)
    args._default_M = PROFILES[_profile(args, cfg)]["N"]
    taus = args.taus or ([float(cfg["tau"])] if "tau" in cfg else [0.4])
    paths, rows = [], []
    for n in _n_list(args, cfg, [2000]):
        for tau in taus:
            c = dict(cfg, tau=tau, regime="mild", gamma=-1.0)
            c.pop("kn", None)
            spec, regime = _model_from(c)
            ec = _experiment(args, cfg, spec, regime, n)
            if args.plugin_sigma2:
                ec.options["plugin_sigma2"] = args.plugin_sigma2
            rep = coverage_study(ec, levels=tuple(args.levels))
            paths += rep.write(out / f"coverage_n{n}_tau{tau:g}")
            for key, v in rep.summary["coverage"].items():
                rows.append([n, tau, rep.summary["alpha_n"], v["level"], v["method"], v["alpha"], v["mu"],
                             v["skipped"]])
    table = out / "coverage_table.csv"
    lines = ["n,tau,alpha_n,level,method,alpha_coverage,mu_coverage,skipped"]
    lines += [",".join(f"{x:.17g}" if isinstance(x, float) else str(x) for x in r) for r in rows]
    table.write_text("\n".join(lines) + "\n")
    print(jsonutil.dumps({"coverage_table": str(table), "rows": len(rows)}))
    return paths + [table]


def cmd_power(args, out):
    cfg = _cfg(args)
    args._default_M = PROFILES[_profile(args, cfg)]["N"]
    spec = spec_from_config(cfg)
    grid = _grid(args.grid, POWER_GRID)
    paths = []
    for n in _n_list(args, cfg, [2000]):
        ec = _experiment(args, cfg, spec, None, n)
        if args.plugin_sigma2:
            ec.options["plugin_sigma2"] = args.plugin_sigma2
        rep = power_study(ec, tuple(args.alpha0), grid, tuple(args.methods))
        paths += rep.write(out / f"power_n{n}")
        lines = ["alpha,alpha0,method,raw,size_corrected"]
        for cur in rep.summary["curves"].values():
            for a, r, s in zip(cur["alpha"], cur["raw"], cur["size_corrected"]):
                lines.append(f"{a!r},{cur['alpha0']!r},{cur['method']},{r!r},{s!r}")
        curve_path = out / f"power_n{n}" / "power_curves.csv"
        curve_path.write_text("\n".join(lines) + "\n")
        paths.append(curve_path)
    print(jsonutil.dumps({"outputs": [str(p) for p in paths if p.suffix == ".json"]}))
    return paths


def cmd_bubble(args, out):
    cfg = _cfg(args)
    cfg.setdefault("kn", 100.0)
    cfg["regime"], cfg["gamma"] = "mild", -1.0
    spec, regime = _model_from(cfg)
    ec = _experiment(args, cfg, spec, regime, int(cfg.get("n", 10000)))
    rep = bubble_study(ec, args.blocks, args.threshold, args.comparator_sigma)
    return _report_out(rep, out)


def cmd_apply(args, out):
    cfg = _cfg(args)
    ds = _dataset(args)
    opt = PipelineOptions(B=args.B, level=args.level, grid=_grid(args.grid, None), methods=tuple(args.methods),
                          seed=_seed(cfg), workers=_workers(cfg))
    rep = apply_pipeline(ds, opt)
    paths = write_report(rep, out)
    print(jsonutil.dumps(rep.persistence.to_dict()))
    return paths


def _parse_window(text: str):
    if ":" not in text:
        raise ConfigError(f"window {text!r} must look like START:STOP")
    lo, hi = text.split(":", 1)

    def conv(s):
        s = s.strip()
        if s == "":
            return None
        return int(s) if s.lstrip("-").isdigit() and len(s) < 4 else s

    return conv(lo), conv(hi)


def cmd_window_scan(args, out):
    ds = _dataset(args)
    rows = window_sensitivity(ds, [_parse_window(w) for w in args.window])
    csv_path = write_rows(rows, out / "window_scan.csv")
    return [csv_path, _emit(out, "window_scan.json", [r.to_dict() for r in rows])]


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "bootstrap": cmd_bootstrap,
    "plugin-ci": cmd_plugin_ci,
    "test": cmd_test,
    "pvalue-curve": cmd_pvalue_curve,
    "tabulate-ltu": cmd_tabulate_ltu,
    "dist-study": cmd_dist_study,
    "coverage": cmd_coverage,
    "power": cmd_power,
    "bubble": cmd_bubble,
    "apply": cmd_apply,
    "window-scan": cmd_window_scan,
}


def _versions() -> dict:
    import numba
    import scipy
    return {"nearunit": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def _fail(exc: BaseException, code: int) -> int:
    line = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    row = getattr(exc, "row", None)
    if row is not None:
        line["row"] = row
    sys.stderr.write(json.dumps(line) + "\n")
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](args, out)
    except UsageError as exc:
        return _fail(exc, 2)
    except (ConfigError, FileNotFoundError) as exc:
        return _fail(exc, 2)
    except NearUnitError as exc:
        return _fail(exc, 1)
    except ValueError as exc:
        # malformed config values that never reached a domain check
        return _fail(exc, 2)
    resolved = {k: v for k, v in vars(args).items() if not k.startswith("_")}
    config_text = Path(args.config).read_text() if getattr(args, "config", None) else None
    manifest = {"command": args.command, "argv": argv, "resolved": resolved, "config_file": config_text,
                "seed": resolved.get("seed") if resolved.get("seed") is not None else 0,
                "versions": _versions(), "outputs": sorted(str(Path(f).name) for f in files)}
    jsonutil.dump(manifest, out / "manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
