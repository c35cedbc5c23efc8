"""``tensorspike`` command-line front end.

Exit codes: 0 success, 2 usage error, 3 numeric failure.  Options may also
come from ``--config file.json`` (keys are option names with dashes turned
into underscores); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Callable

import numpy as np

from . import __version__
from ._accel import resolve_backend, set_threads
from .errors import FormatError, MissingTruthError, NumericError, UsageError
from .integrate import parse_integrator
from .io import read_matrix_csv, write_matrix_csv, write_record, write_table

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

FIG1_LEFT_DELTAS = (0.02, 0.05, 0.08, 0.11, 0.125, 0.17, 0.20, 0.23, 0.26, 0.30)
FIG1_DAMPING = 0.5


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so ``run`` owns the exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n\n{self.format_usage()}")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=None)
    g.add_argument("--out", default="-", help="output path ('-' for stdout)")
    g.add_argument("--format", choices=("csv", "json"), default=None)
    g.add_argument("--config", default=None, help="JSON file with option values")


def _model_args(p, delta=True, n=False):
    p.add_argument("--prior", default="rademacher", help="e.g. gaussian:mu=0.2, bernoulli:rho=0.1, clusters:r=3")
    p.add_argument("--p", type=int, default=3)
    if delta:
        p.add_argument("--delta", type=float, default=None)
    if n:
        p.add_argument("--n", type=int, default=None)


def build_parser() -> tuple[argparse.ArgumentParser, dict[tuple[str, ...], argparse.ArgumentParser]]:
    root = _Parser(prog="tensorspike", description="Spiked tensor estimation: AMP, state evolution, phase diagrams.")
    root.add_argument("--version", action="version", version=f"tensorspike {__version__}")
    sub = root.add_subparsers(dest="command", parser_class=_Parser)
    table: dict[tuple[str, ...], argparse.ArgumentParser] = {}

    def add(name, handler, help_, parent=sub, path=()):
        sp = parent.add_parser(name, help=help_, description=help_)
        _common(sp)
        sp.set_defaults(_handler=handler)
        table[path + (name,)] = sp
        return sp

    sp = add("gen", _cmd_gen, "sample a planted instance and write it as .tns")
    _model_args(sp, n=True)
    sp.add_argument("--truth-out", default=None, help="signal CSV (default: <out>.x0.csv)")

    sp = add("amp", _cmd_amp, "run AMP on a stored observation")
    sp.add_argument("--in", dest="input", default=None)
    sp.add_argument("--prior", default="rademacher")
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--init", choices=("random", "informative"), default="random")
    sp.add_argument("--max-iter", type=int, default=1000)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--damping", type=float, default=0.0)
    sp.add_argument("--amplitude", type=float, default=1e-3)
    sp.add_argument("--truth", default=None, help="signal CSV written by gen")

    sp = add("se", _cmd_se, "iterate state evolution")
    _model_args(sp)
    sp.add_argument("--init", choices=("eps", "informative"), default="eps")
    sp.add_argument("--integrator", default="gh:127")
    sp.add_argument("--max-iter", type=int, default=10_000)
    sp.add_argument("--tol", type=float, default=1e-10)

    sp = add("free-energy", _cmd_free_energy, "replica potential on a grid of overlaps")
    _model_args(sp)
    sp.add_argument("--m-grid", type=int, default=1000)
    sp.add_argument("--integrator", default="gh:127")

    sp = add("info-curve", _cmd_info_curve, "mutual information and errors versus noise")
    _model_args(sp, delta=False)
    sp.add_argument("--delta-min", type=float, default=0.05)
    sp.add_argument("--delta-max", type=float, default=1.0)
    sp.add_argument("--points", type=int, default=50)
    sp.add_argument("--integrator", default="gh:127")

    sp = add("thresholds", _cmd_thresholds, "noise thresholds for one prior")
    _model_args(sp, delta=False)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--integrator", default="gh:127")

    sp = add("phase-diagram", _cmd_phase, "phase labels on a parameter-noise grid")
    sp.add_argument("--family", choices=("gaussian", "bernoulli"), default="gaussian")
    sp.add_argument("--p", type=int, default=3)
    sp.add_argument("--grid", default=None, help="'pmin:pmax:np,dmin:dmax:nd' (bernoulli noise in units of rho^4)")
    sp.add_argument("--param-grid", default=None, help="'min:max:count' or comma list")
    sp.add_argument("--delta-grid", default=None, help="'min:max:count' or comma list")
    sp.add_argument("--tol", type=float, default=1e-6)

    sp = add("table1", _cmd_table1, "recompute the reference threshold table")
    sp.add_argument("--priors", default=None, help="comma list, e.g. gaussian,rademacher")
    sp.add_argument("--ps", default="2,3,4,5,10")
    sp.add_argument("--tol", type=float, default=1e-7)

    orc = sub.add_parser("oracle", help="exact small-N references")
    orc_sub = orc.add_subparsers(dest="oracle_command", parser_class=_Parser)
    table[("oracle",)] = orc
    sp = add("nishimori", _cmd_nishimori, "Nishimori identity on exact posteriors", orc_sub, ("oracle",))
    _model_args(sp, n=True)
    sp.add_argument("--trials", type=int, default=20)
    sp.set_defaults(n=8, delta=0.3)
    sp = add("free-energy", _cmd_oracle_fe, "Monte Carlo estimate of the finite-N free energy", orc_sub, ("oracle",))
    _model_args(sp, n=True)
    sp.add_argument("--trials", type=int, default=1000)
    sp.set_defaults(n=8, delta=0.3)

    sp = add("fig1", _cmd_fig1, "data behind the three figure panels")
    sp.add_argument("--panel", choices=("left", "central", "right"), default="left")
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--deltas", default=",".join(map(str, FIG1_LEFT_DELTAS)))
    sp.add_argument("--damping", type=float, default=FIG1_DAMPING)
    sp.add_argument("--max-iter", type=int, default=1000)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--points", type=int, default=None, help="parameter grid size for central/right")
    return root, table


# ---------------------------------------------------------------------------
# helpers


def _need(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _prior(args):
    from .model import parse_prior

    return parse_prior(args.prior)


def _grid(text: str) -> list[float]:
    text = str(text).strip()
    try:
        if ":" in text:
            lo, hi, k = text.split(":")
            return np.linspace(float(lo), float(hi), int(k)).tolist()
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}") from exc


def _config(args) -> dict:
    # the destination is not part of the computation; leaving it out keeps
    # reruns into different files byte-identical
    cfg = {k: v for k, v in vars(args).items() if not k.startswith("_") and k not in ("config", "out")}
    if "prior" in cfg and cfg["prior"] is not None:
        cfg["prior"] = _prior(args).to_dict()
    if "integrator" in cfg and cfg["integrator"] is not None:
        cfg["integrator"] = parse_integrator(cfg["integrator"]).to_dict()
    cfg["backend"] = resolve_backend(None)
    return cfg


def _fmt(args, default: str) -> str:
    return args.format or default


def _opt(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


# ---------------------------------------------------------------------------
# commands


def _cmd_gen(args):
    from .model import AWGN, ModelSpec, make_instance
    from .tensor_core import write_tensor

    _need(args, "n", "delta")
    if args.out in (None, "-"):
        raise UsageError("gen needs --out for the binary tensor")
    spec = ModelSpec(args.p, args.n, _prior(args), AWGN(args.delta))
    inst = make_instance(spec, args.seed)
    write_tensor(inst.y, args.out)
    truth = args.truth_out or f"{args.out}.x0.csv"
    write_matrix_csv(inst.x0, truth, _config(args))


def _cmd_amp(args):
    from .amp import amp_run
    from .model import AWGN, score_tensor
    from .tensor_core import read_tensor

    _need(args, "input", "delta")
    prior = _prior(args)
    y = read_tensor(args.input)
    s, delta = score_tensor(y, AWGN(args.delta))
    truth = None
    if args.truth:
        truth = read_matrix_csv(args.truth)
        if truth.shape != (y.n, prior.r):
            raise FormatError(f"truth has shape {truth.shape}, expected {(y.n, prior.r)}")
    if args.init == "informative" and truth is None:
        raise MissingTruthError("--init informative needs --truth")
    res = amp_run(s, delta, prior, args.init, args.seed, truth, args.max_iter, args.tol, args.damping, args.amplitude)
    rec = {"spec": {"n": y.n, "p": y.p, "r": prior.r, "prior": prior.to_dict(), "delta": delta}}
    rec.update(res.to_dict())
    write_record("amp", rec, _config(args), args.out, _fmt(args, "json"))


def _cmd_se(args):
    from .state_evolution import se_trajectory

    _need(args, "delta")
    prior = _prior(args)
    fp = se_trajectory(args.delta, args.p, prior, args.init, parse_integrator(args.integrator), args.tol, args.max_iter)
    r = prior.r
    sx = prior.moments().sigma_x
    cols = ["iter"] + [f"m_{a}{b}" for a in range(r) for b in range(r)] + ["mse"]
    rows = []
    for k, m in enumerate(fp.trajectory):
        m = np.asarray(m)
        rows.append([k, *m.ravel().tolist(), float(np.trace(sx - m))])
    write_table("se", cols, rows, _config(args), args.out, _fmt(args, "csv"))


def _cmd_free_energy(args):
    from .free_energy import maximize_phi_rs

    _need(args, "delta")
    if args.m_grid < 2:
        raise UsageError("--m-grid must be at least 2")
    curve = maximize_phi_rs(args.delta, args.p, _prior(args), parse_integrator(args.integrator), args.m_grid)
    write_table("free_energy", ["m", "phi"], curve.to_rows(), _config(args), args.out, _fmt(args, "csv"))


def _cmd_info_curve(args):
    from .free_energy import maximize_phi_rs, sigma_power_sum

    if not 0 < args.delta_min < args.delta_max or args.points < 2:
        raise UsageError("need 0 < delta-min < delta-max and at least two points")
    prior = _prior(args)
    integ = parse_integrator(args.integrator)
    sx = prior.moments().sigma_x
    rows = []
    for d in np.linspace(args.delta_min, args.delta_max, args.points):
        c = maximize_phi_rs(float(d), args.p, prior, integ)
        mi = sigma_power_sum(prior, args.p) / (2.0 * args.p * d) - c.phi_star
        if prior.r == 1:
            m = c.m_star
            mm = float(sx[0, 0] - m)
            tm = float(sx[0, 0] ** args.p - m**args.p)
        else:
            mm = float(np.trace(sx - c.M_star))
            tm = None
        rows.append([float(d), mi, mm, tm, c.m_star])
    write_table("info_curve", ["delta", "mi", "mmse", "tmmse", "m_star"], rows, _config(args), args.out,
                _fmt(args, "csv"))


def _cmd_thresholds(args):
    from .phase import compute_thresholds

    ts = compute_thresholds(args.p, _prior(args), parse_integrator(args.integrator), args.tol)
    rec = {k: (_opt(v) if not isinstance(v, dict) else v) for k, v in ts.to_dict().items()}
    if math.isinf(ts.delta_c):
        rec["delta_c"] = "inf"
    write_record("thresholds", rec, _config(args), args.out, _fmt(args, "json"))


def _cmd_phase(args):
    from .phase import sweep_phase_diagram

    pg, dg = args.param_grid, args.delta_grid
    if args.grid:
        parts = args.grid.split(",")
        if len(parts) != 2:
            raise UsageError("--grid expects 'pmin:pmax:np,dmin:dmax:nd'")
        pg, dg = pg or parts[0], dg or parts[1]
    if pg is None or dg is None:
        raise UsageError("give --grid or both --param-grid and --delta-grid")
    rows = sweep_phase_diagram(args.family, args.p, _grid(pg), _grid(dg), tol=args.tol)
    cols = ["param", "delta", "label", "delta_alg", "delta_it", "delta_dyn", "delta_c"]
    write_table("phase_diagram", cols, [[r[c] for c in cols] for r in rows], _config(args), args.out,
                _fmt(args, "csv"))


def _cmd_table1(args):
    from .phase import table1

    priors = tuple(s.strip() for s in args.priors.split(",")) if args.priors else None
    ps = tuple(int(v) for v in args.ps.split(","))
    rows = table1(priors=priors, ps=ps, tol=args.tol)
    cols = ["prior", "p", "quantity", "computed", "paper", "rel_dev"]
    write_table("table1", cols, [[r[c] for c in cols] for r in rows], _config(args), args.out, _fmt(args, "csv"))


def _cmd_nishimori(args):
    from .oracle import nishimori_check

    rep = nishimori_check(_prior(args), args.p, args.delta, args.n, args.trials, args.seed)
    write_record("oracle_nishimori", rep.to_dict(), _config(args), args.out, _fmt(args, "json"))


def _cmd_oracle_fe(args):
    from .free_energy import maximize_phi_rs
    from .oracle import exact_free_energy

    prior = _prior(args)
    mean, err = exact_free_energy(args.n, args.p, prior, args.delta, args.trials, args.seed)
    sup = maximize_phi_rs(args.delta, args.p, prior).phi_star
    rec = {"n": args.n, "p": args.p, "delta": args.delta, "trials": args.trials,
           "f_n": mean, "stderr": err, "sup_phi_rs": sup}
    write_record("oracle_free_energy", rec, _config(args), args.out, _fmt(args, "json"))


def _cmd_fig1(args):
    rows, cols = fig1_panel(args.panel, n=args.n, seed=args.seed, deltas=_grid(args.deltas), damping=args.damping,
                            max_iter=args.max_iter, tol=args.tol, points=args.points)
    write_table(f"fig1_{args.panel}", cols, rows, _config(args), args.out, _fmt(args, "csv"))


FIG1_COLUMNS = {
    "left": ["delta", "amp_overlap_uninf", "amp_overlap_inf", "se_stable_branch_low", "se_stable_branch_high",
             "se_unstable_branch"],
    "central": ["mu", "delta_alg", "delta_it", "delta_dyn", "marker"],
    "right": ["rho", "delta_alg_rho4", "delta_it_rho4", "delta_dyn_rho4", "marker"],
}


def fig1_panel(panel: str, n: int = 1000, seed: int = 0, deltas=FIG1_LEFT_DELTAS, damping: float = FIG1_DAMPING,
               max_iter: int = 1000, tol: float = 1e-8, points: int | None = None):
    """Rows for one panel: AMP versus SE (left), Gaussian or Bernoulli boundaries."""
    from .amp import run_both_inits
    from .model import AWGN, Bernoulli, Gaussian, ModelSpec, make_score
    from .phase import compute_thresholds, tri_critical
    from .state_evolution import se_branches

    cols = FIG1_COLUMNS[panel]
    rows = []
    if panel == "left":
        prior = Gaussian(0.2)
        for d in deltas:
            x0, s, dd = make_score(ModelSpec(3, n, prior, AWGN(d)), seed)
            ru, ri = run_both_inits(s, dd, prior, x0, seed, max_iter, tol, damping)
            br = se_branches(d, 3, prior)
            rows.append([d, float(ru.overlap[0, 0]), float(ri.overlap[0, 0]), br.stable_low, br.stable_high,
                         br.unstable])
        return rows, cols
    if panel == "central":
        params, make, unit, tri = np.linspace(0.0, 0.6, points or 25), Gaussian, (lambda v: 1.0), "gaussian"
    elif panel == "right":
        params, make, unit, tri = np.linspace(0.05, 0.3, points or 26), Bernoulli, (lambda v: v**4), "bernoulli"
    else:
        raise UsageError(f"unknown panel {panel!r}")
    for v in params:
        ts = compute_thresholds(3, make(float(v)))
        u = unit(float(v))
        rows.append([float(v)] + [None if x is None else x / u for x in (ts.delta_alg, ts.delta_it, ts.delta_dyn)]
                    + [""])
    tp = tri_critical(3, tri, method="numeric")
    u = unit(tp.param)
    rows.append([tp.param, tp.delta / u, tp.delta / u, tp.delta / u, "tricritical"])
    return rows, cols


# ---------------------------------------------------------------------------
# entry point


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    return {str(k).replace("-", "_"): v for k, v in cfg.items()}


def parse_args(argv: list[str]) -> argparse.Namespace:
    root, table = build_parser()
    args = root.parse_args(argv)
    if args.command is None:
        raise UsageError(root.format_help())
    path = (args.command,) if args.command != "oracle" else ("oracle", args.oracle_command)
    if path == ("oracle", None):
        raise UsageError(table[("oracle",)].format_help())
    if args.config:
        cfg = _load_config(args.config)
        cfg.pop("command", None)
        cfg.pop("oracle_command", None)
        known = set(vars(args))
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        table[path].set_defaults(**cfg)
        args = root.parse_args(argv)
    return args


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be positive")
            set_threads(args.threads)
        handler: Callable = args._handler
        handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FloatingPointError, OverflowError, ZeroDivisionError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
