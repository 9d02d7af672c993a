"""Command-line interface: ``qftail {bound,tail,verify,compare,regression}``.

Output is CSV (default) or JSON. CSV output starts with ``#`` comment lines
echoing the resolved configuration and the library defaults; floats are
written with ``repr`` so every cell round-trips exactly.

Exit codes: 0 success, 2 bad input or configuration, 3 mathematically
inadmissible request, 4 a Monte Carlo run found a violated bound.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .bounds import (
    KAPPA,
    SLICING_CONST,
    MomentProfile,
    bform_large_dev_tail,
    bform_quantile,
    gaussian_bform_quantile,
    gaussian_quantile,
    l2_large_dev_tail,
    l2_quantile,
    rescaled_bound,
)
from .constrained import (
    BernsteinProfile,
    NormConstraint,
    bernstein_comparison,
    bernstein_quantile,
    constrained_tail,
    sup_norm_r_star,
)
from .errors import DomainError, InputError
from .matrix import read_matrix_csv, spec_from_eigenvalues, spec_from_matrix
from .mc import NoiseKind, NoiseModel, Statistic, Verdict, estimate_tail
from .regression import effective_sample_size, read_design_csv, wilks_critical_values

DEFAULT_CONF = 0.99
DEFAULT_N = 100_000
DEFAULT_X_GRID = (0.5, 1.0, 2.0, 4.0)
SEED_ENV = "QFT_SEED"

EXIT_OK, EXIT_INPUT, EXIT_DOMAIN, EXIT_VIOLATED = 0, 2, 3, 4

DEFAULTS = {"kappa": KAPPA, "slicing_const": SLICING_CONST, "conf": DEFAULT_CONF, "n": DEFAULT_N}


class ConfigError(InputError):
    pass


@dataclass
class Report:
    columns: List[str]
    rows: List[Dict[str, object]]
    meta: Dict[str, object] = field(default_factory=dict)
    summary: Optional[str] = None
    exit_code: int = EXIT_OK


# ---------------------------------------------------------------------------
# argument types


def float_list(text: str) -> List[float]:
    parts = [s for s in (t.strip() for t in text.split(",")) if s]
    if not parts:
        raise argparse.ArgumentTypeError("empty list")
    try:
        return [float(s) for s in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def seed_value(text) -> int:
    try:
        s = int(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {s}")
    return s


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", dest="output_format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", dest="output_path", default=None, help="write here instead of stdout")
    p.add_argument("--config", default=None, help="JSON file of option values; unknown keys are errors")


def _add_moment(p: argparse.ArgumentParser) -> None:
    p.add_argument("--g", type=float, default=math.inf, help="moment radius (default inf)")
    p.add_argument("--nu0", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qftail", description="Deviation bounds for quadratic forms.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="quantile table z(x) for ||xi||^2 or ||B xi||^2")
    b.add_argument("--p", type=int)
    b.add_argument("--matrix", help="CSV file with the symmetric matrix B")
    b.add_argument("--v0", help="CSV file with V0 (rescaled bound, needs --d0)")
    b.add_argument("--d0", help="CSV file with D0 (rescaled bound, needs --v0)")
    b.add_argument("--gaussian", action="store_true", help="use the Gaussian bounds")
    b.add_argument("--x", type=float_list)
    _add_moment(b)

    t = sub.add_parser("tail", help="large-deviation or sup-norm constrained tail bounds")
    t.add_argument("--p", type=int)
    t.add_argument("--matrix")
    t.add_argument("--y", type=float_list, help="thresholds on the norm (large-deviation zone)")
    t.add_argument("--z", type=float_list, help="thresholds on the squared norm (constrained)")
    t.add_argument("--gs", type=float, help="sup-norm moment radius g_s")
    t.add_argument("--r-star", dest="r_star", type=float)
    t.add_argument("--us", type=float, help="sup-norm constraint level u_s")
    _add_moment(t)

    v = sub.add_parser("verify", help="Monte Carlo certification of the bounds")
    v.add_argument("--model", choices=[k.value for k in NoiseKind], default="gaussian")
    v.add_argument("--p", type=int)
    v.add_argument("--matrix")
    v.add_argument("--bernstein", action="store_true",
                   help="certify the Bernstein bound (centered-exp model)")
    v.add_argument("--pbar", type=int, help="subspace dimension for --bernstein")
    v.add_argument("--ambient", type=int, help="ambient dimension for --bernstein (default pbar)")
    v.add_argument("--sigma", type=float, help="Bernstein sigma (default max(1, u_s + r*))")
    v.add_argument("--us", type=float, default=1.0)
    v.add_argument("--x", type=float_list, default=list(DEFAULT_X_GRID))
    v.add_argument("--n", type=int, default=DEFAULT_N)
    v.add_argument("--conf", type=float, default=DEFAULT_CONF)
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--seed", type=seed_value, default=0)
    _add_moment(v)

    c = sub.add_parser("compare", help="Bernstein bound against the Baraud comparison bound")
    c.add_argument("--sigma", type=float, default=1.0)
    c.add_argument("--c", type=float, default=0.05)
    c.add_argument("--pbar", type=int, default=10)
    c.add_argument("--ambient", type=int, help="ambient dimension (default pbar)")
    c.add_argument("--us", type=float, default=1.0)
    c.add_argument("--u-level", dest="u_level", type=float, help="Baraud u (default 2 sigma u_s)")
    c.add_argument("--x", type=float_list, default=[1.0, 2.0, 3.0, 4.0, 5.0])

    r = sub.add_parser("regression", help="effective sample size and Wilks critical values")
    r.add_argument("--design", help="CSV with rows Psi_i', s_i")
    r.add_argument("--d0", help="optional CSV with D0")
    r.add_argument("--g1", type=float, default=math.inf)
    r.add_argument("--nu0", type=float, default=1.0)
    r.add_argument("--x", type=float_list, default=list(DEFAULT_X_GRID))

    for sp in (b, t, v, c, r):
        _add_common(sp)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise ConfigError(f"unknown command {command!r}")


def _apply_config(parser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    sp = _subparser(parser, args.command)
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    values = {}
    for key, val in cfg.items():
        act = actions[key]
        if act.type is float_list and isinstance(val, list):
            val = [float(v) for v in val]
        elif act.type is not None and val is not None:
            try:
                val = act.type(str(val) if act.type is float_list else val)
            except (argparse.ArgumentTypeError, TypeError, ValueError) as exc:
                raise ConfigError(f"config key {key}: {exc}") from exc
        if act.choices is not None and val not in act.choices:
            raise ConfigError(f"config key {key}: {val!r} not in {sorted(act.choices)}")
        values[key] = val
    # explicit command-line flags win over the config file
    sp.set_defaults(**values)
    return parser.parse_args(argv)


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise ConfigError(f"--{n.replace('_', '-')} is required for {args.command}")


def _x_grid(args) -> List[float]:
    _require(args, "x")
    if not args.x:
        raise ConfigError("x list is empty")
    return args.x


def _profile(args) -> MomentProfile:
    return MomentProfile(args.nu0, args.g)


# ---------------------------------------------------------------------------
# commands


def cmd_bound(args) -> Report:
    xs = _x_grid(args)
    prof = _profile(args)
    rows = []
    if args.v0 or args.d0:
        _require(args, "v0", "d0")
        V0, D0 = read_matrix_csv(args.v0), read_matrix_csv(args.d0)
        for x in xs:
            rows.append({"x": x, **rescaled_bound(V0, D0, prof, x).as_row()})
    elif args.matrix:
        spec = spec_from_matrix(read_matrix_csv(args.matrix).entries)
        for x in xs:
            tb = gaussian_bform_quantile(spec, x) if args.gaussian else bform_quantile(prof, spec, x)
            rows.append({"x": x, **tb.as_row()})
    else:
        _require(args, "p")
        for x in xs:
            tb = gaussian_quantile(args.p, x) if args.gaussian else l2_quantile(prof, args.p, x)
            rows.append({"x": x, **tb.as_row()})
    return Report(["x", "threshold", "prob_bound", "regime", "source"], rows)


def cmd_tail(args) -> Report:
    if args.z is not None:
        _require(args, "p", "gs", "r_star", "us")
        cons = NormConstraint(args.gs, args.r_star, args.us)
        rows = []
        for z in args.z:
            tb = constrained_tail(cons, args.p, z)
            rows.append({"z": z, "prob_bound": tb.prob_bound, "regime": tb.regime.value,
                         "z_s": tb.details["z_s"],
                         "linear_gs_slope": tb.details.get("linear_gs_slope", math.nan)})
        return Report(["z", "prob_bound", "regime", "z_s", "linear_gs_slope"], rows)
    _require(args, "y")
    prof = _profile(args)
    rows = []
    for y in args.y:
        if args.matrix:
            spec = spec_from_matrix(read_matrix_csv(args.matrix).entries)
            tb = bform_large_dev_tail(prof, spec, y)
        else:
            _require(args, "p")
            tb = l2_large_dev_tail(prof, args.p, y)
        rows.append({"y": y, "prob_bound": tb.prob_bound, "linearized": tb.details["linearized"],
                     "source": tb.source.value})
    return Report(["y", "prob_bound", "linearized", "source"], rows)


@dataclass(frozen=True)
class _Target:
    statistic: Statistic
    dim: int
    spec: object = None
    scale: float = 1.0
    sup_level: Optional[float] = None


def _verify_targets(args):
    """Noise kind, sampling target, ``(x, threshold, bound)`` grid and metadata."""
    kind = NoiseKind(args.model)
    if args.bernstein:
        if kind is not NoiseKind.CENTERED_EXP:
            raise ConfigError("--bernstein needs --model centered-exp")
        _require(args, "pbar")
        n_amb = args.ambient or args.pbar
        r_star = sup_norm_r_star(n_amb)
        # centered Exp(1) satisfies the Bernstein condition with c = 1 for any sigma >= 1
        sigma = args.sigma if args.sigma is not None else max(1.0, args.us + r_star)
        if sigma < 1.0:
            raise ConfigError("centered-exp needs sigma >= 1")
        prof = BernsteinProfile(sigma, 1.0, n_amb, args.pbar)
        spec = spec_from_eigenvalues([1.0] * args.pbar + [0.0] * (n_amb - args.pbar))
        target = _Target(Statistic.PROJECTED_SQ, n_amb, spec, prof.xi_scale, args.us)
        rows = []
        for x in args.x:
            tb = bernstein_quantile(prof, args.us, x)
            rows.append((x, tb.threshold, tb.prob_bound))
        meta = {"sigma": sigma, "c": 1.0, "r_star": r_star, "ambient": n_amb}
        return kind, target, rows, meta
    prof = _profile(args)
    gaussian = kind is NoiseKind.GAUSSIAN and math.isinf(args.g)
    if args.matrix:
        spec = spec_from_matrix(read_matrix_csv(args.matrix).entries)
        target = _Target(Statistic.BFORM_SQ, spec.dim, spec, args.nu0)
        tbs = [gaussian_bform_quantile(spec, x) if gaussian and args.nu0 == 1.0
               else bform_quantile(prof, spec, x) for x in args.x]
    else:
        _require(args, "p")
        target = _Target(Statistic.L2_SQ, args.p, scale=args.nu0)
        tbs = [gaussian_quantile(args.p, x) if gaussian and args.nu0 == 1.0
               else l2_quantile(prof, args.p, x) for x in args.x]
    return kind, target, [(x, tb.threshold, tb.prob_bound) for x, tb in zip(args.x, tbs)], {}


def cmd_verify(args, seed: int) -> Report:
    if not args.x:
        raise ConfigError("x list is empty")
    if not 0 < args.conf < 1:
        raise ConfigError(f"conf must be in (0, 1), got {args.conf}")
    kind, target, grid, meta = _verify_targets(args)
    model = NoiseModel(kind, target.dim, seed, target.scale)
    rows = []
    counts = {v: 0 for v in Verdict}
    for x, threshold, bound in grid:
        cert = estimate_tail(model, target.statistic, threshold, args.n, bound=min(1.0, bound),
                             conf=args.conf, spec=target.spec, sup_level=target.sup_level,
                             workers=args.workers)
        counts[cert.verdict] += 1
        rows.append({"x": x, "threshold": threshold, **cert.to_dict()})
    summary = " ".join(f"{v.value}={counts[v]}" for v in Verdict)
    columns = ["x", "threshold", "n_samples", "n_exceed", "point_estimate", "upper_conf",
               "lower_conf", "conf_level", "theoretical_bound", "verdict"]
    code = EXIT_VIOLATED if counts[Verdict.VIOLATED] else EXIT_OK
    return Report(columns, rows, meta, summary, code)


def cmd_compare(args) -> Report:
    xs = _x_grid(args)
    prof = BernsteinProfile(args.sigma, args.c, args.ambient or args.pbar, args.pbar)
    rows = [bernstein_comparison(prof, args.us, x, args.u_level) for x in xs]
    u_level = args.u_level if args.u_level is not None else 2.0 * args.sigma * args.us
    return Report(["x", "threshold", "baraud_threshold", "ratio", "baraud_branch"], rows,
                  {"u_level": u_level})


def cmd_regression(args) -> Report:
    _require(args, "design")
    xs = _x_grid(args)
    model = read_design_csv(args.design, args.nu0, args.g1)
    D0 = read_matrix_csv(args.d0) if args.d0 else None
    info = effective_sample_size(model)
    table = wilks_critical_values(model, xs, D0)
    meta = {"n": model.n, "p": model.p, "n_eff": info.n_eff, "g": info.g_derived}
    return Report(["x", "threshold", "prob_bound", "regime", "source"],
                  [r.as_row() for r in table], meta)


# ---------------------------------------------------------------------------
# output


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    return v


def resolved_config(args, seed: Optional[int]) -> dict:
    # where the output goes is not part of the run
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "output_path")}
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def render(report: Report, config: dict, fmt: str) -> str:
    if fmt == "json":
        doc = {
            "command": config["command"],
            "config": config,
            "defaults": DEFAULTS,
            "meta": report.meta,
            "rows": report.rows,
        }
        if report.summary is not None:
            doc["summary"] = report.summary
        return json.dumps(_jsonable(doc), indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# config: {json.dumps(_jsonable(config), sort_keys=True)}\n")
    buf.write("# defaults: " + " ".join(f"{k}={_cell(v)}" for k, v in DEFAULTS.items()) + "\n")
    for k, v in report.meta.items():
        buf.write(f"# {k}: {_cell(v)}\n")
    buf.write(",".join(report.columns) + "\n")
    for row in report.rows:
        buf.write(",".join(_cell(row[c]) for c in report.columns) + "\n")
    if report.summary is not None:
        buf.write(f"# summary: {report.summary}\n")
    return buf.getvalue()


def _resolve_seed(args) -> Optional[int]:
    if not hasattr(args, "seed"):
        return None
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return seed_value(env.strip())
        except argparse.ArgumentTypeError as exc:
            raise ConfigError(f"{SEED_ENV}: {exc}") from exc
    return args.seed


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"qftail: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        seed = _resolve_seed(args)
        if args.command == "verify":
            report = cmd_verify(args, seed)
        else:
            report = {"bound": cmd_bound, "tail": cmd_tail, "compare": cmd_compare,
                      "regression": cmd_regression}[args.command](args)
        text = render(report, resolved_config(args, seed), args.output_format)
        if args.output_path:
            with open(args.output_path, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if report.summary is not None:
            print(f"summary: {report.summary}", file=sys.stderr)
        return report.exit_code
    except InputError as exc:
        print(f"qftail: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"qftail: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"qftail: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())
