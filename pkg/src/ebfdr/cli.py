"""Batch command line: encode, fit, control, simulate and null-study.

Every data file written starts with ``#`` comment lines recording the
command, package version and seed. Outputs depend only on the inputs and the
seed, never on ``--workers``.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .baselines import Method
from .binning import BIN_RULES, bin_counts
from .encoding import Kind, QuantizationScheme, p_type_encode, t_type_encode
from .fdr_eb import THRESHOLD_RULES, decide, fit_zscores
from .io import FORMATS, InputError, ModelFile, read_values, render, write_csv
from .mixture_fit import EmConfig, FitError
from .rng_dist import DomainError, norm_sf
from .simulation import PARAM_NAMES, Scenario, ScenarioSpec, run_null_study, run_study
from .transforms import collect_zscores, p_to_z

EXIT_USAGE = 2
EXIT_FAILURE = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(kind):
    def parse(text: str):
        items = [t for t in text.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        try:
            return [kind(t.strip()) for t in items]
        except (ValueError, DomainError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _scheme(text: str) -> QuantizationScheme:
    try:
        return QuantizationScheme.parse(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _scenario(text: str) -> Scenario:
    try:
        return Scenario.parse(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _level(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1)")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return v


def _add_input(p):
    p.add_argument("--in", dest="input", required=True, help="input file, one value per line")
    p.add_argument("--format", choices=FORMATS, default="csv")


def _add_em(p):
    # None marks "not given" so control can reject them next to --model
    p.add_argument("--bin-rule", choices=BIN_RULES, default=None, help="default: sturges")
    p.add_argument("--max-iter", type=_positive_int, default=None)
    p.add_argument("--rel-tol", type=float, default=None)
    p.add_argument("--n-starts", type=_positive_int, default=None)
    p.add_argument("--no-snap", action="store_true", help="keep equally spaced bin edges")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ebfdr", description="Empirical-Bayes FDR control for encoded p-values.")
    ap.add_argument("--version", action="version", version=f"ebfdr {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="apply a p-type or T-type encoding")
    _add_input(p)
    p.add_argument("--scheme", type=_scheme, required=True, help="none|p8|p9|p16|p17|t7|t8|t15|t16")
    p.add_argument("--as-pvalues", action="store_true",
                   help="T-type only: write 1 - Phi(t) of the encoded statistics")
    p.add_argument("--out", default="-")

    p = sub.add_parser("fit", help="fit the z-score mixture by binned EM")
    _add_input(p)
    _add_em(p)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True, help="model JSON path")

    p = sub.add_parser("control", help="per-test EB decisions")
    _add_input(p)
    p.add_argument("--model", default=None, help="model JSON from `fit`; fitted in-line if absent")
    p.add_argument("--beta", type=_level, default=0.05)
    p.add_argument("--rule", choices=THRESHOLD_RULES, default="mfdr")
    _add_em(p)
    p.add_argument("--seed", type=_seed, default=None)
    p.add_argument("--out", default="-")

    p = sub.add_parser("simulate", help="FDP/TPP study over scenarios, encodings and methods")
    p.add_argument("--scenario", type=_scenario, required=True, help="s1..s5")
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.add_argument("--reps", type=_positive_int, default=20)
    p.add_argument("--pi0", type=_level, default=0.8)
    p.add_argument("--encodings", type=_csv_list(QuantizationScheme.parse), default="none,p8,t7")
    p.add_argument("--methods", type=_csv_list(Method.parse), default="eb,bh,by,qvalue")
    p.add_argument("--betas", type=_csv_list(float), default="0.05,0.10")
    p.add_argument("--bin-rule", choices=BIN_RULES, default="sturges")
    p.add_argument("--rule", choices=THRESHOLD_RULES, default="mfdr")
    p.add_argument("--lambda", dest="lam", type=_level, default=0.5, help="Storey tuning value")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", default="-")

    p = sub.add_parser("null-study", help="single-normal fits to all-null encoded z-scores")
    p.add_argument("--encodings", type=_csv_list(QuantizationScheme.parse),
                   default="none,p8,p9,p16,p17,t7,t8,t15,t16")
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.add_argument("--reps", type=_positive_int, default=20)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", default="-")
    return ap


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot write {out}: {exc.strerror}") from None


def _provenance(args, seed=None) -> list[str]:
    lines = [f"ebfdr {__version__} {args.command}"]
    if seed is not None:
        lines.append(f"seed={seed}")
    return lines


def _em_config(args, seed: int) -> EmConfig:
    kw = {"seed": seed}
    if args.max_iter is not None:
        kw["max_iter"] = args.max_iter
    if args.rel_tol is not None:
        if not args.rel_tol > 0:
            raise UsageError("--rel-tol must be positive")
        kw["rel_tol"] = args.rel_tol
    if args.n_starts is not None:
        kw["n_starts"] = args.n_starts
    return EmConfig(**kw)


def _check_levels(betas):
    for b in betas:
        if not 0.0 < b < 1.0:
            raise UsageError(f"beta {b} is not in (0, 1)")


def cmd_encode(args) -> None:
    x = read_values(args.input, args.format)
    scheme: QuantizationScheme = args.scheme
    if args.as_pvalues and scheme.kind is not Kind.TTYPE:
        raise UsageError("--as-pvalues applies to T-type schemes only")
    comments = _provenance(args) + [f"scheme={scheme.label}"]
    if scheme.kind is Kind.PTYPE:
        vals, header = p_type_encode(x, scheme.gamma), "pvalue"
    elif scheme.kind is Kind.TTYPE:
        vals, scale = t_type_encode(x, scheme.gamma)
        comments.append(f"max_abs={scale.max_abs!r}")
        vals, header = (norm_sf(vals), "pvalue") if args.as_pvalues else (vals, "statistic")
    else:
        vals, header = x, "value"
    _emit(render(write_csv, [header], ([float(v)] for v in vals), comments), args.out)


def _read_pvalues(args) -> np.ndarray:
    p = read_values(args.input, args.format)
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise InputError(f"{args.input}: p-values must lie in [0, 1]")
    return p


def _fit(args, p, seed):
    zs = collect_zscores(p)
    rule = args.bin_rule or "sturges"
    fit = fit_zscores(zs, rule, _em_config(args, seed), snap=not args.no_snap)
    counts = bin_counts(zs, fit.bins).counts
    model = ModelFile(fit.params, fit.loglik, fit.n_iter, fit.converged,
                      tuple(float(e) for e in fit.bins.edges), tuple(int(c) for c in counts),
                      rule, zs.n_total, zs.n_pos_inf, zs.n_neg_inf, seed)
    return zs, model


def cmd_fit(args) -> None:
    p = _read_pvalues(args)
    _, model = _fit(args, p, args.seed)
    _emit(model.to_json(), args.out)


def cmd_control(args) -> None:
    given = [f for f, v in (("--bin-rule", args.bin_rule), ("--max-iter", args.max_iter),
                            ("--rel-tol", args.rel_tol), ("--n-starts", args.n_starts),
                            ("--seed", args.seed)) if v is not None]
    if args.no_snap:
        given.append("--no-snap")
    if args.model and given:
        raise UsageError(f"{', '.join(given)} conflict with --model (the model is already fitted)")
    p = _read_pvalues(args)
    if args.model:
        model = ModelFile.read(args.model)
        z = np.atleast_1d(p_to_z(p))
    else:
        zs, model = _fit(args, p, args.seed or 0)
        z = zs.full()
    res = decide(z, model.params, args.beta, rule=args.rule)
    th = model.params
    comments = _provenance(args, model.seed) + [
        f"beta={args.beta!r} rule={args.rule} threshold_c={res.threshold_c!r} "
        f"mfdr={res.mfdr_at_c!r} n_rejected={res.n_rejected}",
        "model " + " ".join(f"{k}={v!r}" for k, v in zip(PARAM_NAMES, th.as_array().tolist())),
    ]
    rows = ((i, float(pv), float(zv), float(t), int(r))
            for i, (pv, zv, t, r) in enumerate(zip(p, z, res.tau, res.rejected)))
    _emit(render(write_csv, ["index", "pvalue", "zscore", "tau", "rejected"], rows, comments), args.out)


def cmd_simulate(args) -> None:
    _check_levels(args.betas)
    spec = ScenarioSpec(args.scenario, args.n, args.pi0, args.seed)
    summary = run_study(spec, args.encodings, args.methods, args.betas, args.reps,
                        EmConfig(seed=args.seed), args.bin_rule, args.lam, args.workers, args.rule)
    comments = _provenance(args, args.seed) + [
        f"scenario={spec.id.value} n={spec.n} pi0={spec.pi0!r} reps={args.reps} "
        f"bin_rule={args.bin_rule} eb_rule={args.rule} lambda={args.lam!r}",
        "sd_* is the SD across replications; se_* = sd_* / sqrt(reps)",
    ]
    header = ["scenario", "encoding", "method", "beta", "mean_fdp", "sd_fdp", "se_fdp",
              "mean_tpp", "sd_tpp", "se_tpp", "reps", "failures"]
    rows = ((r.scenario, r.encoding, r.method, float(r.beta), r.mean_fdp, r.sd_fdp, r.se_fdp,
             r.mean_tpp, r.sd_tpp, r.se_tpp, r.reps, r.failures) for r in summary.rows)
    _emit(render(write_csv, header, rows, comments), args.out)


def cmd_null_study(args) -> None:
    rows = run_null_study(args.encodings, args.n, args.reps, args.seed, args.workers)
    comments = _provenance(args, args.seed) + [
        f"n={args.n} reps={args.reps}",
        "sd is the SD across replications; se = sd / sqrt(reps)",
    ]
    body = ((r.encoding, r.name, r.mean, r.sd, r.se, r.reps) for r in rows)
    _emit(render(write_csv, ["encoding", "parameter", "mean", "sd", "se", "reps"], body, comments),
          args.out)


COMMANDS = {
    "encode": cmd_encode,
    "fit": cmd_fit,
    "control": cmd_control,
    "simulate": cmd_simulate,
    "null-study": cmd_null_study,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ebfdr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, DomainError, FitError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"ebfdr: error: {msg}", file=sys.stderr)
        return EXIT_FAILURE
    except BrokenPipeError:
        # reader went away (e.g. `| head`); silence the flush at interpreter exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
