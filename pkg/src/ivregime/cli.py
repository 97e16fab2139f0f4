"""Command-line entry point: ``ivregime <subcommand> ...``.

Exit codes: 0 success, 1 spec/validation error, 2 not found or undefined
estimand, 3 usage error.  JSON goes to stdout (or ``--out``); diagnostics
go to stderr as a single line.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .bounds import UnsupportedOutcomeError, all_bounds
from .conditions import CONDITIONS, DEFAULT_TOL, check_all, check_condition, classify_identification, implication_audit
from .estimands import ZERO_TOL, UndefinedEstimandError, stratum_estimands
from .montecarlo import METHODS, IncompleteStratumError, empirical_estimands, evaluate_regret, learn_regime, read_csv, run_study, sample
from .scm import ScmSpec, SpecError, collect_violations, load_spec, validate_spec
from .search import EQUALITY_MODES, PredicateError, PredicateExpr, SearchConfig, find_witness

SCHEMA_VERSION = 1

EXIT_OK, EXIT_SPEC, EXIT_UNDEFINED, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _int_range(text: str) -> tuple[int, int]:
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            return int(lo), int(hi)
        v = int(text)
        return v, v
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or MIN:MAX, got {text!r}")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ivregime", description="Exact IV identification lab for optimal treatment regimes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def with_spec(sp, required=True):
        sp.add_argument("--spec", required=required, help="model JSON file")
        sp.add_argument("--out", help="write output here instead of stdout")

    sp = sub.add_parser("validate", help="check a model file")
    with_spec(sp)
    sp.add_argument("--tol-delta", type=float, default=ZERO_TOL)

    sp = sub.add_parser("estimands", help="exact per-stratum estimands")
    with_spec(sp)
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--tol", type=float, default=ZERO_TOL)

    sp = sub.add_parser("check", help="evaluate identifying conditions")
    with_spec(sp)
    sp.add_argument("--condition", default="all", help=f"one of {', '.join(CONDITIONS)} or 'all'")
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL)

    sp = sub.add_parser("classify", help="three-level identification classification")
    with_spec(sp)
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL)

    sp = sub.add_parser("bounds", help="Balke-Pearl CATE bounds (bernoulli outcomes)")
    with_spec(sp)
    sp.add_argument("--stratum", help="restrict to one stratum")

    sp = sub.add_parser("simulate", help="sample an observed dataset as CSV")
    with_spec(sp)
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--seed", type=_seed, required=True)
    sp.add_argument("--keep-latent", action="store_true")
    sp.add_argument("--workers", type=_positive_int, default=1)

    sp = sub.add_parser("estimate", help="plug-in estimates and learned regimes")
    with_spec(sp, required=False)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset CSV (y,l,a,z[,u])")
    src.add_argument("--n", type=_positive_int, help="simulate n rows per replication from --spec")
    sp.add_argument("--seed", type=_seed, help="first seed of the study")
    sp.add_argument("--replications", type=_positive_int, default=1)
    sp.add_argument("--method", choices=METHODS + ("all",), default="all")
    sp.add_argument("--true-pz", action="store_true", help="use the model's P(Z=1|l) instead of frequencies")
    sp.add_argument("--workers", type=_positive_int, default=1)

    sp = sub.add_parser("search", help="search random models for a predicate witness")
    sp.add_argument("--predicate", required=True)
    sp.add_argument("--budget", type=_positive_int, required=True)
    sp.add_argument("--seed", type=_seed, required=True)
    sp.add_argument("--n-strata", type=_int_range, default=(1, 3))
    sp.add_argument("--n-latent", type=_int_range, default=(1, 4))
    sp.add_argument("--outcome-mode", choices=("mean", "bernoulli"), default="mean")
    sp.add_argument("--margin-gamma", type=float, default=1e-3)
    sp.add_argument("--margin-delta", type=float, default=1e-3)
    sp.add_argument("--equality-mode", choices=EQUALITY_MODES, default="auto")
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
    sp.add_argument("--out", help="write the witness model here")
    sp.add_argument("--sidecar", help="write the witness condition reports here")
    sp.add_argument("--workers", type=_positive_int, default=1)

    sp = sub.add_parser("report", help="consolidated Table-1 style report")
    with_spec(sp)
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
    return p


def _load(path: str) -> ScmSpec:
    spec = load_spec(path)
    validate_spec(spec)
    return spec


def cmd_validate(args) -> int:
    spec = load_spec(args.spec)
    rep = collect_violations(spec, args.tol_delta)
    _emit(dumps(rep.to_dict()), args.out)
    if not rep.ok:
        raise SpecError(rep.errors)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_estimands(args) -> int:
    table = stratum_estimands(_load(args.spec), args.tol)
    _emit(table.to_csv() if args.format == "csv" else dumps(table.to_dict()), args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    spec = _load(args.spec)
    if args.condition == "all":
        doc = {k: v.to_dict() for k, v in check_all(spec, args.tol).items()}
    elif args.condition in CONDITIONS:
        doc = check_condition(spec, args.condition, args.tol).to_dict()
    else:
        raise UsageError(f"unknown condition {args.condition!r}")
    _emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_classify(args) -> int:
    rep = classify_identification(_load(args.spec), args.tol)
    _emit(dumps(rep.to_dict()), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    spec = _load(args.spec)
    if args.stratum:
        spec.stratum(args.stratum)
        from .bounds import balke_pearl_bounds

        res = {args.stratum: balke_pearl_bounds(spec, args.stratum)}
    else:
        res = all_bounds(spec)
    _emit(dumps({"schema_version": SCHEMA_VERSION, "bounds": {k: v.to_dict() for k, v in res.items()}}), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    data = sample(_load(args.spec), args.n, args.seed, keep_latent=args.keep_latent, workers=args.workers)
    _emit(data.to_csv(), args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    methods = METHODS if args.method == "all" else (args.method,)
    if args.data is not None:
        if args.replications != 1:
            raise UsageError("--replications applies only to simulated studies (--n)")
        spec = _load(args.spec) if args.spec else None
        data = read_csv(args.data, spec)
        est = empirical_estimands(data)
        pz = {s.label: s.p_z for s in spec.strata} if (args.true_pz and spec) else None
        if args.true_pz and spec is None:
            raise UsageError("--true-pz needs --spec")
        regimes, regrets, errors = {}, {}, {}
        for m in methods:
            try:
                regimes[m] = learn_regime(data, m, pz, est)
                if spec is not None:
                    regrets[m] = evaluate_regret(spec, regimes[m])
            except (IncompleteStratumError, UndefinedEstimandError) as exc:
                errors[m] = str(exc)
        doc = {"n": data.n, "estimands": est.to_dict(), "regimes": regimes, "regret": regrets, "errors": errors}
        _emit(dumps(doc), args.out)
        return EXIT_OK
    if args.spec is None or args.seed is None:
        raise UsageError("simulated studies need --spec and --seed")
    spec = _load(args.spec)
    seeds = range(args.seed, args.seed + args.replications)
    records = run_study(spec, args.n, seeds, methods, use_true_pz=args.true_pz, workers=args.workers)
    _emit(dumps(records), args.out)
    return EXIT_OK


def cmd_search(args) -> int:
    try:
        pred = PredicateExpr.parse(args.predicate)
    except PredicateError as exc:
        raise UsageError(str(exc))
    try:
        cfg = SearchConfig(
            n_strata=args.n_strata,
            n_latent=args.n_latent,
            margin_gamma=args.margin_gamma,
            margin_delta=args.margin_delta,
            outcome_mode=args.outcome_mode,
            budget=args.budget,
            seed=args.seed,
            equality_mode=args.equality_mode,
            tol=args.tol,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    res = find_witness(cfg, pred, workers=args.workers)
    sidecar = dumps(res.sidecar(args.tol))
    sidecar_path = args.sidecar
    if sidecar_path is None and args.out:
        sidecar_path = str(Path(args.out).with_suffix("")) + ".conditions.json"
    if sidecar_path:
        Path(sidecar_path).write_text(sidecar)
    if not res.found:
        print(f"not found: no model satisfies {args.predicate!r} within budget {args.budget}", file=sys.stderr)
        return EXIT_UNDEFINED
    _emit(res.spec.to_json(), args.out)
    return EXIT_OK


def build_report(spec: ScmSpec, tol: float = DEFAULT_TOL) -> dict[str, Any]:
    validate_spec(spec)
    table = stratum_estimands(spec)
    conds = check_all(spec, tol)
    classification = classify_identification(spec, tol)
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "spec_digest": spec.digest(),
        "estimands": table.to_dict(),
        "conditions": {k: v.to_dict() for k, v in conds.items()},
        "implication_audit": implication_audit(spec, tol).to_dict(),
        "classification": classification.to_dict(),
        "table1": [
            {"quantity_identified": row.level, "identified": row.identified, "status": row.status}
            for row in classification.levels
        ],
    }
    if all(s.is_bernoulli for s in spec.strata):
        doc["bounds"] = {k: v.to_dict() for k, v in all_bounds(spec).items()}
    return doc


def cmd_report(args) -> int:
    _emit(dumps(build_report(_load(args.spec), args.tol)), args.out)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "estimands": cmd_estimands,
    "check": cmd_check,
    "classify": cmd_classify,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "search": cmd_search,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except KeyError as exc:
        print(f"spec error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_SPEC
    except UnsupportedOutcomeError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (UndefinedEstimandError, IncompleteStratumError) as exc:
        print(f"undefined: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
