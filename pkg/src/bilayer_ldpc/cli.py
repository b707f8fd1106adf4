"""Command-line entry point: ``bilayer-ldpc <command> ...``.

Exit codes: 0 ok, 2 bad input or schema, 3 numerical non-convergence,
4 verification failure.  Numbers in JSON/CSV output carry 12 significant digits,
except ensemble coefficients, which are written at full precision so files
round-trip exactly.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor

from .construct import (
    EXACT_AS,
    FULL_EPS2,
    DesignError,
    DesignTargets,
    LowDegreeFamily,
    PoissonCheckFamily,
    TornadoFamily,
    construct_multilayer,
    gap_report,
    tornado_bilayer,
)
from .de_engine import DEFAULT_TOL, ConvergenceError
from .degree_dist import SchemaError, design_rate, ensemble_from_json, parse_poly
from .schedule import (
    ANALYTIC,
    DEFAULT_D2_GRID,
    SIMULATED,
    InvalidRegimeError,
    ScheduleBudgetError,
    delta1_to_d1,
    n2_sweep,
    schedule_analytic,
    schedule_simulate,
)
from .threshold import threshold, threshold_multilayer_bisection

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4
VERIFY_TOL = 5e-3
SIG = 12


class InputError(ValueError):
    pass


class VerifyError(RuntimeError):
    pass


def _round(obj):
    if isinstance(obj, float):
        return float(f"{obj:.{SIG}g}")
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def _dump(obj, out):
    out.write(json.dumps(_round(obj), indent=2, sort_keys=False))
    out.write("\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.{SIG}g}"
    return str(v)


def _write_csv(rows, fields, out):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r.get(f)) for f in fields])
    out.write(buf.getvalue())


def _floats(text, name):
    if text is None or text.strip() == "":
        return []
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def _ints(text, name):
    vals = _floats(text, name)
    if any(v != int(v) or v < 1 for v in vals):
        raise InputError(f"--{name}: expected positive integers, got {text!r}")
    return [int(v) for v in vals]


def _load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    return ensemble_from_json(text)


# -- commands -----------------------------------------------------------------

def cmd_rate(args, out):
    e = _load(args.ensemble)
    _dump({"rate": design_rate(e), "layers": e.L}, out)


def cmd_validate(args, out):
    e = _load(args.ensemble)
    _dump({"valid": True, "layers": e.L, "rate": design_rate(e),
           "p0": [ly.p0 for ly in e.layers]}, out)


def cmd_threshold(args, out):
    e = _load(args.ensemble)
    k = e.L if args.layers is None else args.layers
    if not 1 <= k <= e.L:
        raise InputError(f"--layers must be in [1, {e.L}]")
    if args.method == "bisection":
        rep = threshold_multilayer_bisection(e, k, tol=args.tol)
    else:
        rep = threshold(e, k)
    d = rep.to_dict()
    d["layers"] = k
    _dump(d, out)


def _family(name, D, lam_text):
    if name == "tornado":
        if D is None:
            raise InputError("--family tornado needs --d")
        return TornadoFamily(D)
    if name == "poisson":
        if lam_text is None:
            raise InputError("--family poisson needs --lambda")
        try:
            lam = parse_poly(json.loads(lam_text), "lambda")
        except json.JSONDecodeError as exc:
            raise InputError(f"--lambda: invalid JSON: {exc}") from None
        return PoissonCheckFamily(lam)
    if name == "low-degree":
        return LowDegreeFamily()
    raise InputError(f"unknown family {name!r}")


def _prefix_thresholds(e, jobs=1):
    ks = list(range(1, e.L + 1))
    if jobs > 1 and len(ks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reps = list(pool.map(threshold, [e] * len(ks), ks))
    else:
        reps = [threshold(e, k) for k in ks]
    return [r.epsilon_star for r in reps]


def cmd_design(args, out):
    t = _floats(args.thresholds, "thresholds")
    try:
        targets = DesignTargets(tuple(t))
    except ValueError as exc:
        raise InputError(f"--thresholds: {exc}") from None
    if targets.L < 2:
        raise InputError("--thresholds needs at least two values")
    Ds = _ints(args.d, "d") if args.d else [None] * targets.L
    if len(Ds) == 1:
        Ds = Ds * targets.L
    if len(Ds) != targets.L:
        raise InputError(f"--d needs {targets.L} values (one per layer)")
    fams = [_family(args.family, D, args.lam) for D in Ds]
    design = construct_multilayer(targets, fams, mode=args.layer2_target)
    doc = design.ensemble.to_dict()
    prov = design.provenance()
    prov["defaults"] = {"de_tol": DEFAULT_TOL, "verify_tol": VERIFY_TOL}
    failed = []
    if args.verify:
        measured = _prefix_thresholds(design.ensemble, args.jobs)
        prov["prefix_thresholds"] = measured
        prov["gap_report"] = gap_report(design).to_dict()
        failed = [i + 1 for i, (m, g) in enumerate(zip(measured, targets.thresholds))
                  if abs(m - g) > VERIFY_TOL]
        prov["verified"] = not failed
    doc["provenance"] = _round(prov)
    text = json.dumps(doc, indent=2) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        out.write(text)
    if failed:
        raise VerifyError(f"prefix thresholds {failed} miss their targets by more than {VERIFY_TOL}")


def cmd_schedule(args, out):
    e = _load(args.ensemble)
    if e.L != 2:
        raise InputError("schedule needs a bilayer ensemble")
    if not 0.0 < args.eps <= 1.0:
        raise InputError("--eps must lie in (0, 1]")
    if args.mode == ANALYTIC:
        tr = schedule_analytic(e, args.eps, eps1_star=args.eps1)
    else:
        tr = schedule_simulate(e, args.eps, eta=args.eta, every=args.every, eps1_star=args.eps1)
    _dump(tr.to_dict(), out)


def _ca_row(task):
    D1, D2, eps1, eps2 = task
    try:
        return {"d1": D1, "d2": D2, "rate": tornado_bilayer(D1, D2, eps1, eps2, FULL_EPS2).rate,
                "error": None}
    except Exception as exc:  # per-row failure, sweep goes on
        return {"d1": D1, "d2": D2, "rate": None, "error": f"{type(exc).__name__}: {exc}"}


def cmd_sweep(args, out):
    d2s = DEFAULT_D2_GRID if args.d2 is None else _ints(args.d2, "d2")
    if args.d1 is not None:
        d1s = _ints(args.d1, "d1")
    elif args.delta1 is not None:
        d1s = [delta1_to_d1(v, args.eps1) for v in _floats(args.delta1, "delta1")]
    else:
        d1s = [1, 2, 5]
    grid = [(a, b) for a in d1s for b in d2s]
    if args.figure == "ca":
        tasks = [(a, b, args.eps1, args.eps2) for a, b in grid]
        if args.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                rows = list(pool.map(_ca_row, tasks))
        else:
            rows = [_ca_row(t) for t in tasks]
        fields = ("d1", "d2", "rate", "error")
    else:
        if not 0.0 < args.eps_fraction < 1.0:
            raise InputError("--eps-fraction must lie in (0, 1)")
        rows = n2_sweep(grid, args.eps_fraction, args.eps1, args.eps2, args.mode, args.eta,
                        args.jobs)
        fields = ("delta1", "delta2", "rate", "n2", "eps", "mode", "error")
    _write_csv(rows, fields, out)
    if rows and all(r["error"] for r in rows):
        raise ConvergenceError("every sweep row failed")


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bilayer-ldpc",
        description="Design and analysis of bilayer / multi-layer LDPC ensembles on the BEC.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    s = sub.add_parser("rate", help="design rate of an ensemble file", formatter_class=fmt)
    s.add_argument("ensemble")
    s.set_defaults(func=cmd_rate)

    s = sub.add_parser("validate", help="check an ensemble file against the schema",
                       formatter_class=fmt)
    s.add_argument("ensemble")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("threshold", help="BP threshold of the first k layers", formatter_class=fmt)
    s.add_argument("ensemble")
    s.add_argument("--layers", type=int, default=None, help="prefix length k (default: all)")
    s.add_argument("--method", choices=("auto", "bisection"), default="auto",
                   help="auto: closed form for k <= 2, DE bisection beyond")
    s.add_argument("--tol", type=float, default=1e-8, help="bisection bracket width")
    s.set_defaults(func=cmd_threshold)

    s = sub.add_parser("design", help="build an ensemble for a threshold tuple", formatter_class=fmt)
    s.add_argument("--thresholds", required=True, help="comma-separated, strictly increasing")
    s.add_argument("--family", choices=("tornado", "poisson", "low-degree"), default="tornado")
    s.add_argument("--d", default=None, help="Tornado depth per layer (comma-separated)")
    s.add_argument("--lambda", dest="lam", default=None,
                   help='fixed lambda for the poisson family, e.g. \'{"3": 1.0}\'')
    s.add_argument("--layer2-target", choices=(EXACT_AS, FULL_EPS2), default=EXACT_AS,
                   help="design later layers for eps_i * a_s or for the full eps_i")
    s.add_argument("--verify", action="store_true", help="measure prefix thresholds and gaps")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("-o", "--output", default=None, help="write here instead of stdout")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("schedule", help="layer-2 update count N2 at one eps", formatter_class=fmt)
    s.add_argument("ensemble")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--mode", choices=(ANALYTIC, SIMULATED), default=ANALYTIC)
    s.add_argument("--eta", type=float, default=1e-4, help="simulated trigger threshold")
    s.add_argument("--every", type=int, default=0,
                   help="simulated: force a layer-2 update every k iterations (0 = eta trigger)")
    s.add_argument("--eps1", type=float, default=None,
                   help="layer-1 threshold (default: computed)")
    s.set_defaults(func=cmd_schedule)

    s = sub.add_parser("sweep", help="rate (ca) or N2 (n2) tables for Tornado bilayers",
                       formatter_class=fmt)
    s.add_argument("--figure", choices=("ca", "n2"), required=True)
    s.add_argument("--d1", default=None, help="layer-1 Tornado depths (default 1,2,5)")
    s.add_argument("--delta1", default=None, help="layer-1 gaps; mapped to D1 = round(eps1/delta1)")
    s.add_argument("--d2", default=None,
                   help="layer-2 Tornado depths (default " + ",".join(map(str, DEFAULT_D2_GRID)) + ")")
    s.add_argument("--eps1", type=float, default=0.05)
    s.add_argument("--eps2", type=float, default=0.2)
    s.add_argument("--eps-fraction", type=float, default=0.999)
    s.add_argument("--mode", choices=(ANALYTIC, SIMULATED), default=ANALYTIC)
    s.add_argument("--eta", type=float, default=1e-4)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        args.func(args, out)
    except (SchemaError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, InvalidRegimeError, ScheduleBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (VerifyError, DesignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
