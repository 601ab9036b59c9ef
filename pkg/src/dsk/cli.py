"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 a mathematical check failed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from fractions import Fraction

import numpy as np
import scipy
import sklearn
from threadpoolctl import threadpool_limits

from . import __version__
from .analysis import (
    StructureReport,
    analyze_structure,
    check_theorem1_conclusions,
    check_theorem2,
    energy_structure_experiment,
)
from .errors import TheoremCheckFailed
from .fup import fup_norm
from .generators import CorpusSpec, default_corpus, generate, ground_truth
from .geometry import AffineFlat
from .grid import GridSet
from .measures import GridMeasure
from .sumsets import additive_energy, energy_by_convolution, iterated_sumset, pr_check, small_doubling_certificate, sumset
from .uniformize import (
    ValueFunction,
    center_by_translation,
    collapse_branching,
    uniform_subset,
    uniform_subset_general,
    uniform_subset_subspace,
)

EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2
BACKEND_ENV = "DSK_DEFAULT_BACKEND"


class InputError(Exception):
    pass


class CheckFailed(Exception):
    def __init__(self, clause: str, payload: dict):
        super().__init__(clause)
        self.clause = clause
        self.payload = payload


# ---------------------------------------------------------------------------
# io helpers


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text), hashlib.sha256(text.encode()).hexdigest()[:16]
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _load_set(path: str) -> tuple[GridSet, str]:
    data, digest = _read_json(path)
    try:
        return GridSet.from_dict(data), digest
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_measure(path: str, backend: str) -> tuple[GridMeasure, str]:
    data, digest = _read_json(path)
    try:
        mu = GridMeasure.from_dict(data)
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    return (mu.to_float() if backend == "float" else mu), digest


def _need(args, name: str):
    val = getattr(args, name)
    if val is None:
        raise InputError(f"--{name.replace('_', '-')} is required for '{args.command}'")
    return val


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "handler"}


def _manifest(args, digests: dict | None = None, specs=None) -> dict:
    return {
        "config": _config(args),
        "inputs": digests or {},
        "spec_hashes": [s.digest() for s in specs] if specs else [],
        "versions": {
            "dsk": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__,
        },
    }


def _emit(args, payload: dict, digests=None, specs=None) -> None:
    doc = dict(payload)
    doc["manifest"] = _manifest(args, digests, specs)
    _write(args.output, _dumps(doc))


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _emit_set(args, A: GridSet, extra: dict, digests=None, specs=None) -> None:
    """Write the set itself to ``--output`` and the manifest next to it."""
    if args.output in (None, "-"):
        _write(None, _dumps({"manifest": _manifest(args, digests, specs), "result": extra, "set": A.to_dict()}))
        return
    _write(args.output, A.to_json() + "\n")
    _write(args.output + ".manifest.json", _dumps({"manifest": _manifest(args, digests, specs), "result": extra}))


# ---------------------------------------------------------------------------
# subcommands


def _spec_from_args(args) -> CorpusSpec:
    if args.spec:
        data, _ = _read_json(args.spec)
        try:
            return CorpusSpec.from_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.spec}: {exc}") from exc
    fam = _need(args, "family")
    return CorpusSpec(fam, d=args.dim, m=_need(args, "m"), k=args.k, n=args.n, seed=args.seed or 0, mask=args.mask)


def cmd_generate(args) -> int:
    if args.corpus:
        specs = default_corpus(args.seed or 0)
        out_dir = _need(args, "output")
        os.makedirs(out_dir, exist_ok=True)
        entries = []
        for i, spec in enumerate(specs):
            A = generate(spec)
            name = f"{i:02d}_{spec.family}.json"
            _write(os.path.join(out_dir, name), A.to_json() + "\n")
            entries.append({"file": name, "spec": spec.to_dict(), "hash": spec.digest(), "size": len(A), "ground_truth": ground_truth(spec)})
        _write(os.path.join(out_dir, "manifest.json"), _dumps({"manifest": _manifest(args, specs=specs), "corpus": entries}))
        return EXIT_OK
    spec = _spec_from_args(args)
    try:
        A = generate(spec)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _emit_set(args, A, {"spec": spec.to_dict(), "size": len(A), "ground_truth": ground_truth(spec)}, specs=[spec])
    return EXIT_OK


def cmd_energy(args) -> int:
    A, dig = _load_set(_need(args, "input"))
    res = additive_energy(A)
    payload = res.to_dict()
    if args.backend == "rational":
        payload["convolution_check"] = energy_by_convolution(A) == res.quadruples
        if not payload["convolution_check"]:
            raise CheckFailed("energy-identity", payload)
    _emit(args, payload, {"input": dig})
    return EXIT_OK


def cmd_sumset(args) -> int:
    A, dig = _load_set(_need(args, "input"))
    digests = {"input": dig}
    if args.input2:
        B, digests["input2"] = _load_set(args.input2)
        out = sumset(A, B)
    else:
        out = iterated_sumset(A, args.k or 2)
    _emit_set(args, out, {"size": len(out), "span": out.span}, digests)
    return EXIT_OK


def cmd_doubling(args) -> int:
    A, dig = _load_set(_need(args, "input"))
    AA = sumset(A, A)
    payload = {"size": len(A), "sumset_size": len(AA), "K": str(Fraction(len(AA), len(A)))}
    if A.scale_exp >= 1:
        payload["sigma_star"] = small_doubling_certificate(A)
    if args.k and args.k >= 2:
        payload["pr"] = pr_check(A, args.k).to_dict()
    _emit(args, payload, {"input": dig})
    return EXIT_OK


def cmd_uniformize(args) -> int:
    A, dig = _load_set(_need(args, "input"))
    L = _need(args, "L")
    mode = args.mode
    if mode == "plain":
        res = uniform_subset(A, L)
    elif mode == "subspace":
        res = uniform_subset_subspace(A, L)
    elif mode == "valuefn":
        fns = {"parity": ValueFunction.parity(), "dimension": ValueFunction.dimension(A.dim), "constant": ValueFunction.constant()}
        res = uniform_subset_general(A, L, [fns[args.value_fn]] * (A.scale_exp // L))
    elif mode == "center":
        res = center_by_translation(A, L)
    else:
        res = collapse_branching(A, L, args.scales or [])
    _emit_set(args, res.subset, res.to_dict(), {"input": dig})
    return EXIT_OK


def cmd_analyze(args) -> int:
    A, dig = _load_set(_need(args, "input"))
    report = analyze_structure(A, _need(args, "L"), Fraction(args.delta), args.net_res)
    _emit(args, report.to_dict(), {"input": dig})
    return EXIT_OK


FUP_FIELDS = ["h", "d", "size_x", "size_y", "norm", "trivial_bound", "beta_measured", "beta_formula", "iterations", "quadrature"]


def cmd_fup(args) -> int:
    if args.family:
        rows = []
        specs = []
        for m in args.h_exp or [6]:
            spec = CorpusSpec(args.family, d=args.dim, m=m, k=args.k, n=args.n, seed=args.seed or 0, mask=args.mask)
            specs.append(spec)
            X = generate(spec)
            rows.append(fup_norm(X, X, args.sigma, args.quadrature).to_dict())
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=FUP_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if r[k] is None else repr(r[k]) if isinstance(r[k], float) else r[k]) for k in FUP_FIELDS})
        _write(args.output, buf.getvalue())
        if args.output not in (None, "-"):
            _write(args.output + ".manifest.json", _dumps({"manifest": _manifest(args, specs=specs)}))
        return EXIT_OK
    X, dx = _load_set(_need(args, "input"))
    digests = {"input": dx}
    Y = X
    if args.input2:
        Y, digests["input2"] = _load_set(args.input2)
    res = fup_norm(X, Y, args.sigma, args.quadrature)
    _emit(args, res.to_dict(), digests)
    return EXIT_OK


def cmd_energy_experiment(args) -> int:
    X, dig = _load_set(_need(args, "input"))
    out = energy_structure_experiment(X, _need(args, "L"), Fraction(args.delta), _need(args, "sigma"), args.net_res)
    _emit(args, out, {"input": dig})
    return EXIT_OK


def _flat_list(data, key: str):
    out = []
    for entry in data[key]:
        if isinstance(entry, dict) and "frame" in entry:
            out.append(AffineFlat.from_dict(entry))
        else:
            out.append({tuple(e["coords"]): AffineFlat.from_dict(e["flat"]) for e in entry})
    return out


def cmd_verify(args) -> int:
    theorem = args.theorem
    if theorem == "pr":
        A, dig = _load_set(_need(args, "input"))
        try:
            rep = pr_check(A, args.k or 3)
        except TheoremCheckFailed as exc:
            raise CheckFailed(exc.clause, {"error": str(exc)}) from exc
        _emit(args, rep.to_dict(), {"input": dig})
        return EXIT_OK
    if theorem == "2":
        A, dig = _load_set(_need(args, "input"))
        digests = {"input": dig}
        L = _need(args, "L")
        if args.report:
            data, digests["report"] = _read_json(args.report)
            try:
                report = StructureReport.from_dict(data)
            except (KeyError, ValueError) as exc:
                raise InputError(f"{args.report}: {exc}") from exc
        else:
            report = analyze_structure(A, L, Fraction(args.delta), args.net_res)
        original = None
        if args.original:
            orig, digests["original"] = _load_set(args.original)
            original = len(orig)
        ledger = check_theorem2(A, L, Fraction(args.delta), report, original)
    else:
        mu, d1 = _load_measure(_need(args, "input"), args.backend)
        nu, d2 = _load_measure(_need(args, "input2"), args.backend)
        wit, d3 = _read_json(_need(args, "witness"))
        digests = {"input": d1, "input2": d2, "witness": d3}
        try:
            A = GridSet.from_dict(wit["A"]) if "A" in wit else mu.support()
            B = GridSet.from_dict(wit["B"]) if "B" in wit else nu.support()
            shifts = None
            if "shifts" in wit:
                shifts = tuple(tuple(Fraction(v) for v in y) for y in wit["shifts"])
            ledger = check_theorem1_conclusions(
                mu, nu, A, B, _need(args, "L"), Fraction(args.delta), wit["ks"],
                _flat_list(wit, "W"), _flat_list(wit, "V"), q=args.q, shifts=shifts,
            )
        except KeyError as exc:
            raise InputError(f"witness: missing field {exc.args[0]!r}") from exc
    payload = ledger.to_dict()
    if not ledger.passed:
        _emit(args, payload, digests)
        raise CheckFailed(",".join(ledger.failing()), payload)
    _emit(args, payload, digests)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="input JSON (GridSet or GridMeasure)")
    common.add_argument("--input2", help="second input JSON")
    common.add_argument("--output", help="output path (default: stdout)")
    common.add_argument("-L", type=int, dest="L", help="scale block length L")
    common.add_argument("--delta", default="1/4", help="delta (rational, e.g. 1/4 or 0.25)")
    common.add_argument("--sigma", type=float, help="energy exponent sigma")
    common.add_argument("--rho", type=float, default=1 / 16, help="porosity ratio rho")
    common.add_argument("-k", type=int, dest="k", help="dimension / summand count")
    common.add_argument("-q", type=float, dest="q", default=2.0, help="L^q exponent")
    common.add_argument("--h-exp", type=int, nargs="+", dest="h_exp", help="h = 2^-h_exp (sweep when several)")
    common.add_argument("--net-res", type=int, default=32, dest="net_res", help="subspace net resolution")
    common.add_argument(
        "--backend",
        choices=["rational", "float"],
        default=os.environ.get(BACKEND_ENV, "rational"),
        help=f"measure backend (env {BACKEND_ENV})",
    )
    common.add_argument("--threads", type=int, default=1, help="cap on BLAS/numpy threads")
    common.add_argument("--seed", type=int, default=0, help="64-bit seed")

    parser = argparse.ArgumentParser(prog="dsk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dsk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="build a corpus set")
    p.add_argument("--spec", help="CorpusSpec JSON file")
    p.add_argument("--family")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("-m", type=int, dest="m")
    p.add_argument("-n", type=int, dest="n")
    p.add_argument("--mask", default=None)
    p.add_argument("--corpus", action="store_true", help="write the default corpus into --output")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("energy", parents=[common], help="additive energy")
    p.set_defaults(handler=cmd_energy)
    p = sub.add_parser("sumset", parents=[common], help="A+B, or kA with -k")
    p.set_defaults(handler=cmd_sumset)
    p = sub.add_parser("doubling", parents=[common], help="doubling constant and sigma*")
    p.set_defaults(handler=cmd_doubling)

    p = sub.add_parser("uniformize", parents=[common], help="uniform subsets")
    p.add_argument("--mode", choices=["plain", "valuefn", "subspace", "center", "collapse"], default="plain")
    p.add_argument("--value-fn", dest="value_fn", choices=["parity", "dimension", "constant"], default="parity")
    p.add_argument("--scales", type=int, nargs="*", help="scales to collapse")
    p.set_defaults(handler=cmd_uniformize)

    p = sub.add_parser("analyze", parents=[common], help="per-scale structure report")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("fup", parents=[common], help="FUP operator norm (CSV sweep with --family)")
    p.add_argument("--family")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("-n", type=int, dest="n")
    p.add_argument("--mask", default=None)
    p.add_argument("--quadrature", type=int, default=0)
    p.set_defaults(handler=cmd_fup)

    p = sub.add_parser("energy-experiment", parents=[common], help="energy to structure experiment")
    p.set_defaults(handler=cmd_energy_experiment)

    p = sub.add_parser("verify", parents=[common], help="check theorem conclusions")
    p.add_argument("--theorem", choices=["1", "2", "pr"], required=True)
    p.add_argument("--report", help="structure report JSON (theorem 2)")
    p.add_argument("--original", help="original set before uniformization (theorem 2)")
    p.add_argument("--witness", help="witness JSON with ks, W, V (theorem 1)")
    p.set_defaults(handler=cmd_verify)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        Fraction(args.delta)
    except ValueError:
        print(json.dumps({"error": f"bad --delta {args.delta!r}"}), file=sys.stderr)
        return EXIT_INPUT
    try:
        with threadpool_limits(limits=max(1, args.threads)):
            return args.handler(args)
    except InputError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return EXIT_INPUT
    except CheckFailed as exc:
        print(json.dumps({"error": "check failed", "clause": exc.clause}), file=sys.stderr)
        return EXIT_CHECK
    except TheoremCheckFailed as exc:
        print(json.dumps({"error": "check failed", "clause": exc.clause, "detail": str(exc)}), file=sys.stderr)
        return EXIT_CHECK
    except (ValueError, OverflowError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
