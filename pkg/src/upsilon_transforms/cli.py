"""Command-line front end: ``upsilon <command> ...``.

Exit codes: 0 success, 2 bad flags or parameters, 3 numerical failure,
4 measure outside the transform's domain, 5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, identities, pathsim, stable, upsilon
from .errors import (
    ConfigError,
    DomainMismatch,
    NonConvergence,
    NotInDomain,
    UpsilonError,
)
from .levy import class_membership, make_measure

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_DOMAIN, EXIT_VERIFY = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


# --- argument parsing helpers --------------------------------------------------------


def _float(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(val):
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return val


def _float_list(text: str) -> list:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("empty list")
    return [_float(p.strip()) for p in parts]


def _positive_int(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {val}")
    return val


def _seed(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return val


def _positive_float(text: str) -> float:
    val = _float(text)
    if not val > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {val:g}")
    return val


def _time_truncation(text: str):
    return "auto" if text == "auto" else _positive_float(text)


def _params(text: str) -> dict:
    """``a=1,b=2`` -> {"a": 1.0, "b": 2.0}."""
    out = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, val = item.partition("=")
        if not sep or not key.strip():
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        out[key.strip()] = _float(val.strip())
    return out


def _kernel_spec(text: str) -> dict:
    """``psi:alpha=-1,p=1`` -> {"kind": "psi", "alpha": -1.0, "p": 1.0}."""
    kind, sep, rest = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected kind:params, got {text!r}")
    d = {"kind": kind.strip().lower()}
    d.update(_params(rest))
    return d


def _grid(text: str) -> list:
    vals = _float_list(text)
    if any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
        raise argparse.ArgumentTypeError("grid must be strictly increasing positive radii")
    return vals


def _load_measure(source: str):
    fx = identities.fixtures()
    if source.startswith("fixture:"):
        name = source.split(":", 1)[1]
        if name not in fx:
            raise UsageError(f"unknown fixture {name!r}; known: {', '.join(fx)}")
        return fx[name], name
    try:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read measure file {source!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"measure file {source!r} is not valid JSON: {exc}") from None
    return make_measure(doc), Path(source).name


def _kernel(kind: str, params: dict):
    return upsilon.make_dilation(kind, **params)


# --- output helpers ------------------------------------------------------------------


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


class _Output:
    """Primary outputs go to stdout or ``--out-dir``; the manifest goes next to
    them, or to stderr as one JSON line."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out_dir = Path(args.out_dir) if getattr(args, "out_dir", None) else None
        self.files = []
        self.started = _dt.datetime.now(_dt.timezone.utc)

    def emit(self, name: str, text: str, stdout: bool = True):
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / name).write_text(text, encoding="utf-8", newline="\n")
            self.files.append(name)
        elif stdout:
            sys.stdout.write(text)

    def manifest(self, extra: dict | None = None):
        params = {k: v for k, v in vars(self.args).items() if k not in ("func", "out_dir")}
        doc = {
            "schema_version": SCHEMA_VERSION,
            "tool": "upsilon",
            "tool_version": __version__,
            "command": self.args.command,
            "argv": self.argv,
            "parameters": params,
            "seed": params.get("seed"),
            "tolerances": {
                "quadrature_tol": _quad_tol(),
                "UPSILON_QUAD_TOL": os.environ.get("UPSILON_QUAD_TOL"),
            },
            "started": self.started.isoformat(),
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "outputs": self.files,
        }
        if extra:
            doc.update(extra)
        text = json.dumps(doc, sort_keys=True, default=str)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / "manifest.json").write_text(text + "\n", encoding="utf-8")
        else:
            sys.stderr.write(text + "\n")


def _quad_tol():
    from .numkit import default_tol
    return default_tol()


# --- commands ------------------------------------------------------------------------


def cmd_stable(args, out: _Output) -> int:
    r = stable.check_index(args.r)
    if args.laplace is not None:
        t = np.asarray(args.laplace, dtype=float)
        if np.any(t < 0):
            raise UsageError("Laplace arguments must be >= 0")
        lt = np.atleast_1d(stable.stable_laplace(r, t))
        exact = np.exp(-(t**r))
        rows = [[_num(a), _num(b), _num(c), _num(abs(b - c))] for a, b, c in zip(t, lt, exact)]
        out.emit("stable.csv", _csv_text(["t", "laplace", "exp_minus_t_pow_r", "abs_error"], rows))
    else:
        x = np.asarray(args.x, dtype=float)
        f = np.atleast_1d(stable.stable_density(r, x))
        out.emit("stable.csv", _csv_text(["x", "density"], [[_num(a), _num(b)] for a, b in zip(x, f)]))
    out.manifest()
    return EXIT_OK


def cmd_transform(args, out: _Output) -> int:
    rho = _kernel(args.kernel, args.params)
    M, name = _load_measure(args.measure)
    if not upsilon.in_domain(rho, M):
        dom = upsilon.classify_dilation_domain(rho)
        raise NotInDomain(f"{name} is not in the domain of {rho}: domain {dom.name}", dom)
    r = np.asarray(args.grid, dtype=float)
    rows = []
    for j, comp in enumerate(M.components):
        vals = np.atleast_1d(upsilon.transform_density(rho, M, j, r))
        direction = " ".join(repr(float(c)) for c in comp.direction)
        rows.extend([direction, _num(a), _num(b)] for a, b in zip(r, vals))
    out.emit("transform.csv", _csv_text(["direction", "r", "density"], rows))
    out.manifest({"kernel": str(rho), "measure": name})
    return EXIT_OK


def _identity_spec(args) -> identities.IdentitySpec:
    ident = {k.lower(): k for k in identities.IDENTITIES}.get(args.identity.lower())
    if ident is None:
        raise UsageError(f"unknown identity {args.identity!r}")
    if ident == "Commute":
        if args.rho1 is None or args.rho2 is None:
            raise UsageError("commute needs --rho1 and --rho2")
        params = {"rho1": args.rho1, "rho2": args.rho2}
    else:
        params = dict(args.params or {})
    return identities.IdentitySpec(ident, params)


def cmd_verify(args, out: _Output) -> int:
    grid = args.grid or list(identities.DEFAULT_GRID)
    if args.suite:
        if args.suite != "default":
            raise UsageError(f"unknown suite {args.suite!r}")
        reports = identities.run_cells(identities.default_cells(), grid, args.tol, args.workers)
    else:
        if args.identity is None:
            raise UsageError("give --suite default or --identity NAME")
        spec = _identity_spec(args)
        if args.measure:
            M, name = _load_measure(args.measure)
        else:
            M, name = identities.fixtures()["delta1"], "delta1"
        reports = [identities.verify(spec, M, grid, args.tol, measure_id=name)]
    out.emit("report.json", identities.reports_to_json(reports) + "\n")
    if args.csv:
        out.emit("report.csv", identities.reports_to_csv(reports), stdout=False)
    failed = [r for r in reports if not r.passed]
    out.manifest({"cells": len(reports), "failed": len(failed)})
    for r in failed:
        why = r.message or f"sup residual {r.sup_residual:.3g}, oracle {r.sup_oracle_residual:.3g}, tol {r.tolerance:g}"
        print(f"FAILED {r.spec.label()} on {r.measure_id}: {why}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_simulate(args, out: _Output) -> int:
    rho = _kernel(args.kernel, args.params)
    M, name = _load_measure(args.measure)
    cfg = pathsim.SimConfig(args.eps, args.n, args.T, args.seed)
    batch = pathsim.simulate_y(rho, M, cfg)
    diag = dict(batch.diagnostics)
    if args.ugrid:
        g = np.asarray(args.ugrid, dtype=float)
        if M.dimension > 1:
            g = np.outer(g, np.ones(M.dimension) / math.sqrt(M.dimension))
        Mstar = upsilon.transform(rho, M)
        diag["ecf_residual"] = pathsim.ecf_residual(batch, Mstar, g)
        diag["ecf_bound"] = 3.0 / math.sqrt(cfg.sample_count)
        diag["ugrid"] = g.tolist()
    batch.diagnostics = diag
    out.emit("samples.csv", batch.to_csv(), stdout=args.out_dir is None and args.print_samples)
    out.emit("diagnostics.json", batch.diagnostics_json(), stdout=args.out_dir is None and not args.print_samples)
    out.manifest({"kernel": str(rho), "measure": name})
    if "ecf_residual" in diag:
        print(f"ecf_residual {diag['ecf_residual']:.6g} (3/sqrt(n) = {diag['ecf_bound']:.6g})",
              file=sys.stderr)
    return EXIT_OK


def cmd_classify(args, out: _Output) -> int:
    rho = _kernel(args.kernel, args.params)
    dom = upsilon.classify_dilation_domain(rho)
    doc = {"schema_version": SCHEMA_VERSION, "kernel": str(rho), "domain": dom.name,
           "domain_class": dom.to_dict()}
    if args.measure:
        M, name = _load_measure(args.measure)
        mc = dom.moment_class()
        doc["measure"] = name
        doc["member"] = bool(M.is_zero) if mc is None else bool(class_membership(M, mc))
    out.emit("classify.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    out.manifest()
    return EXIT_OK


def cmd_replay(args, out: _Output) -> int:
    try:
        doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest!r}: {exc}") from None
    argv = doc.get("argv")
    if not isinstance(argv, list) or not argv or argv[0] == "replay":
        raise UsageError("manifest has no replayable argv")
    argv = _strip_out_dir(argv)
    if args.out_dir:
        argv = argv + ["--out-dir", args.out_dir]
    return main(argv)


def _strip_out_dir(argv):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out-dir":
            skip = True
            continue
        if a.startswith("--out-dir="):
            continue
        out.append(a)
    return out


# --- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="upsilon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out-dir", help="write outputs and manifest.json here instead of stdout")

    sp = sub.add_parser("stable", help="one-sided stable density or its Laplace transform")
    sp.add_argument("--r", type=_float, required=True, help="stable index in (0, 1)")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--x", type=_float_list, help="comma-separated abscissae")
    g.add_argument("--laplace", type=_float_list, help="comma-separated Laplace arguments t")
    common(sp)
    sp.set_defaults(func=cmd_stable)

    def kernel_flags(sp):
        sp.add_argument("--kernel", required=True, choices=["psi", "tau", "pi"])
        sp.add_argument("--params", type=_params, required=True,
                        help="kernel parameters, e.g. alpha=-1,p=1")

    sp = sub.add_parser("transform", help="density of the transformed measure on a grid")
    kernel_flags(sp)
    sp.add_argument("--measure", required=True, help="measure JSON file or fixture:NAME")
    sp.add_argument("--grid", type=_grid, default=list(identities.DEFAULT_GRID))
    common(sp)
    sp.set_defaults(func=cmd_transform)

    sp = sub.add_parser("verify", help="numerical certification of the transform identities")
    sp.add_argument("--suite", help="'default' runs the full certification suite")
    sp.add_argument("--identity", help="part1..part4, commute or chain")
    sp.add_argument("--params", type=_params)
    sp.add_argument("--rho1", type=_kernel_spec, help="commute: kind:params, e.g. psi:alpha=-1,p=1")
    sp.add_argument("--rho2", type=_kernel_spec)
    sp.add_argument("--measure", help="measure JSON file or fixture:NAME (default fixture:delta1)")
    sp.add_argument("--grid", type=_grid)
    sp.add_argument("--tol", type=_positive_float)
    sp.add_argument("--workers", type=_positive_int, default=1)
    sp.add_argument("--csv", action="store_true", help="also write report.csv (with --out-dir)")
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("simulate", help="Monte Carlo samples of the stochastic integral")
    kernel_flags(sp)
    sp.add_argument("--measure", required=True, help="measure JSON file or fixture:NAME")
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--eps", type=_positive_float, required=True, help="jump cutoff")
    sp.add_argument("--seed", type=_seed, default=0)
    sp.add_argument("--T", type=_time_truncation, default="auto", help="time truncation or 'auto'")
    sp.add_argument("--ugrid", type=_float_list, help="CF check points (scaled unit diagonal if d > 1)")
    sp.add_argument("--print-samples", action="store_true",
                    help="without --out-dir, print samples instead of diagnostics")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("classify", help="domain class of a kernel and optional membership")
    kernel_flags(sp)
    sp.add_argument("--measure", help="measure JSON file or fixture:NAME")
    common(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest")
    common(sp)
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    out = _Output(args, argv)
    try:
        return args.func(args, out)
    except (UsageError, ConfigError) as exc:
        code, msg = EXIT_USAGE, str(exc)
    except NotInDomain as exc:
        code, msg = EXIT_DOMAIN, str(exc)
    except DomainMismatch as exc:
        code, msg = EXIT_VERIFY, str(exc)
    except (NonConvergence, ArithmeticError) as exc:
        code, msg = EXIT_NUMERIC, str(exc)
    except (UpsilonError, ValueError, IndexError) as exc:
        code, msg = EXIT_USAGE, str(exc)
    print(f"upsilon {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
