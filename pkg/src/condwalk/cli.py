"""Command-line entry point: ``condwalk <command> ...``.

Commands print JSON (sorted keys, floats with 17 significant digits, a
``schema_version`` field) so identical invocations give identical bytes.
Exit codes: 0 success, 2 validation error, 3 hypothesis failure,
4 budget or convergence error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .chain import center_function, check_hypotheses, load_chain, stationary_distribution
from .dist import (BoundaryFunctional, FREE, KILLED, default_h, enumerate_exact,
                   evolve_binned, survives)
from .dual import dual_chain, functional_battery, verify_duality
from .errors import CondWalkError, HypothesisFailure, NotCentered, ValidationError
from .harmonic import HarmonicGrid, HarmonicTable, compute_harmonic
from .mc import constant_phi, h_transform_estimate, interval_phi, simulate_paths
from .spectral import (DegeneracyCertificate, LatticeCertificate, asymptotic_variance,
                       detect_lattice)
from .verify import THEOREMS, TheoremInputs, build_tables, run_verification

SCHEMA_VERSION = 1


def _fmt(obj) -> str:
    """Deterministic JSON text."""
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(json.dumps(k) + ": " + _fmt(v) for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _fmt(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return format(v, ".17g") if math.isfinite(v) else "null"
    if isinstance(obj, complex):
        return _fmt([obj.real, obj.imag])
    return json.dumps(str(obj))


def emit(payload: dict, out: str | None = None) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    text = _fmt(payload) + "\n"
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _load(args):
    chain = load_chain(args.spec)
    if getattr(args, "center", False):
        chain = center_function(chain)
    return chain


def _state(chain, text: str):
    """Label if it is one, else an integer position."""
    if text in chain.states:
        return text
    return int(text)


# ------------------------------------------------------------------ commands

def cmd_validate(args) -> int:
    chain = _load(args)
    if args.json:
        emit({"d": chain.d, "states": list(chain.states), "row_stochastic": True,
              "digest": chain.digest()})
    else:
        print(f"d={chain.d}")
        print("row-stochastic: ok")
        print(f"states: {', '.join(chain.states)}")
    return 0


def cmd_analyze(args) -> int:
    chain = _load(args)
    rep = check_hypotheses(chain)
    out = {"primitive": rep.primitive, "k0": rep.k0, "centered": rep.centered,
           "nu_f": rep.nu_f, "degenerate": not rep.nondegenerate, "notes": rep.notes}
    if rep.primitive:
        out["nu"] = stationary_distribution(chain).nu
    if isinstance(rep.certificate, DegeneracyCertificate):
        out["certificate"] = {"h": rep.certificate.h, "m": rep.certificate.m,
                              "residual": rep.certificate.residual}
    code = 0
    if rep.primitive and rep.centered:
        prof = asymptotic_variance(chain)
        out["sigma2"] = 0.0 if not rep.nondegenerate else prof.sigma2
        out["sigma2_series"] = prof.sigma2_series
    if rep.ok:
        ev = detect_lattice(chain, t_max=args.t_max, grid=args.grid)
        if isinstance(ev, LatticeCertificate):
            out["lattice"] = {"t_star": ev.t_star, "theta": ev.theta_lat, "a": ev.a_lat,
                              "residual": ev.residual}
            out["non_lattice"] = False
            code = 3
        else:
            out["non_lattice"] = True
            out["evidence"] = {"max_r": ev.max_r, "t_at_max": ev.t_at_max,
                               "t_range": list(ev.t_range)}
    else:
        code = 3
    out["hypotheses_ok"] = code == 0
    emit(out, args.out)
    return code


def cmd_harmonic(args) -> int:
    chain = _load(args)
    prof = asymptotic_variance(chain)
    if not chain.f.any() or prof.sigma2 <= 1e-10:
        raise HypothesisFailure("sigma^2 = 0: no harmonic function")
    target = dual_chain(chain) if args.dual else chain
    grid = HarmonicGrid.default_for(target, prof.sigma, dy=args.dy, y_max=args.y_max)
    table = compute_harmonic(target, grid, tol=args.tol, method=args.method, kill=args.kill)
    if args.out:
        table.to_csv(args.out)
    emit({"dual": args.dual, "dy": table.dy, "y_min": table.y_min, "y_max": table.y_max,
          "kappa": table.kappa, "tail_offset": table.tail_offset, "residual": table.residual,
          "kill": table.kill, "digest": table.chain_digest, "nodes": int(table.values.size),
          "V_at_1": [table(x, 1.0) for x in range(target.d)]})
    return 0


def cmd_dist(args) -> int:
    chain = _load(args)
    x = _state(chain, args.x)
    law = evolve_binned(chain, x, args.y, args.n, args.h, args.mode)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state", "bin_center", "mass"])
            for s, c, m in law.to_rows(chain.states):
                w.writerow([s, format(c, ".17g"), format(m, ".17g")])
    emit({"n": law.n, "h": law.h, "mode": law.mode, "alive_mass": law.alive_mass,
          "killed_mass": law.killed_mass, "truncated_mass": law.truncated_mass})
    return 0


def cmd_simulate(args) -> int:
    chain = _load(args)
    x = _state(chain, args.x)
    if args.htransform:
        table = HarmonicTable.from_csv(args.htransform, chain, kill=args.kill)
        phi = constant_phi if args.z is None else interval_phi(args.z, args.a, table.dy)
        est = h_transform_estimate(chain, table, x, args.y, args.n, phi, args.N, args.seed,
                                   workers=args.workers)
        kind = "h_transform"
    else:
        est = simulate_paths(chain, x, args.y, args.n, args.N, args.seed,
                             workers=args.workers, keep_paths=False).survival
        kind = "plain"
    emit({"estimator": kind, "mean": est.mean, "std_err": est.std_err,
          "n_samples": est.n_samples, "seed": est.seed, "n": args.n})
    return 0


def _cape_g(d: int, w: list[float] | None, wstar: list[float] | None) -> BoundaryFunctional:
    w1 = np.ones(d) if w is None else np.asarray(w, dtype=float)
    w2 = np.ones(d) if wstar is None else np.asarray(wstar, dtype=float)

    def g(pre, suf, z):
        return w1[pre[0]] * w2[suf[0]] * np.maximum(0.0, 1.0 - np.asarray(z)) ** 2
    return BoundaryFunctional(1, 1, g, eps=1.0)


def cmd_verify(args) -> int:
    chain = _load(args)
    theorem = args.theorem.upper()
    x = _state(chain, args.x)
    psi = _floats(args.psi) if args.psi else None
    g = None
    if theorem == "CAPE":
        g = _cape_g(chain.d, _floats(args.w) if args.w else None,
                    _floats(args.wstar) if args.wstar else None)
    inputs = TheoremInputs(x=x, y=args.y, z=args.z, a=args.a, psi=psi, g=g, t=args.t)
    h = args.h if args.h is not None else default_h(chain)
    tables = build_tables(chain, dy=h)
    rep = run_verification(theorem, chain, inputs, _ints(args.n), engine=args.engine, h=h,
                           tables=tables, N=args.N, seed=args.seed)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "estimate", "limit", "ratio"])
            for n, e, l, r in rep.rows():
                w.writerow([n, format(e, ".17g"), format(l, ".17g"), format(r, ".17g")])
    emit(rep.to_dict(), args.out)
    return 0


def cmd_oracle(args) -> int:
    chain = _load(args)
    out = {}
    if args.check in ("duality", "all"):
        out["duality"] = {}
        for n in _ints(args.n):
            rows = []
            for m in (None, np.eye(chain.d)[0]):
                for name, F in functional_battery(chain, n, seed=args.seed).items():
                    lhs, rhs = verify_duality(chain, n, F, m)
                    rows.append({"F": name, "m": "nu" if m is None else "delta_0",
                                 "lhs": lhs, "rhs": rhs, "diff": lhs - rhs})
            out["duality"][str(n)] = rows
    if args.check in ("survival", "all"):
        x = _state(chain, args.x)
        out["survival_exact"] = {str(n): enumerate_exact(chain, x, args.y, n, survives)
                                 for n in _ints(args.survival_n)}
    out["nu"] = stationary_distribution(chain).nu
    emit(out, args.out)
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="condwalk", description="Markov walks killed at 0")
    sub = p.add_subparsers(dest="command", required=True)

    def spec_arg(sp):
        sp.add_argument("spec", help="chain JSON document")
        sp.add_argument("--center", action="store_true", help="subtract nu(f) from f first")

    sp = sub.add_parser("validate", help="check a chain document")
    spec_arg(sp)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("analyze", help="hypotheses, variance and lattice scan")
    spec_arg(sp)
    sp.add_argument("--t-max", type=float, default=10.0)
    sp.add_argument("--grid", type=int, default=2048)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("harmonic", help="tabulate V (or V* with --dual)")
    spec_arg(sp)
    sp.add_argument("--dual", action="store_true")
    sp.add_argument("--dy", type=float)
    sp.add_argument("--y-max", type=float)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--method", choices=["direct", "jacobi"], default="direct")
    sp.add_argument("--kill", choices=["node", "exact"], default="node")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_harmonic)

    sp = sub.add_parser("dist", help="binned law of (X_n, y + S_n)")
    spec_arg(sp)
    sp.add_argument("--x", required=True)
    sp.add_argument("--y", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--h", type=float)
    sp.add_argument("--mode", choices=[KILLED, FREE], default=KILLED)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_dist)

    sp = sub.add_parser("simulate", help="Monte Carlo survival or transform estimate")
    spec_arg(sp)
    sp.add_argument("--x", required=True)
    sp.add_argument("--y", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--htransform", help="harmonic table CSV")
    sp.add_argument("--kill", choices=["node", "exact"], default="node")
    sp.add_argument("--z", type=float, help="estimate the interval [z, z+a] instead of survival")
    sp.add_argument("--a", type=float, default=0.5)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="finite-n check of a limit theorem")
    sp.add_argument("theorem", type=str.upper, choices=THEOREMS)
    spec_arg(sp)
    sp.add_argument("--x", default="0")
    sp.add_argument("--y", type=float, default=1.0)
    sp.add_argument("--z", type=float, default=0.0)
    sp.add_argument("--a", type=float, default=0.5)
    sp.add_argument("--t", type=float, help="use z = t sigma sqrt(n)")
    sp.add_argument("--psi", help="comma-separated state weights")
    sp.add_argument("--w", help="CAPE prefix weights")
    sp.add_argument("--wstar", help="CAPE suffix weights")
    sp.add_argument("--n", required=True, help="comma-separated n list")
    sp.add_argument("--engine", choices=["dp", "mc"], default="dp")
    sp.add_argument("--h", type=float)
    sp.add_argument("--N", type=int, default=100_000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("oracle", help="exact path-sum checks at small n")
    sp.add_argument("check", choices=["duality", "survival", "all"])
    spec_arg(sp)
    sp.add_argument("--n", default="2,3,4")
    sp.add_argument("--x", default="0")
    sp.add_argument("--y", type=float, default=0.5)
    sp.add_argument("--survival-n", default="1,2,3,4")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify" and args.engine == "mc" and args.seed is None:
        parser.error("--engine mc requires --seed")
    try:
        return args.func(args)
    except NotCentered as exc:
        print(f"error: {exc} (rerun with --center to subtract nu(f))", file=sys.stderr)
        return exc.exit_code
    except CondWalkError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ValidationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
