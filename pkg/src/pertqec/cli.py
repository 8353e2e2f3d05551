"""Command-line front end.

    pertqec COMMAND --scenario PATH [--out PATH] [--seed N] [--tol NAME=VALUE] [--quiet]

Commands: ``check-kl``, ``expand``, ``sweep``, ``scaling``, ``report`` and
``validate``. Exit status is 0 on success, 2 when the scenario does not
validate and 3 when a numerical check fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channels import tp_normalized
from .correctability import (
    SupportMismatchError,
    alpha_scaling,
    best_recovery,
    bounds_check,
    delta,
    delta_expansion,
    equivalent_form_check,
    kl_check_series,
    sample_code_states,
)
from .eigexpand import SeriesOrderError, StructuralZeroError, delta_via_expansion
from .matcore import ConvergenceError, NotPSDError
from .scenario import Scenario, bundled_dir, load_scenario, validate_scenario
from .series import evaluate, gauge_eliminate_e0

SCHEMA_VERSION = 1
COMMANDS = ("check-kl", "expand", "sweep", "scaling", "report", "validate")
NEGATIVE_COEFF = -1e-8
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class NumericalCheckError(RuntimeError):
    pass


# -- deterministic serialisation -----------------------------------------------------


def _num(x: float) -> str:
    if not math.isfinite(x):
        raise NumericalCheckError(f"non-finite value {x!r} in report")
    if x == 0:
        return "0.0"
    s = format(x, ".17g")
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return f"[{_num(obj.real)}, {_num(obj.imag)}]"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_encode(str(k), indent, 0)}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple, np.ndarray)) for x in obj):
            return "[" + ", ".join(_encode(x, indent, level) for x in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(x, indent, level + 1) for x in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with sorted keys, floats at 17 significant digits and complex as ``[re, im]``."""
    return _encode(obj, indent, 0) + "\n"


# -- analyses --------------------------------------------------------------------------


def _fit_dict(fit) -> dict:
    return {"grid": fit.grid, "values": fit.values, "slope": fit.slope, "intercept": fit.intercept,
            "r_squared": fit.r_squared, "status": fit.status, "floor": fit.floor}


def _channel(sc: Scenario, noise, eps: float):
    if noise.exact is not None:
        return noise.exact(eps), "exact"
    return tp_normalized(evaluate(noise.series, eps)), "normalised series"


def run_check_kl(sc: Scenario, noise) -> dict:
    tol = sc.tolerances["kl"]
    kl = kl_check_series(sc.code, noise.first_order, tol)
    eq = equivalent_form_check(sc.code, noise.series, sc.eps_grid, tol)
    return {
        "passed": kl.passed,
        "max_residual": kl.max_residual,
        "tolerance": tol,
        "n_errors": noise.first_order.n_ops - 1,
        "lambda": kl.lam,
        "pair_residuals": kl.pair_residuals,
        "linear_residuals": kl.linear_residuals,
        "equivalent_form": {"first": _fit_dict(eq.first_form), "second": _fit_dict(eq.second_form)},
    }


def run_expand(sc: Scenario, noise) -> dict:
    rng = np.random.default_rng(sc.seed)
    states = sample_code_states(sc.code, sc.samples, rng)
    gauged = gauge_eliminate_e0(noise.series)
    tol = sc.tolerances["kl"]
    samples = []
    for i, rho in enumerate(states):
        ex = delta_expansion(noise.series, rho, rho)
        via = delta_via_expansion(noise.series, rho, rho)
        ex_g = delta_expansion(gauged, rho, rho)
        samples.append({
            "index": i,
            "term_linear_trace": ex.term_linear_trace,
            "term_quadratic": ex.term_quadratic,
            "term_leakage": ex.term_leakage,
            "second_order_coeff": ex.second_order_coeff,
            "eigexpand_support_term": via.support_term,
            "eigexpand_kernel_term": via.kernel_term,
            "eigexpand_coeff": via.second_order_coeff,
            "gauged_coeff": ex_g.second_order_coeff,
        })
    coeffs = [s["second_order_coeff"] for s in samples]
    return {
        "samples": samples,
        "max_abs_coeff": max(abs(c) for c in coeffs),
        "min_coeff": min(coeffs),
        "max_two_path_difference": max(abs(s["second_order_coeff"] - s["eigexpand_coeff"]) for s in samples),
        "gauge": {
            "kl_passed": kl_check_series(sc.code, gauged, tol).passed,
            "kl_passed_before": kl_check_series(sc.code, noise.series, tol).passed,
            "max_coeff_change": max(abs(s["second_order_coeff"] - s["gauged_coeff"]) for s in samples),
        },
    }


def run_sweep(sc: Scenario, noise) -> dict:
    rho = sc.code.maximally_mixed()
    rows = []
    for eps in sc.eps_grid:
        ch, source = _channel(sc, noise, float(eps))
        rec = best_recovery(ch, sc.code)
        d = delta(ch, rho, rho)
        rows.append({"eps": float(eps), "delta": d, "one_minus_delta": 1.0 - d,
                     "infidelity": rec.infidelity, "recovery": rec.method, "tp_defect": ch.tp_defect})
    return {"eps_meaning": noise.eps_meaning, "channel": source, "state": "P/TrP", "points": rows}


def run_scaling(sc: Scenario, noise) -> dict:
    fit = alpha_scaling(noise.series, sc.code, sc.eps_grid, exact=noise.exact,
                        floor=sc.tolerances["fit_floor"])
    return {"eps_meaning": noise.eps_meaning, "channel": "exact" if noise.exact else "evaluated series",
            **_fit_dict(fit)}


def run_bounds(sc: Scenario, noise) -> dict:
    ch, source = _channel(sc, noise, sc.bounds_eps)
    rep = bounds_check(ch, sc.code, samples=sc.samples, seed=sc.seed, tol=sc.tolerances["bounds"])
    return {
        "eps": sc.bounds_eps,
        "channel": source,
        "samples": [{"delta": s.delta, "fidelity": s.fidelity, "sqrt_delta": math.sqrt(s.delta)} for s in rep.samples],
        "min_delta": rep.min_delta,
        "worst_case_fidelity": rep.worst_case_fidelity,
        "tyson_ok": rep.tyson_ok,
        "worst_lower_ok": rep.worst_lower_ok,
        "worst_upper_ok": rep.worst_upper_ok,
        "upper_bound_value": 0.75 * rep.min_delta + 0.25,
    }


SECTIONS = {
    "check-kl": ("kl",),
    "expand": ("expansion",),
    "sweep": ("sweep",),
    "scaling": ("scaling",),
    "report": ("kl", "expansion", "sweep", "scaling", "bounds"),
}
RUNNERS = {"kl": run_check_kl, "expansion": run_expand, "sweep": run_sweep,
           "scaling": run_scaling, "bounds": run_bounds}


def expectation_checks(sc: Scenario, sections: dict) -> list[dict]:
    """Compare computed sections with the scenario's ``expect`` block."""
    exp = sc.expect
    out = []

    def add(name, ok):
        out.append({"name": name, "passed": bool(ok)})

    if "kl" in sections and "kl_passed" in exp:
        add("kl_passed", sections["kl"]["passed"] == exp["kl_passed"])
    if "expansion" in sections:
        e = sections["expansion"]
        tol = sc.tolerances["expansion"]
        add("two_path_expansion", e["max_two_path_difference"] <= tol)
        add("gauge_invariance", e["gauge"]["max_coeff_change"] <= tol
            and e["gauge"]["kl_passed"] == e["gauge"]["kl_passed_before"])
        if exp.get("kl_passed") is True:
            add("coeff_vanishes", e["max_abs_coeff"] <= tol)
        elif exp.get("kl_passed") is False:
            add("coeff_negative", e["min_coeff"] <= NEGATIVE_COEFF)
    if "scaling" in sections:
        s = sections["scaling"]
        if "saturated" in exp:
            add("saturated", (s["slope"] is None) == exp["saturated"])
        if "slope_min" in exp:
            add("slope_min", s["slope"] is not None and s["slope"] >= exp["slope_min"])
        if "slope_max" in exp:
            add("slope_max", s["slope"] is not None and s["slope"] <= exp["slope_max"])
    return out


def build_report(sc: Scenario, command: str) -> dict:
    noise = sc.noise()
    sections = {name: RUNNERS[name](sc, noise) for name in SECTIONS[command]}
    checks = expectation_checks(sc, sections)
    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "command": command,
        "scenario": sc.raw,
        "seed": sc.seed,
        "tolerances": sc.tolerances,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
        **sections,
    }


# -- entry point -------------------------------------------------------------------------


def _parse_tol(items):
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--tol expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ValueError(f"--tol {name}: {value!r} is not a number") from None
    return out


def resolve_path(p: str) -> Path:
    """A scenario path, or the name of a bundled scenario (with or without ``.json``)."""
    path = Path(p)
    if path.exists():
        return path
    for cand in (bundled_dir() / p, bundled_dir() / f"{p}.json"):
        if cand.exists():
            return cand
    return path


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pertqec", description="Perturbative error-correction analyses.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", required=True, help="scenario JSON file or bundled scenario name")
    ap.add_argument("--out", help="write the report here instead of stdout")
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument("--tol", action="append", metavar="NAME=VALUE", help="override a named tolerance")
    ap.add_argument("--quiet", action="store_true", help="suppress the summary on stderr")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)

    def say(msg):
        if not args.quiet:
            print(msg, file=sys.stderr)

    path = resolve_path(args.scenario)
    if args.command == "validate":
        diags = validate_scenario(path)
        for d in diags:
            print(d, file=sys.stderr)
        say(f"{path}: {'ok' if not diags else f'{len(diags)} problem(s)'}")
        return EXIT_OK if not diags else EXIT_INVALID

    sc, diags = load_scenario(path)
    try:
        overrides = _parse_tol(args.tol)
    except ValueError as exc:
        diags = diags + [str(exc)]
        overrides = {}
    if sc is not None:
        unknown = [k for k in overrides if k not in sc.tolerances]
        diags += [f"--tol {k}: unknown tolerance" for k in unknown]
        if args.seed is not None and args.seed < 0:
            diags.append("--seed: expected a non-negative integer")
    if sc is None or diags:
        for d in diags:
            print(d, file=sys.stderr)
        return EXIT_INVALID
    sc = sc.with_overrides(args.seed, overrides)
    if sc.noise().series.dim != sc.dim:
        print(f"noise: acts on dimension {sc.noise().series.dim}, system has {sc.dim}", file=sys.stderr)
        return EXIT_INVALID

    try:
        report = build_report(sc, args.command)
        text = dumps(report)
    except (StructuralZeroError, NotPSDError, ConvergenceError, SupportMismatchError,
            SeriesOrderError, NumericalCheckError, np.linalg.LinAlgError) as exc:
        print(f"numerical check failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for c in report["checks"]:
        say(f"{c['name']}: {'pass' if c['passed'] else 'FAIL'}")
    say(f"{sc.name} {args.command}: {'ok' if report['passed'] else 'numerical checks failed'}")
    return EXIT_OK if report["passed"] else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
