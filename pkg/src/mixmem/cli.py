"""``mixmem`` command line.

Exit codes: 0 success, 1 a verification found a failure, 2 usage or
configuration error.  Data goes to stdout (or ``--out``), diagnostics to
stderr.  ``--config`` reads a flat JSON object keyed like the long flags of
the chosen subcommand; explicit flags win over it.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from . import experiments as ex
from .mixtures import Composition, allowable_compositions, gamma_vector
from .rademacher import ResourceError, build_from_tree, build_matrix
from .solver import (
    ActivationSpec,
    SignedLog,
    count_mixed_memories,
    gamma_admissible,
    satisfies_system,
    separation_constant,
    verify_fixed_point_equation,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # keep argparse's exit code, route through UsageError
        raise UsageError(f"{self.prog}: {message}")


def jsonable(obj: Any) -> Any:
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, SignedLog):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# --- argument parsing -------------------------------------------------------------

GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "out": None, "format": None, "config": None, "max_n": None}


def _common(suppress: bool) -> argparse.ArgumentParser:
    # Global flags are accepted before and after the subcommand.  The copy on
    # the subparsers must not carry defaults, or it would overwrite a value
    # given before the subcommand.
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")

    def d(key: str):
        return argparse.SUPPRESS if suppress else GLOBAL_DEFAULTS[key]

    g.add_argument("--seed", type=int, default=d("seed"))
    g.add_argument("--threads", type=int, default=d("threads"))
    g.add_argument("--out", default=d("out"), help="write data here instead of stdout")
    g.add_argument("--format", choices=("json", "csv", "text"), default=d("format"))
    g.add_argument("--config", default=d("config"), help="flat JSON file of flag values")
    g.add_argument("--max-n", type=int, default=d("max_n"), help="Rademacher size cap (also MIXMEM_MAX_N)")
    return p


def _model_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--model", required=required, default=None, help="classical | dense:<p> | modern:<beta>[,<N>]")


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    parser = _Parser(prog="mixmem", description="Mixed memories of Hopfield-type networks.", parents=[_common(False)])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rademacher", parents=[common], help="print the Rademacher matrix")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--tree", default=None, help="build from a composition, e.g. 2+3")

    p = sub.add_parser("mixtures", parents=[common], help="allowable compositions and gamma vectors")
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("verify", parents=[common], help="check admissible mixtures exactly")
    p.add_argument("--n", type=int, default=None)
    _model_args(p)
    p.add_argument("--N", type=int, default=None, help="network size for the modern model")
    p.add_argument("--all", action="store_true", help="also report rejected and non-canonical compositions")
    p.add_argument("--coeffs", default=None, help="explicit coefficients, e.g. 3/8,3/8,1/4,1/4,1/2")

    p = sub.add_parser("simulate", parents=[common], help="one mixed memory on random patterns")
    _model_args(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--mixture", default="pattern")
    p.add_argument("--map", choices=("gradient", "hk"), default="gradient")
    p.add_argument("--tie-policy", choices=("keep", "plus", "random"), default="keep")

    p = sub.add_parser("sweep", parents=[common], help="fixed fraction over a grid of M")
    _model_args(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--mixture", default="pattern")
    p.add_argument("--grid", required=True, help="ascending comma-separated M values")
    p.add_argument("--map", choices=("gradient", "hk"), default="gradient")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--tie-policy", choices=("keep", "plus", "random"), default="keep")

    p = sub.add_parser("capacity", parents=[common], help="theoretical capacity, optionally tested")
    p.add_argument("--theorem", choices=ex.THEOREMS, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--mixture", default=None)
    p.add_argument("--scalar", default=None, help="C, C_p or beta_c given directly")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--p", type=int, default=3)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--C", type=float, default=3.0, dest="C_const", help="constant of the n=1 modern bound")
    p.add_argument("--trials", type=int, default=0, help="run a stability test at M_max")
    p.add_argument("--map", choices=("gradient", "hk"), default="gradient")
    p.add_argument("--max-M", type=int, default=100_000, help="skip the stability test above this M")

    p = sub.add_parser("energy-gap", parents=[common], help="pattern vs mixed-memory energies")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--mixture", default="3")
    p.add_argument("--trials", type=int, default=10)

    p = sub.add_parser("count", parents=[common], help="count mixed memories against the bounds")
    p.add_argument("--n", type=int, required=True)
    _model_args(p)
    p.add_argument("--M", type=int, required=True)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise UsageError("config file must hold a flat JSON object")
    return config


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config is None or command is None:
        return parser.parse_args(argv)
    config = _load_config(known.config)
    sub = _subparser(parser, command)
    allowed = {a.dest for a in sub._actions} - {"help", "config"}
    unknown = sorted(set(config) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    for action in sub._actions:
        if action.dest in config:
            action.required = False  # satisfied by the config file
    parser.set_defaults(**{k: v for k, v in config.items() if k in GLOBAL_DEFAULTS})
    sub.set_defaults(**{k: v for k, v in config.items() if k not in GLOBAL_DEFAULTS})
    return parser.parse_args(argv)


def effective_config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("config", "out", "format") and v is not None}


# --- output -----------------------------------------------------------------------

def _emit(text: str, args: argparse.Namespace) -> None:
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _as_json(payload: Any) -> str:
    return json.dumps(jsonable(payload), indent=2) + "\n"


def _as_csv(rows: list[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(jsonable(row))
    return buf.getvalue()


def _as_text(payload: dict) -> str:
    lines = []
    for key, value in jsonable(payload).items():
        if isinstance(value, (dict, list)):
            value = json.dumps(value)
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def _render(payload: dict, args: argparse.Namespace, rows: list[dict] | None = None,
            fields: Sequence[str] | None = None, default: str = "json") -> str:
    fmt = args.format or default
    if fmt == "csv":
        if rows is None:
            rows, fields = [_flatten(payload)], list(_flatten(payload))
        return _as_csv(rows, fields)
    if fmt == "text":
        return _as_text(payload)
    return _as_json(payload)


def _flatten(payload: dict) -> dict:
    return {k: (json.dumps(jsonable(v)) if isinstance(v, (dict, list, tuple)) else v)
            for k, v in payload.items() if k != "config"}


# --- helpers ----------------------------------------------------------------------

def _parse_model(text: str, N: int | None = None) -> ActivationSpec:
    try:
        return ActivationSpec.parse(text, N)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad --model {text!r}: {exc}") from exc


def _parse_parts(text: str) -> tuple[int, ...]:
    sep = "+" if "+" in text else ","
    try:
        return tuple(int(x) for x in text.split(sep))
    except ValueError as exc:
        raise UsageError(f"bad composition {text!r}") from exc


def _parse_coeffs(text: str) -> list[Fraction]:
    try:
        return [Fraction(x.strip()) for x in text.split(",")]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad coefficient list {text!r}") from exc


def _separation_payload(coeffs: Sequence[Fraction], F: ActivationSpec) -> dict:
    rep = separation_constant(coeffs, F)
    return {
        "exact_min": rep.exact_min,
        "block_lower_bound": rep.block_lower_bound,
        "bound_holds": None if rep.block_lower_bound is None else _ge(rep.exact_min, rep.block_lower_bound),
        "zero_hit": rep.zero_hit,
        "zero_columns": [list(c) for c in rep.zero_columns],
    }


def _ge(a: Any, b: Any) -> bool:
    if isinstance(a, SignedLog):
        return a.key() >= b.key()
    return a >= b


# --- subcommands ------------------------------------------------------------------

def cmd_rademacher(args: argparse.Namespace) -> tuple[str, int]:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.tree:
        mat = build_from_tree(args.n, _parse_parts(args.tree))
    else:
        mat = build_matrix(args.n)
    payload = {"n": args.n, "rows": mat.to_array().tolist(), "config": effective_config(args)}
    fmt = args.format or "text"
    if fmt == "text":
        return mat.to_text() + "\n", EXIT_OK
    if fmt == "csv":
        fields = [f"c{j}" for j in range(1, mat.d + 1)]
        rows = [dict(zip(fields, r)) for r in payload["rows"]]
        return _as_csv(rows, fields), EXIT_OK
    return _as_json(payload), EXIT_OK


def cmd_mixtures(args: argparse.Namespace) -> tuple[str, int]:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    entries = []
    for comp in allowable_compositions(args.n):
        g = gamma_vector(comp)
        entries.append({
            "composition": str(comp),
            "parts": list(comp.parts),
            "gamma": list(g.values),
            "coefficients": g.coefficients(),
        })
    payload = {"n": args.n, "compositions": entries, "config": effective_config(args)}
    rows = [{"composition": e["composition"], "gamma": " ".join(map(str, e["gamma"]))} for e in entries]
    return _render(payload, args, rows, ["composition", "gamma"]), EXIT_OK


def _verify_single(coeffs: list[Fraction], F: ActivationSpec, args: argparse.Namespace) -> tuple[str, int]:
    residual = verify_fixed_point_equation(coeffs, F)
    ok = all(r == 0 for r in residual)
    payload = {
        "model": F.label(),
        "coefficients": coeffs,
        "residual": residual,
        "residual_zero": ok,
        "separation": _separation_payload(coeffs, F),
        "config": effective_config(args),
    }
    return _render(payload, args), EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args: argparse.Namespace) -> tuple[str, int]:
    F = _parse_model(args.model, args.N)
    if F.variant == "modern" and F.N is None:
        raise UsageError("modern model needs N: use modern:<beta>,<N> or --N")
    if args.coeffs:
        coeffs = _parse_coeffs(args.coeffs)
        if args.n is not None and args.n != len(coeffs):
            raise UsageError(f"--n {args.n} does not match {len(coeffs)} coefficients")
        return _verify_single(coeffs, F, args)
    if args.n is None:
        raise UsageError("verify needs --n or --coeffs")
    if args.n < 1 or args.n % 2 == 0:
        raise UsageError("--n must be a positive odd integer")
    admissible = {g.source.parts for g in gamma_admissible(args.n, F)}
    entries = []
    failed = False
    seen: set[tuple[int, ...]] = set()
    for comp in allowable_compositions(args.n):
        canon = comp.canonical().parts
        is_adm = comp.parts in admissible
        if not args.all and (not is_adm or canon in seen):
            continue
        g = gamma_vector(comp)
        verdict = satisfies_system(g, F)
        entry: dict = {
            "composition": str(comp),
            "canonical": str(Composition(canon)),
            "admissible": verdict.satisfied,
            "gamma": list(g.values),
            "coefficients": g.coefficients(),
            "margins": list(verdict.margins),
        }
        if is_adm:
            residual = verify_fixed_point_equation(g.coefficients(), F)
            entry["residual_zero"] = all(r == 0 for r in residual)
            entry["separation"] = _separation_payload(g.coefficients(), F)
            failed |= not entry["residual_zero"]
        seen.add(canon)
        entries.append(entry)
    canon_adm = sorted({Composition(p).canonical().parts for p in admissible}, reverse=True)
    payload = {
        "n": args.n,
        "model": F.label(),
        "admissible": [str(Composition(p)) for p in canon_adm],
        "nontrivial_admissible": [str(Composition(p)) for p in canon_adm if len(p) > 1],
        "entries": entries,
        "config": effective_config(args),
    }
    rows = [{
        "composition": e["composition"],
        "admissible": e["admissible"],
        "residual_zero": e.get("residual_zero"),
        "exact_min": e.get("separation", {}).get("exact_min"),
        "zero_hit": e.get("separation", {}).get("zero_hit"),
    } for e in entries]
    fields = ["composition", "admissible", "residual_zero", "exact_min", "zero_hit"]
    return _render(payload, args, rows, fields), EXIT_FAIL if failed else EXIT_OK


def _mixture(text: str, M: int):
    try:
        return ex.parse_mixture(text, M)
    except ValueError as exc:
        raise UsageError(f"bad --mixture {text!r}: {exc}") from exc


def cmd_simulate(args: argparse.Namespace) -> tuple[str, int]:
    F = _parse_model(args.model, args.N)
    if F.variant == "modern":
        F = F.with_N(args.N)
    m = _mixture(args.mixture, args.M)
    if max(m.support()) > args.M:
        raise UsageError(f"mixture support exceeds M={args.M}")
    rec = ex._one_trial(F, args.N, args.M, m, args.map, args.seed, args.tie_policy)
    payload = {
        "fixed": rec.fixed,
        "violations": rec.violations,
        "tie_sites": rec.tie_sites,
        "overlaps": rec.overlaps,
        "max_abs_overlap_dev": rec.overlap_dev,
        "max_abs_nonsupport_overlap": rec.nonsupport_overlap,
        "energy": rec.energy,
        "partition_within": rec.partition_within,
        "reduced_disagreements": rec.reduced_disagreements,
        "config": effective_config(args),
    }
    return _render(payload, args), EXIT_OK


def _parse_grid(text: str) -> list[int]:
    try:
        grid = [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --grid {text!r}") from exc
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise UsageError("--grid must be strictly ascending")
    return grid


def cmd_sweep(args: argparse.Namespace) -> tuple[str, int]:
    F = _parse_model(args.model, args.N)
    grid = _parse_grid(args.grid)
    m = _mixture(args.mixture, grid[0])
    results = []
    for M in grid:
        r = ex.stability_experiment(F, args.N, M, m, args.map, args.trials, args.seed, args.threads, args.tie_policy)
        print(f"M={M} fixed_fraction={r.fixed_fraction:.4f}", file=sys.stderr)
        results.append(r)
    payload = {"points": [r.to_row() for r in results], "config": effective_config(args)}
    return _render(payload, args, [r.to_row() for r in results], ex.CSV_FIELDS), EXIT_OK


def cmd_capacity(args: argparse.Namespace) -> tuple[str, int]:
    m = None
    n = args.n
    if args.mixture:
        m = _mixture(args.mixture, 10**9)
        n = m.n if n is None else n
    scalar = Fraction(args.scalar) if args.scalar is not None else None
    q = ex.CapacityQuery(args.theorem, args.N, n, m, scalar, args.eps, args.p, args.beta, args.C_const)
    M_max = ex.theoretical_capacity(q)
    payload: dict = {"theorem": args.theorem, "N": args.N, "n": q.support_size, "M_max": M_max}
    rows = None
    if args.trials > 0:
        M = M_max
        if M < q.support_size or M > args.max_M:
            raise UsageError(f"M_max={M} outside the testable range [{q.support_size}, {args.max_M}]")
        model = {
            "classical": ActivationSpec.classical(),
            "dense": ActivationSpec.dense(args.p),
            "modern": ActivationSpec.modern(args.beta),
        }[args.theorem.split("_")[0]]
        mix = m if m is not None else ex.parse_mixture("pattern", M)
        r = ex.stability_experiment(model, args.N, M, mix, args.map, args.trials, args.seed, args.threads)
        payload["stability"] = r.to_row()
        rows = [r.to_row()]
    payload["config"] = effective_config(args)
    if rows is None:
        return _render(payload, args), EXIT_OK
    return _render(payload, args, rows, ex.CSV_FIELDS), EXIT_OK


def cmd_energy_gap(args: argparse.Namespace) -> tuple[str, int]:
    m = _mixture(args.mixture, args.M)
    r = ex.energy_gap_experiment(args.N, args.M, m, args.trials, args.seed)
    d = r.to_dict()
    payload = {k: d[k] for k in (
        "N", "M", "composition", "trials", "seed", "mean_pattern_energy", "mean_mixture_energy",
        "gap", "ordered_fraction", "upper_bound", "within_bounds")}
    payload["config"] = effective_config(args)
    return _render(payload, args), EXIT_OK


def cmd_count(args: argparse.Namespace) -> tuple[str, int]:
    F = _parse_model(args.model)
    if F.variant == "modern":
        raise UsageError("counting is defined here for classical and dense models")
    rep = count_mixed_memories(args.n, F, args.M)
    payload = {
        "n": rep.n,
        "M": rep.M,
        "model": F.label(),
        "exact_count": rep.exact_count,
        "lower_bound": rep.lower_bound,
        "upper_bound": rep.upper_bound,
        "within_bounds": rep.within_bounds,
        "A": rep.A,
        "sign_factor": rep.sign_factor,
        "distinct_vectors": [str(Composition(p)) for p in rep.distinct_vectors],
        "alt_sign_factor": rep.alt_sign_factor,
        "alt_lower_bound": rep.alt_lower_bound,
        "alt_upper_bound": rep.alt_upper_bound,
        "within_alt_bounds": rep.within_alt_bounds,
        "config": effective_config(args),
    }
    return _render(payload, args), EXIT_OK if rep.within_bounds else EXIT_FAIL


COMMANDS: dict[str, Callable[[argparse.Namespace], tuple[str, int]]] = {
    "rademacher": cmd_rademacher,
    "mixtures": cmd_mixtures,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "capacity": cmd_capacity,
    "energy-gap": cmd_energy_gap,
    "count": cmd_count,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    sys.set_int_max_str_digits(0)
    try:
        args = parse_args(argv)
        if args.max_n is not None:
            if args.max_n < 1:
                raise UsageError("--max-n must be positive")
            os.environ["MIXMEM_MAX_N"] = str(args.max_n)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        text, code = COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ResourceError, TypeError) as exc:
        print(f"mixmem: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(text, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
