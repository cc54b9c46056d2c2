"""``helm-pf`` command line.

Exit codes: 0 Feasible / converged / data written, 2 Infeasible,
3 Inconclusive or Newton non-convergence, 1 bad input or usage.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .helm import compute_series
from .netmodel import BusKind, Network, NetworkError, load_network, validate
from .nr import NRConfig, nr_solve
from .numerics import DEFAULT_PRECISION, NumericsError, working_precision
from .pade import diagonal_degree, pade_from_series, zero_pole, zero_pole_csv
from .solver import (
    FEASIBLE,
    INFEASIBLE,
    SolveConfig,
    SweepParam,
    _growth_profile,
    normalize_bus,
    pole_precision,
    residual,
    solve,
    sweep,
    sweep_csv,
)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_INCONCLUSIVE = 0, 1, 2, 3
PRECISION_ENV = "HELM_PF_PRECISION"


class UsageError(Exception):
    pass


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Append defaults only where the help text does not already describe one."""

    def _get_help_string(self, action):
        text = action.help or ""
        if "default" in text or action.default in (None, [], False):
            return text
        return super()._get_help_string(action)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="helm-pf",
        description="Holomorphic-embedding power flow with PV buses, Padé continuation "
                    "and a Newton-Raphson baseline.",
        formatter_class=_HelpFormatter,
    )
    p.add_argument("command", choices=["solve", "nr", "sweep", "series", "zeropole"])
    p.add_argument("network", help="network JSON file")
    p.add_argument("--order", type=int, default=200, help="series order N")
    p.add_argument("--precision", type=int, default=None,
                   help=f"working precision in bits (default: ${PRECISION_ENV}, else automatic "
                        f"for solve/sweep/zeropole and {DEFAULT_PRECISION} for series)")
    p.add_argument("--degree", type=int, default=None,
                   help="diagonal Padé degree M (default: largest usable)")
    p.add_argument("--bus", default=None, help="bus for zeropole (default: all non-slack buses)")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="PATH=VALUE",
                   help="override a bus field, e.g. bus6.p_gen=0.20 (repeatable)")
    p.add_argument("--sweep", default=None, metavar="BUS.FIELD:FROM:TO:STEP",
                   help="sweep grid, e.g. bus6.p_gen:0:1.2:0.01")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    p.add_argument("--eps-sol", type=float, default=1e-8, help="Padé ladder tolerance")
    p.add_argument("--eps-res", type=float, default=1e-8, help="power residual tolerance")
    p.add_argument("--delta", type=float, default=0.05, help="pole window around [0, 1]")
    p.add_argument("--timing", action="store_true", help="include wall time in JSON reports")
    p.add_argument("--out", default=None, help="output file (default: standard output)")
    p.add_argument("--format", choices=["json", "csv"], default=None,
                   help="json for solve/nr, csv for sweep/series/zeropole")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


# ------------------------------------------------------------------ output


def _jnum(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps_json(obj, indent: int = 2, level: int = 0) -> str:
    """JSON with every float at 17 significant digits; NaN/inf become null."""
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, int, float)):
        return _jnum(obj)
    if isinstance(obj, complex):
        return dumps_json([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_json(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) or v is None for v in obj):
            return "[" + ", ".join(dumps_json(v) for v in obj) + "]"
        items = [pad + dumps_json(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_output(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ------------------------------------------------------------------ inputs


def parse_set(text: str) -> tuple[str, str, object]:
    """``bus6.p_gen=0.20`` -> ("6", "p_gen", 0.2); complex fields take re,im."""
    if "=" not in text:
        raise UsageError(f"--set expects PATH=VALUE, got {text!r}")
    path, raw = text.split("=", 1)
    if "." not in path:
        raise UsageError(f"--set path must be BUS.FIELD, got {path!r}")
    bus, fld = path.rsplit(".", 1)
    raw = raw.strip().strip("[]()")
    try:
        parts = [float(x) for x in raw.split(",")]
    except ValueError:
        raise UsageError(f"--set value must be numeric, got {raw!r}") from None
    if len(parts) == 1:
        value: object = parts[0]
    elif len(parts) == 2:
        value = parts
    else:
        raise UsageError(f"--set value must be a number or re,im pair, got {raw!r}")
    return normalize_bus(bus.strip()), fld.strip(), value


def _precision(args) -> int | None:
    if args.precision is not None:
        return args.precision
    env = os.environ.get(PRECISION_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{PRECISION_ENV} must be an integer, got {env!r}") from None
    return None


def _network(args) -> Network:
    net = load_network(args.network)
    for text in args.sets:
        bus, fld, value = parse_set(text)
        net = net.with_value(bus, fld, value)
    problems = validate(net)
    if problems:
        raise NetworkError("; ".join(problems))
    return net


def _config(args) -> SolveConfig:
    try:
        return SolveConfig(max_order=args.order, precision=_precision(args), eps_sol=args.eps_sol,
                           eps_res=args.eps_res, delta=args.delta, degree=args.degree)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------- commands


def cmd_solve(args, net) -> int:
    rep = solve(net, _config(args))
    if (args.format or "json") == "csv":
        rows = ["bus,vmag,re,im"]
        for bid, v in (rep.voltages or {}).items():
            rows.append(f"{bid},{_jnum(abs(v))},{_jnum(v.real)},{_jnum(v.imag)}")
        write_output("\n".join(rows) + "\n", args.out)
    else:
        write_output(dumps_json(rep.to_dict(include_timing=args.timing)) + "\n", args.out)
    if rep.verdict == FEASIBLE:
        return EXIT_OK
    return EXIT_INFEASIBLE if rep.verdict == INFEASIBLE else EXIT_INCONCLUSIVE


def cmd_nr(args, net) -> int:
    out = nr_solve(net, "flat", NRConfig())
    v = {b.id: complex(z) for b, z in zip(net.buses, out.voltages)}
    doc = {
        "method": "newton-raphson",
        "converged": out.converged,
        "reason": out.reason,
        "iterations": out.iterations,
        "mismatch": out.mismatch,
        "history": list(out.state.history),
        "voltages": {k: [z.real, z.imag] for k, z in v.items()},
        "vmag": {k: abs(z) for k, z in v.items()},
    }
    if out.converged:
        res = residual(net, v)
        doc["max_residual"] = res.max_abs
        doc["slack_power"] = [res.slack_power.real, res.slack_power.imag]
        doc["q"] = {b: res.injections[b].imag for b in net.ids_of(BusKind.PV)}
    if (args.format or "json") == "csv":
        rows = ["bus,vmag,re,im"] + [f"{k},{_jnum(abs(z))},{_jnum(z.real)},{_jnum(z.imag)}"
                                     for k, z in v.items()]
        write_output("\n".join(rows) + "\n", args.out)
    else:
        write_output(dumps_json(doc) + "\n", args.out)
    return EXIT_OK if out.converged else EXIT_INCONCLUSIVE


def cmd_sweep(args, net) -> int:
    if not args.sweep:
        raise UsageError("sweep needs --sweep BUS.FIELD:FROM:TO:STEP")
    try:
        param = SweepParam.parse(args.sweep)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    result = sweep(net, param, _config(args), jobs=args.jobs)
    if (args.format or "csv") == "json":
        doc = {
            "param": {"bus": param.bus, "field": param.field, "from": param.start,
                      "to": param.stop, "step": param.step},
            "points": [{"kind": p.kind, "value": p.value, "error": p.error,
                        "report": p.report.to_dict(args.timing) if p.report else None}
                       for p in result.points],
            "boundaries": [{"lo": b.lo, "hi": b.hi, "estimate": b.estimate,
                            "feasible_side": b.feasible_side} for b in result.boundaries],
        }
        write_output(dumps_json(doc) + "\n", args.out)
    else:
        write_output(sweep_csv(result, net), args.out)
    return EXIT_OK


def cmd_series(args, net) -> int:
    p = _precision(args) or DEFAULT_PRECISION
    st = compute_series(net, args.order, p)
    if (args.format or "csv") == "json":
        doc = {"precision": p, "order": st.order, "series": {}}
        for name in ("c", "d", "cbar", "g", "gbar"):
            table = getattr(st, name)
            doc["series"][name] = {bid: [[complex(z).real, complex(z).imag] for z in cs]
                                   for bid, cs in table.items()}
        write_output(dumps_json(doc) + "\n", args.out)
    else:
        write_output(st.to_csv(), args.out)
    return EXIT_OK


def cmd_zeropole(args, net) -> int:
    m = args.degree if args.degree is not None else diagonal_degree(args.order + 1)
    order = max(args.order, 2 * m)
    p = _precision(args)
    if p is None:
        probe = compute_series(net, order, 128)
        p = max(128, pole_precision(_growth_profile(probe)[-1]))
    st = compute_series(net, order, p)
    buses = [normalize_bus(args.bus)] if args.bus else list(st.bus_ids)
    sets = []
    with working_precision(p):
        for bid in buses:
            if bid not in st.c:
                raise UsageError(f"bus {bid!r} has no voltage series (slack or unknown)")
            pa = pade_from_series(st.c[bid][: 2 * m + 1], m, m)
            sets.append(zero_pole(pa, bid))
    if (args.format or "csv") == "json":
        doc = [{"bus": zp.bus, "L": zp.L, "M": zp.M,
                "zeros": [[complex(z).real, complex(z).imag, f]
                          for z, f in zip(zp.zeros, zp.zero_froissart)],
                "poles": [[complex(z).real, complex(z).imag, f]
                          for z, f in zip(zp.poles, zp.pole_froissart)]} for zp in sets]
        write_output(dumps_json(doc) + "\n", args.out)
    else:
        write_output(zero_pole_csv(sets), args.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "nr": cmd_nr, "sweep": cmd_sweep, "series": cmd_series,
            "zeropole": cmd_zeropole}


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        net = _network(args)
        return COMMANDS[args.command](args, net)
    except UsageError as exc:
        print(f"helm-pf: usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (NetworkError, OSError) as exc:
        print(f"helm-pf: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (NumericsError, ArithmeticError) as exc:
        print(f"helm-pf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
