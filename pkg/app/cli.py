"""Batch front door: ``python -m app <subcommand> MODEL [options]``.

Exit codes: 0 when the query was decided or computed, 2 for an Unknown
verdict or an exhausted budget, 1 for any error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence, TextIO

from pydantic import ValidationError

from app import __version__
from app.config import configure_logging, get_settings
from app.core import CheckerError
from app.schemas import ErrorReport, QueryKind, QueryReport, QuerySpec
from app.services.runner import run

_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNDECIDED = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="checker",
        description="Qualitative and approximate quantitative (repeated) reachability for decisive Markov chains.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", type=Path, help="model file (pvass, plcs or pntm format)")
    common.add_argument("--target", help='target override, e.g. "q s1 s2" or "up s1 x>=2"')
    common.add_argument("--auto-total", action="store_true", help="complete missing PNTM rows with stay-put self-loops")
    common.add_argument("--auto-selfloop", action="store_true", help="repair deadlocks with nop self-loops")
    common.add_argument("--json", action="store_true", help="emit the machine-readable report")
    common.add_argument("--with-certificate", action="store_true", help="attach a decisiveness certificate")
    common.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")

    sub.add_parser("validate", parents=[common], help="parse and validate a model")
    for name in ("qual-reach", "qual-repeat"):
        p = sub.add_parser(name, parents=[common], help=f"decide {name.split('-')[1]} with probability one or zero")
        p.add_argument("--side", choices=["one", "zero"], required=True)
    for name in ("approx-reach", "approx-repeat"):
        p = sub.add_parser(name, parents=[common], help="approximate the probability up to an additive eps")
        p.add_argument("--eps", required=True, help="precision as an exact rational, e.g. 1/100")
        p.add_argument("--budget", type=int, help=f"expansion budget (default {get_settings().default_budget})")
    sub.add_parser("certify", parents=[common], help="report a decisiveness certificate")
    p = sub.add_parser("oracle", parents=[common], help="exact probabilities on a bounded truncation")
    p.add_argument("--bound", type=int, help="largest counter value, channel length or tape length kept")
    p.add_argument("--state-limit", type=int, default=10_000)
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate of the reach probability")
    p.add_argument("--runs", type=int, default=10_000)
    p.add_argument("--horizon", type=int, default=1_000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def spec_from_args(args: argparse.Namespace) -> QuerySpec:
    source = args.model.read_text(encoding="utf-8")
    values = {
        "source": source,
        "path": str(args.model),
        "kind": QueryKind(args.command),
        "target": args.target,
        "auto_total": args.auto_total,
        "auto_selfloop": args.auto_selfloop,
        "with_certificate": args.with_certificate,
    }
    for name in ("side", "eps", "budget", "bound", "state_limit", "runs", "horizon", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            values[name] = value
    return QuerySpec(**values)


def render_text(report: QueryReport) -> str:
    lines = [f"{report.query.value}: {report.outcome.value}"]
    if report.path:
        lines.append(f"  model: {report.path} ({report.model.kind}, {report.model.control_states} control states)")
    if report.target:
        lines.append(f"  target: {report.target}")
    if report.verdict is not None:
        lines.append(f"  verdict: {report.verdict} (side {report.side.value if report.side else '?'})")
    if report.reason:
        lines.append(f"  reason: {report.reason}")
    if report.theta is not None:
        lines.append(f"  theta: {report.theta.exact} ~ {report.theta.decimal} (eps {report.eps})")
    elif report.lower is not None and report.upper is not None:
        lines.append(f"  bounds: [{report.lower.exact}, {report.upper.exact}]")
    if report.depth is not None:
        lines.append(f"  depth: {report.depth}, expansions: {report.expansions}")
    if report.certificate is not None:
        cert = report.certificate
        lines.append(f"  certificate: {cert.kind.value}")
        if cert.beta is not None:
            lines.append(f"    beta={cert.beta.exact} span={cert.span} alpha={cert.alpha.exact if cert.alpha else '?'}")
        if cert.citation:
            lines.append(f"    {cert.citation}")
    if report.oracle is not None:
        o = report.oracle
        lines.append(f"  truncation: {o.states} states{' with overflow' if o.overflow else ''}")
        lines.append(f"  reach:  [{o.reach.lower.exact}, {o.reach.upper.exact}]")
        lines.append(f"  repeat: [{o.repeat.lower.exact}, {o.repeat.upper.exact}]")
    if report.simulation is not None:
        s = report.simulation
        lines.append(
            f"  estimate: {s.estimate:.6f} in [{s.low:.6f}, {s.high:.6f}] "
            f"({s.successes}/{s.runs} runs, {s.generator} seed {s.seed})"
        )
    lines.append(f"  wall time: {report.timing.wall_seconds:.3f}s")
    return "\n".join(lines)


def _fail(error: ErrorReport, as_json: bool, out: TextIO, err: TextIO) -> int:
    if as_json:
        print(error.model_dump_json(indent=2, exclude_none=True), file=out)
    else:
        where = f" (line {error.line}, column {error.column})" if error.line else ""
        print(f"error [{error.error}]{where}: {error.message}", file=err)
    return EXIT_ERROR


def main(
    argv: Optional[Sequence[str]] = None,
    *,
    out: Optional[TextIO] = None,
    err: Optional[TextIO] = None,
) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    configure_logging("DEBUG" if args.verbose else None)

    try:
        spec = spec_from_args(args)
        report = run(spec)
    except CheckerError as exc:
        _LOGGER.debug("Query failed", exc_info=True)
        return _fail(
            ErrorReport(
                error=exc.code,
                message=getattr(exc, "message", str(exc)),
                line=getattr(exc, "line", None) or None,
                column=getattr(exc, "column", None) or None,
            ),
            args.json,
            out,
            err,
        )
    except ValidationError as exc:
        message = "; ".join(str(e.get("msg", "")).removeprefix("Value error, ") for e in exc.errors())
        return _fail(ErrorReport(error="query_error", message=message), args.json, out, err)
    except OSError as exc:
        return _fail(ErrorReport(error="io_error", message=str(exc)), args.json, out, err)

    if args.json:
        print(report.model_dump_json(indent=2, exclude_none=True), file=out)
    else:
        print(render_text(report), file=out)
    return report.exit_code


__all__ = ["EXIT_ERROR", "EXIT_OK", "EXIT_UNDECIDED", "build_parser", "main", "render_text", "spec_from_args"]
