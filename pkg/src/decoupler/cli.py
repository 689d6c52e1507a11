"""Command-line client.

Thin front end over the service operations: subcommands load JSON documents,
build the request models, execute them in-process (or against a running
service with ``--server``), render the report, and map verdicts to exit
codes:

    0  positive verdict (decoupled / diagonal / placed / analysis done)
    1  negative verdict (not decouplable / not diagonal / impossible)
    2  inconclusive (search limits hit)
    3  input or validation error
    4  internal error
"""

from __future__ import annotations

import argparse
import json
import sys as _sys

from pydantic import ValidationError as PydanticValidationError

from .schemas import (
    AnalyzeReport,
    AnalyzeRequest,
    DecoupleReport,
    DecoupleRequest,
    DocumentError,
    LawDocument,
    PolesReport,
    PolesRequest,
    PoleSpecDocument,
    SearchLimits,
    SystemDocument,
    VerifyReport,
    VerifyRequest,
)
from .system import ValidationError

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INCONCLUSIVE = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 4

_REPORT_TYPES = {
    "analyze": AnalyzeReport,
    "decouple": DecoupleReport,
    "verify": VerifyReport,
    "poles": PolesReport,
}


def _load_json(path: str, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DocumentError(f"{what} file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{what} file {path} is not valid JSON: {exc}")


def _load_system(path: str) -> SystemDocument:
    try:
        return SystemDocument.model_validate(_load_json(path, "system"))
    except PydanticValidationError as exc:
        raise DocumentError(f"system document {path}: {exc.errors()[0]['msg']}")


def _load_law(path: str) -> LawDocument:
    try:
        return LawDocument.model_validate(_load_json(path, "law"))
    except PydanticValidationError as exc:
        raise DocumentError(f"law document {path}: {exc.errors()[0]['msg']}")


def _run(command: str, request, server: str | None):
    if server is None:
        from . import service
        op = {"analyze": service.analyze_op, "decouple": service.decouple_op,
              "verify": service.verify_op, "poles": service.poles_op}[command]
        return op(request)
    import httpx
    url = server.rstrip("/") + f"/v1/{command}"
    resp = httpx.post(url, json=request.model_dump(by_alias=True),
                      timeout=600.0)
    if resp.status_code != 200:
        detail = resp.json().get("detail", resp.text) \
            if resp.headers.get("content-type", "").startswith("application/json") \
            else resp.text
        raise DocumentError(f"server rejected the request: {detail}")
    return _REPORT_TYPES[command].model_validate(resp.json())


def _emit(report, as_json: bool, renderer) -> None:
    if as_json:
        print(json.dumps(report.model_dump(by_alias=True, exclude_none=True),
                         indent=2))
    else:
        renderer(report)


def _matrix_lines(name: str, rows: list[list[str]]) -> list[str]:
    out = [f"{name} ="]
    for row in rows:
        out.append("    [" + "  ".join(f"{e:>6}" for e in row) + "]")
    return out


def _render_analyze(rep: AnalyzeReport) -> None:
    print(f"system: {rep.system or '(unnamed)'}")
    print(f"verdict: {rep.verdict}")
    print(f"relative orders: {tuple(rep.relative_orders)}")
    fw = rep.falb_wolovich
    det = f", det={fw['det']}" if fw.get("det") is not None else ""
    print(f"B* rank test ({fw['mode']}): "
          f"{'pass' if fw['passed'] else 'fail'} (rank {fw['rank']}{det})")
    for line in _matrix_lines("B*", rep.bstar):
        print(line)
    for line in _matrix_lines("A*", rep.astar):
        print(line)
    print(f"frameworks: {len(rep.frameworks)}"
          + (" (truncated)" if rep.truncated else ""))
    for k, info in enumerate(rep.frameworks, 1):
        print(f"  [{k}] inputs {info.assignment} orders {tuple(info.orders)}")
        for path in info.paths:
            print(f"      {path}")
        nonzero = [row for row in info.ede if row["entries"]]
        if nonzero:
            print("      compensation matrix:")
            for row in nonzero:
                cells = ", ".join(f"{col}: {p}"
                                  for col, p in row["entries"].items())
                print(f"        {row['row']}: {cells}")
    if rep.graph:
        print("graph:")
        for line in rep.graph.splitlines():
            print("  " + line)


def _render_decouple(rep: DecoupleReport) -> None:
    print(f"system: {rep.system or '(unnamed)'}")
    print(f"verdict: {rep.verdict}")
    if rep.orders:
        print(f"verified closed-loop orders: {tuple(rep.orders)}")
    if rep.framework:
        print(f"framework: inputs {rep.framework.assignment} "
              f"orders {tuple(rep.framework.orders)}")
    for comp in rep.compensations:
        print(f"compensation: {comp}")
    if rep.assigned_poles:
        print(f"poles assigned to the unreachable part: {rep.assigned_poles}")
    if rep.F:
        for line in _matrix_lines("F", rep.F):
            print(line)
        for line in _matrix_lines("G", rep.G):
            print(line)
    if rep.witness:
        print(f"witness: input {rep.witness['input']} needs an order-"
              f"{rep.witness['order']} integrator string; none available")
    if rep.stats:
        print(f"search: {rep.stats}")
    if rep.trace is not None:
        print(f"trace: {len(rep.trace)} branch(es)")
        for k, branch in enumerate(rep.trace, 1):
            sel = ", ".join(s["string"] for s in branch.get("selection", [])) \
                or "(no strings)"
            print(f"  [{k}] {sel} -> {branch.get('outcome', '?')}")


def _render_verify(rep: VerifyReport) -> None:
    print(f"system: {rep.system or '(unnamed)'}")
    print(f"verdict: {rep.verdict}")
    if rep.orders:
        print(f"diagonal orders: {tuple(rep.orders)}")
    if rep.witness:
        print(f"witness: entry ({rep.witness['row']}, {rep.witness['col']}): "
              f"{rep.witness['reason']}")


def _render_poles(rep: PolesReport) -> None:
    print(f"system: {rep.system or '(unnamed)'}")
    print(f"verdict: {rep.verdict}")
    if rep.n_co is not None:
        print(f"controllable-observable dimension: {rep.n_co}; "
              f"residual states: {rep.residual_states}")
    if rep.witness:
        print(f"witness: shared state {rep.witness['state']} in the "
              f"subsystems of {', '.join(rep.witness['inputs'])} "
              f"(reached by {', '.join(rep.witness['reached_by'])})")
    if rep.targets:
        print("per-channel characteristic targets (ascending coefficients):")
        for k, tgt in enumerate(rep.targets, 1):
            print(f"  v{k}: {tgt}")
    if rep.F:
        for line in _matrix_lines("F", rep.F):
            print(line)
        for line in _matrix_lines("G", rep.G):
            print(line)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decoupler",
        description="Row-by-row decoupling of LTI systems by static state "
                    "feedback (exact arithmetic).")
    parser.add_argument("--server", metavar="URL",
                        help="delegate to a running service instead of "
                             "computing in-process")
    parser.add_argument("--json", action="store_true",
                        help="emit the machine-readable report")
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="relative orders, rank test, "
                                          "frameworks, compensation matrix")
    p_an.add_argument("system")
    p_an.add_argument("--max-frameworks", type=int, default=None)
    p_an.add_argument("--dump-graph", action="store_true")

    p_de = sub.add_parser("decouple", help="decide decouplability and "
                                           "synthesize a verified law")
    p_de.add_argument("system")
    p_de.add_argument("--max-frameworks", type=int, default=None)
    p_de.add_argument("--max-strings", type=int, default=None)
    p_de.add_argument("--max-masters", type=int, default=None)
    p_de.add_argument("--trace", action="store_true",
                      help="include the full branch-by-branch trace")
    p_de.add_argument("--pole", default="-1",
                      help="pole for the self-compensated unreachable part")
    p_de.add_argument("--jobs", type=int, default=1,
                      help="accepted for compatibility; search is sequential")

    p_ve = sub.add_parser("verify", help="check a law for exact diagonality")
    p_ve.add_argument("system")
    p_ve.add_argument("law")
    p_ve.add_argument("--relaxed-diagonal", action="store_true",
                      help="accept any diagonal (pole-assigned) loop")

    p_po = sub.add_parser("poles", help="pole placement preserving the "
                                        "decoupled state")
    p_po.add_argument("system")
    p_po.add_argument("law")
    p_po.add_argument("--poles", default=None,
                      help="pole specification file (default: all -1)")

    p_sv = sub.add_parser("serve", help="run the HTTP service")
    p_sv.add_argument("--host", default="127.0.0.1")
    p_sv.add_argument("--port", type=int, default=8000)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            import uvicorn
            uvicorn.run("decoupler.service:app", host=args.host,
                        port=args.port)
            return EXIT_OK
        if args.command == "analyze":
            req = AnalyzeRequest(system=_load_system(args.system),
                                 max_frameworks=args.max_frameworks,
                                 dump_graph=args.dump_graph)
            rep = _run("analyze", req, args.server)
            _emit(rep, args.json, _render_analyze)
            return EXIT_OK
        if args.command == "decouple":
            req = DecoupleRequest(
                system=_load_system(args.system),
                limits=SearchLimits(max_frameworks=args.max_frameworks,
                                    max_strings=args.max_strings,
                                    max_masters=args.max_masters),
                trace=args.trace,
                pole=args.pole,
                jobs=args.jobs)
            rep = _run("decouple", req, args.server)
            _emit(rep, args.json, _render_decouple)
            return {"decoupled": EXIT_OK,
                    "not_decouplable": EXIT_NEGATIVE,
                    "inconclusive": EXIT_INCONCLUSIVE}[rep.verdict]
        if args.command == "verify":
            req = VerifyRequest(system=_load_system(args.system),
                                law=_load_law(args.law),
                                relaxed=args.relaxed_diagonal)
            rep = _run("verify", req, args.server)
            _emit(rep, args.json, _render_verify)
            return EXIT_OK if rep.verdict in ("integrator_diagonal",
                                              "diagonal") else EXIT_NEGATIVE
        if args.command == "poles":
            poles_doc = None
            if args.poles is not None:
                try:
                    poles_doc = PoleSpecDocument.model_validate(
                        _load_json(args.poles, "pole spec"))
                except PydanticValidationError as exc:
                    raise DocumentError(
                        f"pole spec {args.poles}: {exc.errors()[0]['msg']}")
            req = PolesRequest(system=_load_system(args.system),
                               law=_load_law(args.law), poles=poles_doc)
            rep = _run("poles", req, args.server)
            _emit(rep, args.json, _render_poles)
            return EXIT_OK if rep.verdict == "placed" else EXIT_NEGATIVE
        raise AssertionError(f"unhandled command {args.command}")
    except (DocumentError, ValidationError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=_sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
