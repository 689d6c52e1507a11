"""Service operations and the FastAPI application.

The four operations (analyze, decouple, verify, poles) are plain functions
over the request/response models in :mod:`decoupler.schemas`; the HTTP layer
and the CLI are both thin clients of these.
"""

from __future__ import annotations

import time
from fractions import Fraction

from fastapi import FastAPI, HTTPException

from . import __version__
from .canonical import tree_transform
from .compensation import build_ede
from .exactalg import rat, rat_str
from .flowgraph import build_sfg, enumerate_frameworks
from .poles import PlacementResult, SharedStateWitness, place_decoupled
from .schemas import (
    AnalyzeReport,
    AnalyzeRequest,
    DecoupleReport,
    DecoupleRequest,
    DocumentError,
    FrameworkInfo,
    PolesReport,
    PolesRequest,
    VerifyReport,
    VerifyRequest,
    law_to_fields,
)
from .synthesis import SynthesisLimits, synthesize
from .system import (
    DiagonalWitness,
    IntegratorDiagonal,
    ValidationError,
    closed_loop_tf,
    decoupling_pair,
    diagonality_check,
    falb_wolovich,
    relative_orders,
    validate,
)
from .schemas import _dump_matrix  # shared matrix rendering


def analyze_op(req: AnalyzeRequest) -> AnalyzeReport:
    start = time.perf_counter()
    sys = req.system.to_system()
    validate(sys)
    d = relative_orders(sys)
    pair = decoupling_pair(sys, d)
    fw_decision = falb_wolovich(sys)
    sfg = build_sfg(sys)
    frameworks, truncated = enumerate_frameworks(sfg, req.max_frameworks)
    infos = []
    for fw in frameworks:
        ede = build_ede(sys, fw, d.d)
        infos.append(FrameworkInfo(
            assignment=[f"u{u}" for u in fw.assignment],
            orders=list(fw.orders),
            paths=[path.label() for path in fw.paths],
            ede=ede.render()))
    if fw_decision.passed:
        verdict = "decouplable by regular feedback"
    elif frameworks:
        verdict = "analysis complete"
    else:
        verdict = "no decoupling framework"
    return AnalyzeReport(
        system=sys.name,
        verdict=verdict,
        relative_orders=list(d.d),
        bstar=_dump_matrix(pair.bstar),
        astar=_dump_matrix(pair.astar),
        falb_wolovich={
            "mode": fw_decision.mode,
            "passed": fw_decision.passed,
            "rank": fw_decision.rank,
            "det": None if fw_decision.det is None else rat_str(fw_decision.det),
        },
        frameworks=infos,
        truncated=truncated,
        graph=sfg.dump() if req.dump_graph else None,
        timing_ms=(time.perf_counter() - start) * 1000.0,
    )


def decouple_op(req: DecoupleRequest) -> DecoupleReport:
    start = time.perf_counter()
    sys = req.system.to_system()
    limits = SynthesisLimits(req.limits.max_frameworks,
                             req.limits.max_strings,
                             req.limits.max_masters)
    report = synthesize(sys, limits, rat(req.pole))
    out = DecoupleReport(
        system=sys.name,
        verdict=report.decision,
        stats=report.stats,
        timing_ms=(time.perf_counter() - start) * 1000.0,
    )
    if report.decision == "decoupled":
        out.orders = list(report.orders)
        out.F, out.G = law_to_fields(report.law)
        if report.framework is not None:
            out.framework = FrameworkInfo(
                assignment=[f"u{u}" for u in report.framework.assignment],
                orders=list(report.framework.orders),
                paths=[path.label() for path in report.framework.paths])
        out.compensations = [pl.describe() for pl in report.plans]
        out.assigned_poles = [rat_str(p) for p in report.assigned_poles]
    elif report.witness is not None:
        out.witness = {"input": f"u{report.witness[0]}",
                       "order": report.witness[1],
                       "reason": "no integrator string available"}
    if req.trace:
        out.trace = report.branches
    return out


def verify_op(req: VerifyRequest) -> VerifyReport:
    start = time.perf_counter()
    sys = req.system.to_system()
    validate(sys)
    law = req.law.to_law(sys.m, sys.n, sys.p)
    t = closed_loop_tf(sys, law)
    res = diagonality_check(t, relaxed=req.relaxed)
    if isinstance(res, IntegratorDiagonal):
        verdict = "diagonal" if req.relaxed else "integrator_diagonal"
        return VerifyReport(system=sys.name, verdict=verdict,
                            orders=list(res.orders),
                            timing_ms=(time.perf_counter() - start) * 1000.0)
    assert isinstance(res, DiagonalWitness)
    return VerifyReport(system=sys.name, verdict="not_diagonal",
                        witness={"row": res.row, "col": res.col,
                                 "reason": res.reason},
                        timing_ms=(time.perf_counter() - start) * 1000.0)


def poles_op(req: PolesRequest) -> PolesReport:
    start = time.perf_counter()
    sys = req.system.to_system()
    validate(sys)
    law = req.law.to_law(sys.m, sys.n, sys.p)
    res = diagonality_check(closed_loop_tf(sys, law))
    if not isinstance(res, IntegratorDiagonal):
        raise DocumentError(
            "the supplied law does not integrator-decouple the system "
            f"(first offending entry ({res.row}, {res.col}))")
    a_cl = sys.a + sys.b * law.f
    b_cl = sys.b * law.g
    tree = tree_transform(a_cl, b_cl, sys.c, res.orders)
    spec = req.poles.to_lists() if req.poles is not None else None
    outcome = place_decoupled(tree, spec)
    if isinstance(outcome, SharedStateWitness):
        witness = {
            "state": None if outcome.state is None else f"x{outcome.state}",
            "inputs": [f"v{i}" for i in outcome.inputs],
            "reached_by": [f"v{i}" for i in outcome.reached_by],
        }
        return PolesReport(system=sys.name, verdict="impossible",
                           witness=witness, n_co=tree.n_co,
                           residual_states=list(tree.residual_original),
                           timing_ms=(time.perf_counter() - start) * 1000.0)
    assert isinstance(outcome, PlacementResult)
    # compose with the decoupling law: v = K (T x) + w
    k_orig = outcome.law.f * tree.t
    f_total = law.f + law.g * k_orig
    combined_law = type(law)(f_total, law.g)
    check = diagonality_check(closed_loop_tf(sys, combined_law), relaxed=True)
    if not isinstance(check, IntegratorDiagonal):
        raise AssertionError("combined placement law failed verification")
    return PolesReport(
        system=sys.name,
        verdict="placed",
        F=_dump_matrix(f_total),
        G=_dump_matrix(law.g),
        subsystems=[list(rows) for rows in outcome.subsystems],
        targets=[[rat_str(cc) for cc in tgt.coeffs] for tgt in outcome.targets],
        n_co=tree.n_co,
        residual_states=list(tree.residual_original),
        timing_ms=(time.perf_counter() - start) * 1000.0,
    )


app = FastAPI(title="decoupler", version=__version__,
              description="Row-by-row decoupling of LTI systems by static "
                          "state feedback, with exact rational arithmetic.")


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


def _guard(fn, req):
    try:
        return fn(req)
    except (DocumentError, ValidationError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


@app.post("/v1/analyze", response_model=AnalyzeReport,
          response_model_exclude_none=True)
def http_analyze(req: AnalyzeRequest) -> AnalyzeReport:
    return _guard(analyze_op, req)


@app.post("/v1/decouple", response_model=DecoupleReport,
          response_model_exclude_none=True)
def http_decouple(req: DecoupleRequest) -> DecoupleReport:
    return _guard(decouple_op, req)


@app.post("/v1/verify", response_model=VerifyReport,
          response_model_exclude_none=True)
def http_verify(req: VerifyRequest) -> VerifyReport:
    return _guard(verify_op, req)


@app.post("/v1/poles", response_model=PolesReport,
          response_model_exclude_none=True)
def http_poles(req: PolesRequest) -> PolesReport:
    return _guard(poles_op, req)
