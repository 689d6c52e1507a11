"""Wire formats: request/response models for the service and the CLI.

Systems, feedback laws, and pole specifications travel as JSON documents
with rational entries written as integers or "num/den" strings; polynomials
are ascending coefficient arrays.  Every document carries a "schema" field,
currently "1".  Reports are deterministic except for the timing field.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .exactalg import Mat, rat, rat_str
from .system import FeedbackLaw, StateSpaceSystem, ValidationError

RatValue = int | str

SCHEMA_VERSION = "1"


class DocumentError(ValueError):
    """Malformed document: bad rational, wrong shape, or unknown schema."""


def _parse_matrix(rows: list[list[RatValue]], n_rows: int, n_cols: int,
                  name: str) -> Mat:
    if len(rows) != n_rows:
        raise DocumentError(f"{name} must have {n_rows} rows, got {len(rows)}")
    parsed = []
    for i, row in enumerate(rows):
        if len(row) != n_cols:
            raise DocumentError(
                f"{name} row {i + 1} must have {n_cols} entries, got {len(row)}")
        out = []
        for j, value in enumerate(row):
            try:
                out.append(rat(value))
            except (ValueError, TypeError, ZeroDivisionError) as exc:
                raise DocumentError(
                    f"{name}[{i + 1}][{j + 1}] is not a rational: {value!r}"
                ) from exc
        parsed.append(out)
    return Mat.from_rows(parsed) if parsed else Mat.zeros(0, n_cols)


def _dump_matrix(m: Mat) -> list[list[str]]:
    return [[rat_str(e) for e in m.row(i)] for i in range(m.rows)]


class SystemDocument(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(default=SCHEMA_VERSION, alias="schema")
    name: str = ""
    n: int = Field(ge=1)
    m: int = Field(ge=1)
    p: int = Field(ge=1)
    A: list[list[RatValue]]
    B: list[list[RatValue]]
    C: list[list[RatValue]]

    @field_validator("schema_version")
    @classmethod
    def _known_schema(cls, v: str) -> str:
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {v!r}")
        return v

    def to_system(self) -> StateSpaceSystem:
        a = _parse_matrix(self.A, self.n, self.n, "A")
        b = _parse_matrix(self.B, self.n, self.m, "B")
        c = _parse_matrix(self.C, self.p, self.n, "C")
        return StateSpaceSystem(a, b, c, self.name)

    @classmethod
    def from_system(cls, sys: StateSpaceSystem) -> "SystemDocument":
        return cls(name=sys.name, n=sys.n, m=sys.m, p=sys.p,
                   A=_dump_matrix(sys.a), B=_dump_matrix(sys.b),
                   C=_dump_matrix(sys.c))


class LawDocument(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(default=SCHEMA_VERSION, alias="schema")
    F: list[list[RatValue]]
    G: list[list[RatValue]]

    def to_law(self, m: int, n: int, p: int) -> FeedbackLaw:
        f = _parse_matrix(self.F, m, n, "F")
        g = _parse_matrix(self.G, m, p, "G")
        return FeedbackLaw(f, g)

    @classmethod
    def from_law(cls, law: FeedbackLaw) -> "LawDocument":
        return cls(F=_dump_matrix(law.f), G=_dump_matrix(law.g))


class PoleSpecDocument(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(default=SCHEMA_VERSION, alias="schema")
    poles: list[list[RatValue]]

    def to_lists(self) -> list[list[Fraction]]:
        out = []
        for i, group in enumerate(self.poles):
            try:
                out.append([rat(x) for x in group])
            except (ValueError, TypeError) as exc:
                raise DocumentError(f"poles[{i + 1}] has a non-rational entry") \
                    from exc
        return out


class SearchLimits(BaseModel):
    max_frameworks: int | None = None
    max_strings: int | None = None
    max_masters: int | None = None


class AnalyzeRequest(BaseModel):
    system: SystemDocument
    max_frameworks: int | None = None
    dump_graph: bool = False


class DecoupleRequest(BaseModel):
    system: SystemDocument
    limits: SearchLimits = SearchLimits()
    trace: bool = False
    pole: RatValue = -1
    jobs: int = 1          # accepted for compatibility; search is sequential


class VerifyRequest(BaseModel):
    system: SystemDocument
    law: LawDocument
    relaxed: bool = False


class PolesRequest(BaseModel):
    system: SystemDocument
    law: LawDocument
    poles: PoleSpecDocument | None = None


class FrameworkInfo(BaseModel):
    assignment: list[str]
    orders: list[int]
    paths: list[str]
    ede: list[dict] = []


class AnalyzeReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(default=SCHEMA_VERSION, alias="schema")
    command: str = "analyze"
    system: str = ""
    verdict: str
    relative_orders: list[int]
    bstar: list[list[str]]
    astar: list[list[str]]
    falb_wolovich: dict
    frameworks: list[FrameworkInfo]
    truncated: bool = False
    graph: str | None = None
    timing_ms: float = 0.0


class DecoupleReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(default=SCHEMA_VERSION, alias="schema")
    command: str = "decouple"
    system: str = ""
    verdict: str
    orders: list[int] | None = None
    F: list[list[str]] | None = None
    G: list[list[str]] | None = None
    framework: FrameworkInfo | None = None
    compensations: list[str] = []
    assigned_poles: list[str] = []
    witness: dict | None = None
    stats: dict = {}
    trace: list[dict] | None = None
    timing_ms: float = 0.0


class VerifyReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(default=SCHEMA_VERSION, alias="schema")
    command: str = "verify"
    system: str = ""
    verdict: str                      # integrator_diagonal | diagonal | not_diagonal
    orders: list[int] | None = None
    witness: dict | None = None
    timing_ms: float = 0.0


class PolesReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(default=SCHEMA_VERSION, alias="schema")
    command: str = "poles"
    system: str = ""
    verdict: str                      # placed | impossible
    witness: dict | None = None
    F: list[list[str]] | None = None  # combined law on the original system
    G: list[list[str]] | None = None
    subsystems: list[list[int]] | None = None
    targets: list[list[str]] | None = None
    n_co: int | None = None
    residual_states: list[int] | None = None
    timing_ms: float = 0.0


class ErrorReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: str = Field(default=SCHEMA_VERSION, alias="schema")
    command: str
    verdict: str = "error"
    error: str
    timing_ms: float = 0.0


def law_to_fields(law: FeedbackLaw) -> tuple[list[list[str]], list[list[str]]]:
    return _dump_matrix(law.f), _dump_matrix(law.g)
