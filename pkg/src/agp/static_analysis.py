"""Syntax-tree analysis of submissions: structure counts and constraint checks.

Analysis never executes the code. Grammars are pluggable per language; the
Python grammar (stdlib ast) ships by default.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .errors import UnsupportedLanguage
from .models import ConstraintSet, Submission


class ViolationKind(Enum):
    MISSING_REQUIRED_FUNCTION = "MissingRequiredFunction"
    FORBIDDEN_IMPORT = "ForbiddenImport"
    TOO_MANY_LOOPS = "TooManyLoops"
    SYNTAX_ERROR = "SyntaxError"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str


@dataclass(frozen=True)
class ImportRef:
    """One import occurrence: dotted module name plus source position."""

    module: str
    line: int
    column: int


@dataclass(frozen=True)
class StaticReport:
    syntax_ok: bool
    loop_count: int = 0
    function_defs: tuple[str, ...] = ()
    imports: tuple[ImportRef, ...] = ()
    violations: tuple[Violation, ...] = ()


@dataclass(frozen=True)
class TreeFacts:
    """Language-independent facts a grammar extracts from a parse tree."""

    loop_count: int
    function_defs: tuple[str, ...]
    imports: tuple[ImportRef, ...]
    syntax_error: str | None = None


def _python_facts(source: str) -> TreeFacts:
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        location = f"line {exc.lineno}" if exc.lineno else "unknown location"
        return TreeFacts(0, (), (), syntax_error=f"{exc.msg} ({location})")

    loops = 0
    functions: list[str] = []
    imports: list[ImportRef] = []
    for node in ast.walk(tree):
        if isinstance(node, (ast.For, ast.AsyncFor, ast.While)):
            loops += 1
        elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            functions.append(node.name)
        elif isinstance(node, ast.Import):
            for alias in node.names:
                imports.append(ImportRef(alias.name, node.lineno, node.col_offset))
        elif isinstance(node, ast.ImportFrom):
            if node.module:  # relative `from . import x` has no module name
                imports.append(ImportRef(node.module, node.lineno, node.col_offset))
    imports.sort(key=lambda ref: (ref.line, ref.column))
    return TreeFacts(loops, tuple(functions), tuple(imports))


_GRAMMARS: dict[str, Callable[[str], TreeFacts]] = {"python": _python_facts}


def register_grammar(language: str, extractor: Callable[[str], TreeFacts]) -> None:
    """Register a parse-tree fact extractor for a language."""
    _GRAMMARS[language] = extractor


def supported_languages() -> tuple[str, ...]:
    return tuple(sorted(_GRAMMARS))


def analyze(submission: Submission, constraints: ConstraintSet, language: str) -> StaticReport:
    """Parse a submission and report structure counts plus constraint violations."""
    extractor = _GRAMMARS.get(language)
    if extractor is None:
        raise UnsupportedLanguage(
            f"no grammar registered for {language!r}; available: {supported_languages()}"
        )
    facts = extractor(submission.source_text)
    if facts.syntax_error is not None:
        return StaticReport(
            syntax_ok=False,
            violations=(Violation(ViolationKind.SYNTAX_ERROR, facts.syntax_error),),
        )
    report = StaticReport(
        syntax_ok=True,
        loop_count=facts.loop_count,
        function_defs=facts.function_defs,
        imports=facts.imports,
    )
    return StaticReport(
        syntax_ok=True,
        loop_count=facts.loop_count,
        function_defs=facts.function_defs,
        imports=facts.imports,
        violations=tuple(check_constraints(report, constraints)),
    )


def check_constraints(report: StaticReport, constraints: ConstraintSet) -> list[Violation]:
    """Compare analysis facts against the assignment constraints.

    Violation order is deterministic: missing functions in config order,
    forbidden imports in source order, then the loop-count check.
    """
    violations: list[Violation] = []
    defined = set(report.function_defs)
    for name in constraints.required_functions:
        if name not in defined:
            violations.append(
                Violation(
                    ViolationKind.MISSING_REQUIRED_FUNCTION,
                    f"required function {name!r} is not defined",
                )
            )
    forbidden = set(constraints.forbidden_imports)
    for ref in report.imports:
        top_level = ref.module.split(".")[0]
        if ref.module in forbidden or top_level in forbidden:
            violations.append(
                Violation(
                    ViolationKind.FORBIDDEN_IMPORT,
                    f"import of {ref.module!r} at line {ref.line} is forbidden",
                )
            )
    if constraints.max_loops is not None and report.loop_count > constraints.max_loops:
        violations.append(
            Violation(
                ViolationKind.TOO_MANY_LOOPS,
                f"{report.loop_count} loops used, at most {constraints.max_loops} allowed",
            )
        )
    return violations
