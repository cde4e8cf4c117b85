"""Unsafe-construct counting, safety ratio and linter-based idiomaticity.

Counting is lexical. The five categories are defined as follows:

rpc
    Declarations (``let`` bindings, parameters, closure parameters, struct
    fields, statics) whose type annotation mentions a raw pointer type
    ``*const T`` / ``*mut T``. One per declaration, however many pointer
    types it contains. Return types and cast targets are not declarations.
rpr
    Unary ``*`` applied to an operand known to be a raw pointer: an
    identifier declared with a raw pointer type in the enclosing function or
    as a static, a field declared with a raw pointer type, or a method chain
    through a pointer-producing method (``offset``, ``add``, ``as_ptr``...).
luc
    Physical lines holding at least one token inside an ``unsafe { }`` block
    or an ``unsafe fn`` body. Brace-only lines and comment lines do not count;
    nested regions are counted once.
uce
    Call expressions inside unsafe regions whose callee needs an unsafe
    context: functions declared ``unsafe fn`` in the project, foreign
    functions from ``extern`` blocks, ``libc::`` paths and a fixed list of
    unsafe standard-library functions and raw-pointer methods.
utc
    ``as`` casts whose target is a raw pointer type or whose operand is a
    raw-pointer identifier.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

from .code_model import ProjectSnapshot, _FileScanner, _skip_angle
from .lexer import IDENT, LIFETIME, PUNCT, STRING, Token
from .toolchain import DEFAULT_LINT_COMMAND, is_warning, run_build

PTR_METHODS = frozenset(
    """offset add sub wrapping_add wrapping_sub wrapping_offset byte_add byte_sub byte_offset
    as_ptr as_mut_ptr cast cast_mut cast_const""".split()
)
UNSAFE_METHODS = frozenset(
    """offset offset_from add sub byte_add byte_sub byte_offset read_volatile write_volatile
    read_unaligned write_unaligned copy_from copy_to copy_from_nonoverlapping
    copy_to_nonoverlapping get_unchecked get_unchecked_mut as_uninit_ref""".split()
)
UNSAFE_PATH_CALLS = frozenset(
    [
        ("ptr", "read"), ("ptr", "write"), ("ptr", "copy"), ("ptr", "copy_nonoverlapping"),
        ("ptr", "write_bytes"), ("ptr", "drop_in_place"), ("ptr", "read_volatile"),
        ("ptr", "write_volatile"), ("ptr", "read_unaligned"), ("ptr", "write_unaligned"),
        ("ptr", "swap"), ("mem", "transmute"), ("mem", "zeroed"), ("mem", "uninitialized"),
        ("mem", "transmute_copy"), ("slice", "from_raw_parts"), ("slice", "from_raw_parts_mut"),
        ("str", "from_utf8_unchecked"), ("CStr", "from_ptr"), ("Box", "from_raw"),
        ("String", "from_raw_parts"), ("Vec", "from_raw_parts"),
    ]
)
UNSAFE_FREE_CALLS = frozenset(
    """transmute transmute_copy zeroed from_raw_parts from_raw_parts_mut copy_nonoverlapping
    from_utf8_unchecked drop_in_place write_bytes""".split()
)
_PTR_INIT_CALLS = frozenset({"null", "null_mut", "as_ptr", "as_mut_ptr", "malloc", "calloc", "realloc"})
# keywords after which `*` starts an operand rather than multiplying
_EXPR_KEYWORDS = frozenset({"return", "break", "in", "match", "if", "while", "mut", "else", "move", "let"})


@dataclass(frozen=True)
class UnsafeConstructCounts:
    rpc: int = 0
    rpr: int = 0
    luc: int = 0
    uce: int = 0
    utc: int = 0

    def total(self) -> int:
        return self.rpc + self.rpr + self.luc + self.uce + self.utc

    def __add__(self, other: "UnsafeConstructCounts") -> "UnsafeConstructCounts":
        return UnsafeConstructCounts(
            *(getattr(self, f.name) + getattr(other, f.name) for f in fields(self))
        )

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class SafetyBaseline:
    counts0: UnsafeConstructCounts
    linter0: int | None = None


# ---------------------------------------------------------------------------
# lexical helpers


def _is_raw_type(toks: Sequence[Token], k: int) -> bool:
    return (
        toks[k].is_punct("*")
        and k + 1 < len(toks)
        and toks[k + 1].kind == IDENT
        and toks[k + 1].text in ("const", "mut")
    )


def _skip_type(toks: Sequence[Token], i: int, pairs: Mapping[int, int]) -> int:
    """Index just past the type that starts at ``toks[i]`` (used after ``as``)."""
    n = len(toks)
    while i < n:
        t = toks[i]
        if _is_raw_type(toks, i):
            i += 2
        elif t.kind == PUNCT and t.text in ("&", "&&"):
            i += 1
            if i < n and toks[i].kind == "lifetime":
                i += 1
            if i < n and toks[i].is_kw("mut"):
                i += 1
        else:
            break
    if i < n and toks[i].kind == PUNCT and toks[i].text in ("(", "["):
        return pairs.get(i, i) + 1
    while i < n and toks[i].kind == IDENT:
        i += 1
        if i < n and toks[i].is_punct("<"):
            i = _skip_angle(toks, i)
        if i < n and toks[i].is_punct("::"):
            i += 1
            continue
        break
    return i


def _annotation_has_raw(toks: Sequence[Token], colon: int, pairs: Mapping[int, int]) -> bool:
    """Whether the type annotation after ``toks[colon]`` mentions a raw pointer type."""
    depth = 0
    j = colon + 1
    n = len(toks)
    while j < n:
        t = toks[j]
        if t.kind == PUNCT:
            if t.text in (";", "{", "}"):
                return False
            if depth == 0 and t.text in (",", "=", ")", "]", "|"):
                return False
            if t.text in ("(", "[", "<"):
                depth += 1
            elif t.text in (")", "]", ">"):
                depth -= 1
                if depth < 0:
                    return False
            elif t.text == ">>":
                depth -= 2
                if depth < 0:
                    return False
        if t.is_kw("as"):
            j = _skip_type(toks, j + 1, pairs)
            continue
        if _is_raw_type(toks, j):
            return True
        j += 1
    return False


def _unary_star(toks: Sequence[Token], k: int) -> bool:
    if not toks[k].is_punct("*") or _is_raw_type(toks, k):
        return False
    if k == 0:
        return True
    prev = toks[k - 1]
    if prev.kind == PUNCT:
        return prev.text not in (")", "]", "::")
    if prev.kind == IDENT:
        return prev.text in _EXPR_KEYWORDS
    return False


class _FileCounter:
    def __init__(
        self, scanner: _FileScanner, unsafe_fns: frozenset[str], unsafe_methods: frozenset[str] = frozenset()
    ):
        self.toks = scanner.tokens
        self.pairs = scanner.pairs
        self.unsafe_fns = unsafe_fns
        self.unsafe_methods = unsafe_methods
        starts = {t.start: i for i, t in enumerate(self.toks)}
        ends = {t.end: i for i, t in enumerate(self.toks)}
        self._fn_ranges = [(starts[s], ends[e]) for _, s, e in scanner.functions]
        self._owner: list[int | None] = [None] * len(self.toks)
        for idx, (lo, hi) in enumerate(self._fn_ranges):
            for k in range(lo, hi + 1):
                self._owner[k] = idx
        self._collect_raw_names()
        self._mark_unsafe()

    def _fn_of(self, k: int) -> int | None:
        return self._owner[k]

    def _collect_raw_names(self) -> None:
        toks = self.toks
        self.field_raw: set[str] = set()
        self.static_raw: set[str] = set()
        self.local_raw: dict[int, set[str]] = {i: set() for i in range(len(self._fn_ranges))}
        self.rpc = 0
        for k, t in enumerate(toks):
            if t.is_punct(":") and k > 0 and toks[k - 1].kind == IDENT:
                if not _annotation_has_raw(toks, k, self.pairs):
                    continue
                self.rpc += 1
                name = toks[k - 1].text
                before = toks[k - 2] if k >= 2 else None
                fn = self._fn_of(k)
                is_static = before is not None and (
                    before.is_kw("static") or before.is_kw("const")
                    or (before.is_kw("mut") and k >= 3 and toks[k - 3].is_kw("static"))
                )
                if is_static:
                    self.static_raw.add(name)
                elif fn is not None:
                    self.local_raw[fn].add(name)
                else:
                    self.field_raw.add(name)
            elif t.is_kw("let"):
                j = k + 1
                if j < len(toks) and toks[j].is_kw("mut"):
                    j += 1
                if j + 1 >= len(toks) or toks[j].kind != IDENT or not toks[j + 1].is_punct("="):
                    continue
                fn = self._fn_of(k)
                if fn is not None and self._init_is_pointer(j + 2):
                    self.local_raw[fn].add(toks[j].text)

    def _init_is_pointer(self, i: int) -> bool:
        toks = self.toks
        while i < len(toks) and not toks[i].is_punct(";"):
            t = toks[i]
            if t.kind == PUNCT and t.text in ("{",):
                i = self.pairs.get(i, i) + 1
                continue
            if t.is_kw("as") and i + 1 < len(toks) and _is_raw_type(toks, i + 1):
                return True
            if t.kind == IDENT and t.text in _PTR_INIT_CALLS and i + 1 < len(toks) and toks[i + 1].is_punct("("):
                return True
            i += 1
        return False

    def _mark_unsafe(self) -> None:
        toks = self.toks
        n = len(toks)
        self.in_unsafe = [False] * n
        self.regions: list[tuple[int, int]] = []
        for k, t in enumerate(toks):
            if not t.is_kw("unsafe") or k + 1 >= n:
                continue
            nxt = toks[k + 1]
            if nxt.is_punct("{"):
                self.regions.append((k + 1, self.pairs[k + 1]))
                continue
            j = k + 1
            if toks[j].is_kw("extern"):
                j += 1
                if j < n and toks[j].kind == STRING:
                    j += 1
            if j < n and toks[j].is_kw("fn"):
                while j < n:
                    if toks[j].is_punct(";"):
                        break
                    if toks[j].is_punct("{"):
                        self.regions.append((j, self.pairs[j]))
                        break
                    if toks[j].kind == PUNCT and toks[j].text in ("(", "["):
                        j = self.pairs[j] + 1
                        continue
                    j += 1
        for lo, hi in self.regions:
            for idx in range(lo + 1, hi):
                self.in_unsafe[idx] = True

    def _raw_locals(self, k: int) -> set[str]:
        fn = self._fn_of(k)
        local = self.local_raw[fn] if fn is not None else set()
        return local | self.static_raw

    def _deref_is_raw(self, k: int) -> bool:
        toks = self.toks
        n = len(toks)
        j = k + 1
        while j < n and (toks[j].kind == PUNCT and toks[j].text in ("(", "*", "&", "&&") or toks[j].is_kw("mut")):
            j += 1
        if j >= n or toks[j].kind != IDENT:
            return False
        if toks[j].text in self._raw_locals(k):
            return True
        j += 1
        while j + 1 < n:
            t = toks[j]
            if t.kind == PUNCT and t.text in (".", "::") and toks[j + 1].kind == IDENT:
                seg = toks[j + 1]
                call = j + 2 < n and toks[j + 2].is_punct("(")
                if call and seg.text in PTR_METHODS:
                    return True
                if not call and t.text == "." and seg.text in self.field_raw:
                    return True
                j += 2
            elif t.kind == PUNCT and t.text in ("(", "["):
                j = self.pairs.get(j, j) + 1
            else:
                break
        return False

    def _call_is_unsafe(self, k: int) -> bool:
        toks = self.toks
        name = toks[k].text
        prev = toks[k - 1] if k > 0 else None
        if prev is not None and prev.is_punct("."):
            # `.sum()` on an iterator is not a call to a project function named `sum`
            return name in UNSAFE_METHODS or name in self.unsafe_methods
        if name in self.unsafe_fns:
            return True
        if prev is not None and prev.is_punct("::") and k >= 2 and toks[k - 2].kind == IDENT:
            if (toks[k - 2].text, name) in UNSAFE_PATH_CALLS:
                return True
            j = k - 2
            while j >= 0 and toks[j].kind == IDENT:
                if toks[j].text == "libc":
                    return True
                if j >= 1 and toks[j - 1].is_punct("::"):
                    j -= 2
                else:
                    break
            return False
        return name in UNSAFE_FREE_CALLS

    def count(self) -> UnsafeConstructCounts:
        toks = self.toks
        rpr = uce = utc = 0
        for k, t in enumerate(toks):
            if t.is_punct("*") and _unary_star(toks, k) and self._deref_is_raw(k):
                rpr += 1
            elif t.is_kw("as") and k > 0:
                if k + 1 < len(toks) and _is_raw_type(toks, k + 1):
                    utc += 1
                    continue
                prev = toks[k - 1]
                if prev.kind == IDENT:
                    before = toks[k - 2] if k >= 2 else None
                    if before is not None and before.is_punct("."):
                        raw = prev.text in self.field_raw
                    else:
                        raw = prev.text in self._raw_locals(k)
                    if raw:
                        utc += 1
            elif t.kind == IDENT and self.in_unsafe[k] and k + 1 < len(toks):
                if k > 0 and toks[k - 1].is_kw("fn"):
                    continue
                nxt = toks[k + 1]
                is_call = nxt.is_punct("(")
                if not is_call and nxt.is_punct("::") and k + 2 < len(toks) and toks[k + 2].is_punct("<"):
                    j = _skip_angle(toks, k + 2)
                    is_call = j < len(toks) and toks[j].is_punct("(")
                if is_call and self._call_is_unsafe(k):
                    uce += 1
        lines: set[int] = set()
        for lo, hi in self.regions:
            for idx in range(lo + 1, hi):
                tok = toks[idx]
                if tok.is_punct("{") or tok.is_punct("}"):
                    continue
                lines.update(range(tok.line, tok.line + tok.text.count("\n") + 1))
        return UnsafeConstructCounts(rpc=self.rpc, rpr=rpr, luc=len(lines), uce=uce, utc=utc)


def _has_receiver(toks: list[Token], k: int) -> bool:
    """True when the ``fn`` at ``k`` takes ``self`` as its first parameter."""
    j = k + 2
    if j < len(toks) and toks[j].is_punct("<"):
        j = _skip_angle(toks, j)
    if j >= len(toks) or not toks[j].is_punct("("):
        return False
    j += 1
    while j < len(toks) and (toks[j].is_punct("&") or toks[j].kind == LIFETIME or toks[j].is_kw("mut")):
        j += 1
    return j < len(toks) and toks[j].is_kw("self")


def _unsafe_fn_names(scanners: Sequence[_FileScanner]) -> tuple[frozenset[str], frozenset[str]]:
    """Names of unsafe functions (including foreign ones) and the subset taking ``self``."""
    names: set[str] = set()
    methods: set[str] = set()
    for scanner in scanners:
        toks = scanner.tokens
        for k, t in enumerate(toks):
            if t.is_kw("fn") and k + 1 < len(toks) and toks[k + 1].kind == IDENT:
                j = k - 1
                if j >= 0 and toks[j].kind == STRING:
                    j -= 1
                if j >= 0 and toks[j].is_kw("extern"):
                    j -= 1
                if j >= 0 and toks[j].is_kw("unsafe"):
                    names.add(toks[k + 1].text)
                    if _has_receiver(toks, k):
                        methods.add(toks[k + 1].text)
        names |= scanner.ffi
    return frozenset(names), frozenset(methods)


def count_source_files(files: Mapping[str, str]) -> UnsafeConstructCounts:
    """Counts summed over every ``.rs`` entry of ``files`` (path -> text)."""
    scanners = [_FileScanner(p, files[p]).scan() for p in sorted(files) if p.endswith(".rs")]
    unsafe_fns, unsafe_methods = _unsafe_fn_names(scanners)
    total = UnsafeConstructCounts()
    for scanner in scanners:
        total = total + _FileCounter(scanner, unsafe_fns, unsafe_methods).count()
    return total


def count_constructs(program: ProjectSnapshot) -> UnsafeConstructCounts:
    """Whole-program construct counts; raises ParseError if a source does not tokenize."""
    return count_source_files(program.files)


def safety_ratio(counts: UnsafeConstructCounts, baseline: SafetyBaseline, compilable: bool) -> float:
    m = 1.0 if compilable else 0.0
    total0 = baseline.counts0.total()
    if total0 == 0:
        return m
    return m * max(1.0 - counts.total() / total0, 0.0)


def idiomaticity(linter_warnings: int, baseline: SafetyBaseline) -> float:
    linter0 = baseline.linter0
    if linter0 is None:
        raise ValueError("baseline has no linter measurement")
    if linter0 == 0:
        return 1.0 if linter_warnings == 0 else 0.0
    return max(1.0 - linter_warnings / linter0, 0.0)


def count_linter_warnings(
    program: ProjectSnapshot,
    workdir: str | os.PathLike,
    command: Sequence[str] = DEFAULT_LINT_COMMAND,
    timeout: float | None = 600,
) -> int:
    """Materialize ``program`` in ``workdir`` and count linter warnings."""
    program.write_to(workdir)
    run = run_build(command, workdir, timeout=timeout)
    return sum(1 for d in run.diagnostics if is_warning(d))


def measure_baseline(
    program: ProjectSnapshot, *, linter_workdir: str | os.PathLike | None = None,
    lint_command: Sequence[str] = DEFAULT_LINT_COMMAND,
) -> SafetyBaseline:
    linter0 = None
    if linter_workdir is not None:
        linter0 = count_linter_warnings(program, linter_workdir, lint_command)
    return SafetyBaseline(count_constructs(program), linter0)
