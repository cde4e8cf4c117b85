"""Project snapshots, function units, dependency ordering and body substitution.

A :class:`ProjectSnapshot` is an immutable view of a target-language project:
the text of every file plus an index of the functions found in its ``.rs``
sources. Spans are byte offsets into the UTF-8 encoding of the file text and
cover a function from its first qualifier (``pub``, ``unsafe``, ``extern``...)
through the closing brace of its body. Attributes stay outside the span.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import networkx as nx

from .errors import ParseError, RefineError, UnknownFunctionError
from .lexer import IDENT, PUNCT, STRING, Token, match_delimiters, tokenize

SIDECAR_NAME = "functions.json"
_SKIP_DIRS = {"target", ".git", "__pycache__"}
_FN_QUALIFIERS = {"pub", "const", "async", "unsafe", "extern", "default", "crate"}


@dataclass(frozen=True)
class CallSite:
    caller_id: str
    snippet: str


@dataclass(frozen=True)
class FunctionUnit:
    id: str
    name: str
    body: str
    file: str
    span: tuple[int, int]
    callees: tuple[str, ...] = ()
    call_sites: tuple[CallSite, ...] = ()
    globals: tuple[str, ...] = ()
    imports: tuple[str, ...] = ()


@dataclass(frozen=True)
class ImportDecl:
    text: str
    names: frozenset[str]
    glob: bool = False


@dataclass(frozen=True)
class FileItems:
    """Item-level facts about one source file that live outside function bodies."""

    statics: tuple[tuple[str, str], ...] = ()
    imports: tuple[ImportDecl, ...] = ()
    ffi_functions: frozenset[str] = frozenset()


@dataclass(frozen=True)
class DependencyOrder:
    ordered_ids: tuple[str, ...]

    def __iter__(self):
        return iter(self.ordered_ids)

    def __len__(self) -> int:
        return len(self.ordered_ids)


@dataclass(frozen=True, eq=False)
class ProjectSnapshot:
    files: Mapping[str, str]
    function_index: Mapping[str, FunctionUnit]
    baseline_marker: bool = False
    file_items: Mapping[str, FileItems] = field(default_factory=dict, repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProjectSnapshot):
            return NotImplemented
        return dict(self.files) == dict(other.files)

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.files.items())))

    def rust_files(self) -> list[str]:
        return sorted(p for p in self.files if p.endswith(".rs"))

    def unit(self, unit_id: str) -> FunctionUnit:
        try:
            return self.function_index[unit_id]
        except KeyError:
            raise UnknownFunctionError(unit_id) from None

    def write_to(self, directory: str | os.PathLike) -> Path:
        root = Path(directory)
        for rel, text in sorted(self.files.items()):
            dest = root / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_bytes(text.encode("utf-8"))
        return root


# ---------------------------------------------------------------------------
# item scanning


class _ByteMap:
    """Character offset -> UTF-8 byte offset for one file."""

    def __init__(self, text: str):
        self.text = text
        self.ascii = text.isascii()

    def __call__(self, pos: int) -> int:
        if self.ascii:
            return pos
        return len(self.text[:pos].encode("utf-8"))


def _skip_angle(tokens: list[Token], i: int) -> int:
    """``tokens[i]`` is ``<``; return the index just past its matching ``>``."""
    depth = 0
    while i < len(tokens):
        t = tokens[i]
        if t.kind == PUNCT:
            if t.text == "<":
                depth += 1
            elif t.text == "<<":
                depth += 2
            elif t.text == ">":
                depth -= 1
            elif t.text == ">>":
                depth -= 2
            if depth <= 0:
                return i + 1
        i += 1
    return i


def _impl_type_name(tokens: list[Token], lo: int, hi: int) -> str:
    """Name of the self type for ``impl ... {`` spanning tokens[lo:hi]."""
    i = lo + 1
    if i < hi and tokens[i].is_punct("<"):
        i = _skip_angle(tokens, i)
    for k in range(i, hi):
        if tokens[k].is_kw("for"):
            i = k + 1
            break
    name = "impl"
    while i < hi:
        t = tokens[i]
        if t.kind == IDENT and t.text not in ("dyn", "where", "mut", "const"):
            name = t.text
        elif t.is_punct("<") or t.is_kw("where"):
            break
        elif not (t.is_punct("::") or t.is_punct("&") or t.is_punct("*")):
            break
        i += 1
    return name


def _use_names(tokens: list[Token]) -> tuple[frozenset[str], bool]:
    names: set[str] = set()
    glob = False
    for k, t in enumerate(tokens):
        if t.is_punct("*"):
            glob = True
        if t.kind != IDENT:
            continue
        nxt = tokens[k + 1] if k + 1 < len(tokens) else None
        prev = tokens[k - 1] if k > 0 else None
        if prev is not None and prev.is_kw("as"):
            names.add(t.text)
            continue
        if t.text == "as":
            continue
        if nxt is not None and nxt.is_kw("as"):
            continue
        if nxt is None or (nxt.kind == PUNCT and nxt.text in (",", "}", ";")):
            if t.text == "self":
                parent = next((p for p in reversed(tokens[:k]) if p.kind == IDENT), None)
                if parent is not None:
                    names.add(parent.text)
            else:
                names.add(t.text)
    return frozenset(names), glob


class _FileScanner:
    def __init__(self, file: str, text: str, *, strict: bool = True):
        self.file = file
        self.text = text
        self.tokens = tokenize(text, file, strict=strict)
        self.pairs = match_delimiters(self.tokens, file, strict=strict)
        self.functions: list[tuple[str, int, int]] = []  # (qualified name, start char, end char)
        self.statics: list[tuple[str, str]] = []
        self.imports: list[ImportDecl] = []
        self.ffi: set[str] = set()

    def scan(self) -> "_FileScanner":
        self._walk(0, len(self.tokens), "")
        return self

    def _close_of(self, idx: int) -> int:
        try:
            return self.pairs[idx]
        except KeyError:
            tok = self.tokens[idx]
            raise ParseError(f"unclosed {tok.text!r}", self.file, tok.line) from None

    def _walk(self, lo: int, hi: int, prefix: str) -> None:
        toks = self.tokens
        i = lo
        item_start: int | None = None
        while i < hi:
            t = toks[i]
            if t.is_punct("#"):
                j = i + 1
                if j < hi and toks[j].is_punct("!"):
                    j += 1
                if j < hi and toks[j].is_punct("["):
                    i = self._close_of(j) + 1
                    continue
            if item_start is None:
                item_start = i
            if t.is_punct(";"):
                item_start = None
                i += 1
                continue
            if t.kind == IDENT and t.text == "fn" and i + 1 < hi and toks[i + 1].kind == IDENT:
                i = self._function(item_start, i, hi, prefix)
                item_start = None
                continue
            if t.kind == IDENT and t.text == "use":
                end = self._find(i, hi, ";")
                names, glob = _use_names(toks[i + 1 : end])
                text = self.text[toks[item_start].start : toks[end].end]
                self.imports.append(ImportDecl(text, names, glob))
                item_start = None
                i = end + 1
                continue
            if t.kind == IDENT and t.text == "crate" and i > 0 and toks[i - 1].is_kw("extern"):
                end = self._find(i, hi, ";")
                body = toks[i + 1 : end]
                name = body[-1].text if body else "crate"
                text = self.text[toks[item_start].start : toks[end].end]
                self.imports.append(ImportDecl(text, frozenset({name}), False))
                item_start = None
                i = end + 1
                continue
            if t.kind == IDENT and t.text in ("static", "const") and i + 1 < hi:
                j = i + 1
                if toks[j].is_kw("mut"):
                    j += 1
                if j + 1 < hi and toks[j].kind == IDENT and toks[j + 1].is_punct(":"):
                    end = self._find(i, hi, ";")
                    text = self.text[toks[item_start].start : toks[end].end]
                    self.statics.append((toks[j].text, text))
                    item_start = None
                    i = end + 1
                    continue
            if t.is_punct("{"):
                close = self._close_of(i)
                head = toks[item_start:i]
                kws = [h.text for h in head if h.kind == IDENT]
                if "impl" in kws:
                    impl_at = next(k for k in range(item_start, i) if toks[k].is_kw("impl"))
                    name = _impl_type_name(toks, impl_at, i)
                    self._walk(i + 1, close, f"{prefix}{name}::")
                elif "mod" in kws and not any(k in kws for k in ("fn", "struct", "enum")):
                    name = head[-1].text
                    self._walk(i + 1, close, f"{prefix}{name}::")
                elif "extern" in kws and "fn" not in kws and (head[-1].kind == STRING or head[-1].is_kw("extern")):
                    self._extern_block(i + 1, close)
                i = close + 1
                item_start = None
                continue
            if t.kind == PUNCT and t.text in ("(", "["):
                i = self._close_of(i) + 1
                continue
            i += 1

    def _find(self, i: int, hi: int, text: str) -> int:
        toks = self.tokens
        while i < hi:
            t = toks[i]
            if t.is_punct(text):
                return i
            if t.kind == PUNCT and t.text in ("(", "[", "{"):
                i = self._close_of(i) + 1
                continue
            i += 1
        raise ParseError(f"expected {text!r}", self.file, toks[min(i, len(toks) - 1)].line if toks else None)

    def _function(self, item_start: int, fn_at: int, hi: int, prefix: str) -> int:
        toks = self.tokens
        name = toks[fn_at + 1].text
        start = item_start
        # attributes were skipped already; drop anything that is not a qualifier
        while start < fn_at and not (
            toks[start].kind == IDENT and toks[start].text in _FN_QUALIFIERS
        ):
            start += 1
        j = fn_at + 2
        while j < hi:
            t = toks[j]
            if t.is_punct(";"):
                return j + 1
            if t.is_punct("{"):
                close = self._close_of(j)
                self.functions.append((prefix + name, toks[start].start, toks[close].end))
                return close + 1
            if t.kind == PUNCT and t.text in ("(", "["):
                j = self._close_of(j) + 1
                continue
            j += 1
        raise ParseError(f"function {name!r} has no body", self.file, toks[fn_at].line)

    def _extern_block(self, lo: int, hi: int) -> None:
        toks = self.tokens
        item_start = lo
        i = lo
        while i < hi:
            t = toks[i]
            if t.is_punct("#") and i + 1 < hi and toks[i + 1].is_punct("["):
                i = self._close_of(i + 1) + 1
                item_start = i
                continue
            if t.is_kw("fn") and i + 1 < hi and toks[i + 1].kind == IDENT:
                self.ffi.add(toks[i + 1].text)
            if t.is_kw("static"):
                j = i + 1
                if j < hi and toks[j].is_kw("mut"):
                    j += 1
                if j < hi and toks[j].kind == IDENT:
                    end = self._find(i, hi, ";")
                    self.statics.append((toks[j].text, self.text[toks[item_start].start : toks[end].end]))
            if t.is_punct(";"):
                item_start = i + 1
            i += 1


# ---------------------------------------------------------------------------
# indexing and linking


def _unit_id(file: str, qualname: str) -> str:
    return f"{file}::{qualname}"


def _scan_files(files: Mapping[str, str], *, strict: bool) -> dict[str, _FileScanner]:
    return {
        path: _FileScanner(path, files[path], strict=strict).scan()
        for path in sorted(files)
        if path.endswith(".rs")
    }


def _units_from_scanners(files: Mapping[str, str], scanners: Mapping[str, _FileScanner]) -> list[FunctionUnit]:
    units: list[FunctionUnit] = []
    for path, sc in scanners.items():
        to_bytes = _ByteMap(files[path])
        seen: dict[str, int] = {}
        for qualname, s, e in sc.functions:
            uid = _unit_id(path, qualname)
            if uid in seen:
                seen[uid] += 1
                uid = f"{uid}#{seen[uid]}"
            else:
                seen[uid] = 0
            units.append(
                FunctionUnit(
                    id=uid,
                    name=qualname.rsplit("::", 1)[-1],
                    body=files[path][s:e],
                    file=path,
                    span=(to_bytes(s), to_bytes(e)),
                )
            )
    return units


def _file_items(scanners: Mapping[str, _FileScanner]) -> dict[str, FileItems]:
    return {
        path: FileItems(tuple(sc.statics), tuple(sc.imports), frozenset(sc.ffi))
        for path, sc in scanners.items()
    }


def _called_names(tokens: list[Token]) -> list[tuple[str, int]]:
    """(name, token index) for every call expression ``name(`` / ``name::<..>(``."""
    calls = []
    for k, t in enumerate(tokens):
        if t.kind != IDENT or k + 1 >= len(tokens):
            continue
        if k > 0 and tokens[k - 1].is_kw("fn"):
            continue
        nxt = tokens[k + 1]
        if nxt.is_punct("("):
            calls.append((t.text, k))
        elif nxt.is_punct("::") and k + 2 < len(tokens) and tokens[k + 2].is_punct("<"):
            j = _skip_angle(tokens, k + 2)
            if j < len(tokens) and tokens[j].is_punct("("):
                calls.append((t.text, k))
    return calls


def _line_of(body: str, pos: int) -> str:
    s = body.rfind("\n", 0, pos) + 1
    e = body.find("\n", pos)
    return body[s : len(body) if e < 0 else e].strip()


def link_units(units: Iterable[FunctionUnit], items: Mapping[str, FileItems]) -> list[FunctionUnit]:
    """Recompute callees, call sites, referenced globals and imports for ``units``.

    Matching is by symbol name only. A name defined in several places resolves
    to the definition in the caller's own file, else the smallest id.
    """
    units = list(units)
    by_name: dict[str, list[FunctionUnit]] = {}
    for u in units:
        by_name.setdefault(u.name, []).append(u)
    for cands in by_name.values():
        cands.sort(key=lambda u: u.id)

    all_statics: list[tuple[str, str, str]] = []
    for path in sorted(items):
        for name, text in items[path].statics:
            all_statics.append((path, name, text))

    callees: dict[str, list[str]] = {}
    sites: dict[str, list[CallSite]] = {u.id: [] for u in units}
    globals_: dict[str, tuple[str, ...]] = {}
    imports: dict[str, tuple[str, ...]] = {}
    for u in units:
        toks = tokenize(u.body, u.file, strict=False)
        idents = {t.text for t in toks if t.kind == IDENT}
        found: list[str] = []
        for name, k in _called_names(toks):
            cands = by_name.get(name)
            if not cands:
                continue
            same_file = [c for c in cands if c.file == u.file]
            target = (same_file or cands)[0]
            if target.id == u.id:
                continue
            if target.id not in found:
                found.append(target.id)
            snippet = _line_of(u.body, toks[k].start)
            site = CallSite(u.id, snippet)
            if site not in sites[target.id]:
                sites[target.id].append(site)
        callees[u.id] = found
        own = [s for s in all_statics if s[0] == u.file]
        other = [s for s in all_statics if s[0] != u.file]
        picked: list[str] = []
        picked_names: set[str] = set()
        for _, name, text in own + other:
            if name in idents and name not in picked_names:
                picked.append(text)
                picked_names.add(name)
        globals_[u.id] = tuple(picked)
        file_imports = items[u.file].imports if u.file in items else ()
        imports[u.id] = tuple(d.text for d in file_imports if d.glob or d.names & idents)
    return [
        replace(
            u,
            callees=tuple(callees[u.id]),
            call_sites=tuple(sites[u.id]),
            globals=globals_[u.id],
            imports=imports[u.id],
        )
        for u in units
    ]


def _load_sidecar(files: Mapping[str, str], sidecar: Mapping) -> list[FunctionUnit]:
    units = []
    for rec in sidecar.get("functions", []):
        path = rec["file"]
        if path not in files:
            raise ParseError(f"sidecar names unknown file for {rec.get('id')!r}", path)
        raw = files[path].encode("utf-8")
        s, e = rec["span"]
        if not (0 <= s < e <= len(raw)):
            raise ParseError(f"span {s}..{e} out of range for {rec.get('id')!r}", path)
        units.append(
            FunctionUnit(
                id=rec["id"],
                name=rec.get("name") or rec["id"].rsplit("::", 1)[-1],
                body=raw[s:e].decode("utf-8"),
                file=path,
                span=(s, e),
            )
        )
    return units


def _build(files: Mapping[str, str], *, sidecar: Mapping | None, baseline: bool) -> ProjectSnapshot:
    if sidecar is not None:
        scanners = _scan_files(files, strict=False)
        units = _load_sidecar(files, sidecar)
    else:
        scanners = _scan_files(files, strict=True)
        units = _units_from_scanners(files, scanners)
    items = _file_items(scanners)
    linked = link_units(units, items)
    return ProjectSnapshot(
        files=MappingProxyType(dict(files)),
        function_index=MappingProxyType({u.id: u for u in linked}),
        baseline_marker=baseline,
        file_items=MappingProxyType(items),
    )


def snapshot_from_files(
    files: Mapping[str, str], *, sidecar: Mapping | None = None, baseline: bool = True
) -> ProjectSnapshot:
    """Index ``files`` (relative path -> text) into a snapshot.

    Raises ParseError naming the file and line when a source does not parse.
    """
    return _build(files, sidecar=sidecar, baseline=baseline)


def load_project(directory: str | os.PathLike) -> ProjectSnapshot:
    """Read every text file under ``directory`` (build outputs and hidden dirs excluded)."""
    root = Path(directory)
    if not root.is_dir():
        raise RefineError(f"project directory not found: {root}")
    files: dict[str, str] = {}
    sidecar = None
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d not in _SKIP_DIRS and not d.startswith("."))
        for fname in sorted(filenames):
            full = Path(dirpath) / fname
            rel = full.relative_to(root).as_posix()
            if rel == SIDECAR_NAME:
                sidecar = json.loads(full.read_text(encoding="utf-8"))
                continue
            try:
                files[rel] = full.read_bytes().decode("utf-8")
            except UnicodeDecodeError:
                continue
    return snapshot_from_files(files, sidecar=sidecar, baseline=True)


def index_functions(project: ProjectSnapshot) -> list[FunctionUnit]:
    """Re-derive the function units of ``project`` from its file text.

    Units come back ordered by file, then by position in the file.
    """
    scanners = _scan_files(project.files, strict=True)
    units = _units_from_scanners(project.files, scanners)
    return link_units(units, _file_items(scanners))


def order_by_dependency(units: Iterable[FunctionUnit]) -> DependencyOrder:
    """Bottom-up order: every function after the functions it calls.

    Mutually recursive groups are emitted together in id order; independent
    groups are ordered by their smallest member id.
    """
    units = list(units)
    ids = {u.id for u in units}
    graph = nx.DiGraph()
    graph.add_nodes_from(sorted(ids))
    for u in units:
        for callee in u.callees:
            if callee in ids and callee != u.id:
                # edge callee -> caller: callees come first in topological order
                graph.add_edge(callee, u.id)
    condensed = nx.condensation(graph)
    members = {n: sorted(condensed.nodes[n]["members"]) for n in condensed.nodes}
    ordered: list[str] = []
    for scc in nx.lexicographical_topological_sort(condensed, key=lambda n: members[n][0]):
        ordered.extend(members[scc])
    return DependencyOrder(tuple(ordered))


def substitute(project: ProjectSnapshot, unit_id: str, new_body: str) -> ProjectSnapshot:
    """Return a copy of ``project`` with the text of ``unit_id`` replaced by ``new_body``.

    Only the bytes inside the function's span change; spans of later functions
    in the same file shift by the length difference.
    """
    unit = project.unit(unit_id)
    if not new_body or not new_body.strip():
        raise RefineError(f"empty replacement body for {unit_id}")
    raw = project.files[unit.file].encode("utf-8")
    new_raw = new_body.encode("utf-8")
    s, e = unit.span
    files = dict(project.files)
    files[unit.file] = (raw[:s] + new_raw + raw[e:]).decode("utf-8")
    delta = len(new_raw) - (e - s)
    moved = []
    for u in project.function_index.values():
        if u.id == unit_id:
            moved.append(replace(u, body=new_body, span=(s, s + len(new_raw))))
        elif u.file == unit.file and u.span[0] >= e:
            moved.append(replace(u, span=(u.span[0] + delta, u.span[1] + delta)))
        else:
            moved.append(u)
    linked = link_units(moved, project.file_items)
    return ProjectSnapshot(
        files=MappingProxyType(files),
        function_index=MappingProxyType({u.id: u for u in linked}),
        baseline_marker=False,
        file_items=project.file_items,
    )
