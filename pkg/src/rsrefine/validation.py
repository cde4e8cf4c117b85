"""Compiling candidate programs, running behavioural tests, and rendering feedback."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .code_model import ProjectSnapshot
from .errors import ConfigError, ToolchainError
from .toolchain import DEFAULT_BUILD_COMMAND, is_error, run_build

log = logging.getLogger(__name__)

DEFAULT_TEST_TIMEOUT = 30.0
TIMEOUT_EXIT = -9999
MAX_FEEDBACK_DIAGNOSTICS = 40
MAX_FEEDBACK_BYTES = 8 * 1024


@dataclass(frozen=True)
class CompileError:
    code: str | None
    message: str
    file: str | None = None
    line: int | None = None
    rendered: str = ""


@dataclass(frozen=True)
class CompileOutcome:
    success: bool
    errors: tuple[CompileError, ...] = ()
    executables: tuple[str, ...] = ()

    @property
    def error_count(self) -> int:
        return len(self.errors)

    def __post_init__(self):
        if self.success != (len(self.errors) == 0):
            raise ValueError("success must hold exactly when there are no errors")


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    id: str
    args: tuple[str, ...] = ()
    stdin: bytes = b""
    expected_stdout: bytes = b""
    expected_exit: int = 0


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    test_id: str
    observed_stdout: bytes
    observed_exit: int
    passed: bool
    expected_stdout: bytes = b""
    expected_exit: int = 0
    timed_out: bool = False


@dataclass(frozen=True)
class ValidationResult:
    compile: CompileOutcome
    tests: tuple[TestOutcome, ...] | None = None
    feedback_text: str = ""

    def __post_init__(self):
        if self.tests is not None and not self.compile.success:
            raise ValueError("test outcomes require a successful compile")

    @property
    def passed(self) -> bool:
        return self.compile.success and (self.tests is None or is_equivalent(self.tests))


# ---------------------------------------------------------------------------
# test suites


def _literal_or_file(value, base: Path) -> bytes:
    if value is None:
        return b""
    if isinstance(value, dict):
        if "file" in value:
            return (base / value["file"]).read_bytes()
        if "text" in value:
            return value["text"].encode("utf-8")
        raise ConfigError(f"expected 'file' or 'text' in {value!r}")
    if isinstance(value, str):
        return value.encode("utf-8")
    raise ConfigError(f"unsupported stream value {value!r}")


def load_test_suite(path: str | os.PathLike) -> list[TestCase]:
    """Read a JSON suite: ``{"tests": [{"id", "args", "stdin", "expected_stdout", "expected_exit"}]}``.

    ``stdin`` and ``expected_stdout`` are either literal strings or
    ``{"file": relative/path}`` references resolved against the suite's directory.
    """
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    records = data["tests"] if isinstance(data, dict) else data
    suite: list[TestCase] = []
    seen: set[str] = set()
    for rec in records:
        tid = str(rec["id"])
        if tid in seen:
            raise ConfigError(f"duplicate test id {tid!r} in {path}")
        seen.add(tid)
        suite.append(
            TestCase(
                id=tid,
                args=tuple(str(a) for a in rec.get("args", [])),
                stdin=_literal_or_file(rec.get("stdin"), path.parent),
                expected_stdout=_literal_or_file(rec.get("expected_stdout"), path.parent),
                expected_exit=int(rec.get("expected_exit", 0)),
            )
        )
    return suite


# ---------------------------------------------------------------------------
# operations


def compile_project(
    program: ProjectSnapshot,
    workdir: str | os.PathLike,
    command: Sequence[str] = DEFAULT_BUILD_COMMAND,
    timeout: float | None = 600,
) -> CompileOutcome:
    """Write ``program`` into ``workdir`` and build it.

    Each error-level diagnostic is one error; warnings and attached notes are
    ignored. A failed build without any parsed diagnostic (manifest problems,
    linker failures) still yields one synthetic error.
    """
    if not program.files:
        raise ToolchainError("nothing to build: the project has no files")
    program.write_to(workdir)
    run = run_build(command, workdir, timeout=timeout)
    errors = [
        CompileError(d.code, d.message, d.file, d.line, d.rendered)
        for d in run.diagnostics
        if is_error(d)
    ]
    if run.returncode != 0 and not errors:
        tail = run.stderr.strip().splitlines()[-5:]
        errors.append(CompileError(None, "build failed: " + " | ".join(tail) if tail else "build failed"))
    return CompileOutcome(success=not errors, errors=tuple(errors), executables=tuple(run.executables))


def compile_score(outcome: CompileOutcome) -> float:
    return 1.0 / (outcome.error_count + 1)


def run_tests(
    executable: str | os.PathLike,
    suite: Sequence[TestCase],
    workdir: str | os.PathLike,
    timeout: float = DEFAULT_TEST_TIMEOUT,
) -> list[TestOutcome]:
    """Run every test against ``executable`` in declared order.

    Only stdout bytes and the exit status are compared; stderr is discarded.
    A test that exceeds ``timeout`` fails with exit status ``TIMEOUT_EXIT``.
    """
    if not suite:
        raise ValueError("empty test suite")
    exe = Path(executable)
    if not exe.exists():
        raise ToolchainError(f"built binary missing: {exe}")
    outcomes = []
    for case in suite:
        try:
            proc = subprocess.run(
                [str(exe), *case.args],
                input=case.stdin,
                capture_output=True,
                cwd=workdir,
                timeout=timeout,
            )
            stdout, code, timed_out = proc.stdout, proc.returncode, False
        except subprocess.TimeoutExpired as exc:
            stdout, code, timed_out = exc.stdout or b"", TIMEOUT_EXIT, True
        passed = not timed_out and stdout == case.expected_stdout and code == case.expected_exit
        outcomes.append(
            TestOutcome(case.id, stdout, code, passed, case.expected_stdout, case.expected_exit, timed_out)
        )
    return outcomes


def is_equivalent(outcomes: Iterable[TestOutcome]) -> bool:
    """True when every outcome passed; vacuously true for no outcomes."""
    return all(o.passed for o in outcomes)


def _show(data: bytes, limit: int = 400) -> str:
    text = data.decode("utf-8", errors="replace")
    if len(text) > limit:
        text = text[:limit] + "...[truncated]"
    return repr(text)


def render_feedback(compile: CompileOutcome, tests: Sequence[TestOutcome] | None) -> str:
    """Human-readable error report, bounded to 40 diagnostics and 8 KiB."""
    parts: list[str] = []
    if not compile.success:
        for err in compile.errors[:MAX_FEEDBACK_DIAGNOSTICS]:
            if err.rendered:
                parts.append(err.rendered.rstrip())
            else:
                code = f"[{err.code}]" if err.code else ""
                loc = f" --> {err.file}:{err.line}" if err.file else ""
                parts.append(f"error{code}: {err.message}{loc}")
        hidden = compile.error_count - MAX_FEEDBACK_DIAGNOSTICS
        if hidden > 0:
            parts.append(f"... {hidden} more errors omitted")
    elif tests:
        failed = [t for t in tests if not t.passed]
        for t in failed[:MAX_FEEDBACK_DIAGNOSTICS]:
            status = "timed out" if t.timed_out else f"exit status {t.observed_exit}"
            parts.append(
                f"test {t.test_id} failed:\n"
                f"  expected stdout: {_show(t.expected_stdout)}\n"
                f"  actual stdout:   {_show(t.observed_stdout)}\n"
                f"  expected exit status {t.expected_exit}, got {status}"
            )
        hidden = len(failed) - MAX_FEEDBACK_DIAGNOSTICS
        if hidden > 0:
            parts.append(f"... {hidden} more failing tests omitted")
    text = "\n\n".join(parts)
    raw = text.encode("utf-8")
    if len(raw) > MAX_FEEDBACK_BYTES:
        text = raw[: MAX_FEEDBACK_BYTES - 32].decode("utf-8", errors="ignore") + "\n...[feedback truncated]"
    return text


class CargoValidator:
    """Validates snapshots by building them in fresh temporary directories.

    Results are cached by the content of the project files, so re-validating
    an identical candidate costs nothing.
    """

    def __init__(
        self,
        workroot: str | os.PathLike | None = None,
        *,
        build_command: Sequence[str] = DEFAULT_BUILD_COMMAND,
        test_timeout: float = DEFAULT_TEST_TIMEOUT,
        build_timeout: float | None = 600,
        keep_workdirs: bool = False,
        cache: bool = True,
    ):
        self.workroot = Path(workroot) if workroot else None
        self.build_command = tuple(build_command)
        self.test_timeout = test_timeout
        self.build_timeout = build_timeout
        self.keep_workdirs = keep_workdirs
        self._cache: dict[str, ValidationResult] | None = {} if cache else None
        self._lock = threading.Lock()
        self.builds = 0

    def _key(self, program: ProjectSnapshot, suite: Sequence[TestCase] | None) -> str:
        h = hashlib.sha256()
        for path in sorted(program.files):
            h.update(path.encode() + b"\0" + program.files[path].encode() + b"\0")
        h.update(repr(tuple(suite or ())).encode())
        return h.hexdigest()

    def validate(self, program: ProjectSnapshot, suite: Sequence[TestCase] | None = None) -> ValidationResult:
        key = self._key(program, suite)
        if self._cache is not None:
            with self._lock:
                hit = self._cache.get(key)
            if hit is not None:
                return hit
        if self.workroot:
            self.workroot.mkdir(parents=True, exist_ok=True)
        workdir = tempfile.mkdtemp(prefix="rsrefine-", dir=self.workroot)
        try:
            outcome = compile_project(program, workdir, self.build_command, self.build_timeout)
            with self._lock:
                self.builds += 1
            tests = None
            if outcome.success and suite:
                if not outcome.executables:
                    raise ToolchainError("build succeeded but produced no executable")
                tests = tuple(run_tests(outcome.executables[-1], suite, workdir, self.test_timeout))
            result = ValidationResult(outcome, tests, render_feedback(outcome, tests))
        finally:
            if not self.keep_workdirs:
                shutil.rmtree(workdir, ignore_errors=True)
        if self._cache is not None:
            with self._lock:
                self._cache[key] = result
        return result
