"""Running cargo-style commands and reading their JSON diagnostics."""

from __future__ import annotations

import json
import os
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ToolchainError

DEFAULT_BUILD_COMMAND = ("cargo", "build", "--offline", "--message-format=json")
DEFAULT_LINT_COMMAND = ("cargo", "clippy", "--offline", "--message-format=json")


@dataclass(frozen=True)
class Diagnostic:
    level: str
    message: str
    code: str | None = None
    file: str | None = None
    line: int | None = None
    rendered: str = ""


@dataclass
class BuildRun:
    returncode: int
    diagnostics: list[Diagnostic] = field(default_factory=list)
    executables: list[str] = field(default_factory=list)
    stderr: str = ""


def _diagnostic(msg: dict) -> Diagnostic:
    primary = next((s for s in msg.get("spans", []) if s.get("is_primary")), None)
    code = msg.get("code")
    return Diagnostic(
        level=msg.get("level", ""),
        message=msg.get("message", ""),
        code=code.get("code") if isinstance(code, dict) else None,
        file=primary.get("file_name") if primary else None,
        line=primary.get("line_start") if primary else None,
        rendered=msg.get("rendered") or "",
    )


def parse_cargo_json(stdout: str) -> tuple[list[Diagnostic], list[str]]:
    """Extract compiler diagnostics and produced executables from ``--message-format=json`` output."""
    diags: list[Diagnostic] = []
    exes: list[str] = []
    for line in stdout.splitlines():
        line = line.strip()
        if not line.startswith("{"):
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            continue
        reason = rec.get("reason")
        if reason == "compiler-message":
            diags.append(_diagnostic(rec.get("message", {})))
        elif reason == "compiler-artifact" and rec.get("executable"):
            exes.append(rec["executable"])
    return diags, exes


def run_build(command: Sequence[str], workdir: str | os.PathLike, *, timeout: float | None = None) -> BuildRun:
    """Run a build/lint command in ``workdir``; a missing binary is a ToolchainError."""
    if not command:
        raise ToolchainError("empty build command")
    exe = shutil.which(command[0])
    if exe is None:
        raise ToolchainError(f"compiler driver not found: {command[0]}")
    env = dict(os.environ, CARGO_TERM_COLOR="never")
    env.pop("CARGO_TARGET_DIR", None)
    try:
        proc = subprocess.run(
            [exe, *command[1:]],
            cwd=Path(workdir),
            capture_output=True,
            text=True,
            timeout=timeout,
            env=env,
        )
    except subprocess.TimeoutExpired as exc:
        raise ToolchainError(f"build timed out after {timeout}s: {' '.join(command)}") from exc
    diags, exes = parse_cargo_json(proc.stdout)
    return BuildRun(proc.returncode, diags, exes, proc.stderr)


def is_error(diag: Diagnostic) -> bool:
    if diag.level not in ("error", "error: internal compiler error"):
        return False
    # rustc's trailing summary is not a diagnostic of its own
    return not diag.message.startswith("aborting due to")


def is_warning(diag: Diagnostic) -> bool:
    # summary lines ("N warnings emitted") carry no location
    return diag.level == "warning" and diag.file is not None
