"""Prompt templates and response postprocessing."""

from __future__ import annotations

import re
from typing import Mapping

from ..code_model import FunctionUnit
from ..errors import ExtractionError, RefineError
from ..validation import ValidationResult

SYSTEM_PROMPT = (
    "You are an expert Rust engineer. You rewrite machine-translated unsafe Rust "
    "into safe, idiomatic Rust without changing program behaviour."
)

MAIN_TEMPLATE = """\
The Rust function below came out of an automatic C-to-Rust transpiler.
It compiles, but it is written in unsafe Rust that mirrors the original C.
Your job goes in one direction only: from unsafe Rust to safe Rust.
Do not translate anything back to C, and do not change what the function computes.
Remove raw pointers, pointer dereferences, unsafe blocks, unsafe calls and pointer
casts wherever a safe equivalent exists.

Target function:
```rust
{unsafe_rust}
```

Call sites of the target function (these are not rewritten, so the signature must stay compatible):
{call_sites}

Global variables referenced by the target function:
{global}

Imports in scope:
{import}

Reply with the complete rewritten function only, placed between <FUNC> and </FUNC>.
"""

COMPILE_REPAIR_TEMPLATE = """\
After inserting your function into the project, compilation fails with these errors:

{errors}

Fix the errors and keep the code as safe as possible.
Reply with the complete corrected function between <FUNC> and </FUNC>.
"""

TEST_REPAIR_TEMPLATE = """\
Your function compiles, but the program no longer behaves like the original on these test cases:

{failures}

Fix the behaviour and keep the code as safe as possible.
Reply with the complete corrected function between <FUNC> and </FUNC>.
"""

NONE_MARKER = "None"
_PLACEHOLDER = re.compile(r"\{([A-Za-z_]+)\}")
_OPEN = "<FUNC>"
_CLOSE = re.compile(r"<(?:/|\\)FUNC>")
_FENCE = re.compile(r"^\s*```[\w+-]*\s*$")


class PromptError(RefineError):
    pass


def render_template(template: str, values: Mapping[str, str]) -> str:
    """Fill ``{name}`` placeholders in one pass, so inserted code is never re-expanded."""
    wanted = set(_PLACEHOLDER.findall(template))
    missing = wanted - set(values)
    if missing:
        raise PromptError(f"unresolved placeholders: {sorted(missing)}")
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def _fenced(snippets: list[str]) -> str:
    if not snippets:
        return NONE_MARKER
    return "```rust\n" + "\n".join(snippets) + "\n```"


def build_prompt(unit: FunctionUnit, template: str = MAIN_TEMPLATE) -> str:
    sites = [f"// in {s.caller_id}\n{s.snippet}" for s in unit.call_sites]
    return render_template(
        template,
        {
            "unsafe_rust": unit.body,
            "call_sites": _fenced(sites),
            "global": _fenced(list(unit.globals)),
            "import": _fenced(list(unit.imports)),
        },
    )


def make_feedback_message(result: ValidationResult) -> str:
    """Compile-repair or test-repair message for a failed validation."""
    if not result.compile.success:
        return render_template(COMPILE_REPAIR_TEMPLATE, {"errors": result.feedback_text})
    if result.tests and not all(t.passed for t in result.tests):
        return render_template(TEST_REPAIR_TEMPLATE, {"failures": result.feedback_text})
    raise PromptError("feedback requested for a passing validation result")


def wrap(body: str) -> str:
    return f"{_OPEN}\n{body}\n</FUNC>"


def postprocess(response: str) -> str:
    """Extract the function between the first ``<FUNC>`` and the next closing tag.

    Accepts both ``</FUNC>`` and ``<\\FUNC>`` as the closer, drops a surrounding
    code fence and trims blank lines at either end.
    """
    start = response.find(_OPEN)
    if start < 0:
        raise ExtractionError("response has no <FUNC> delimiter")
    m = _CLOSE.search(response, start + len(_OPEN))
    if m is None:
        raise ExtractionError("response has no closing FUNC delimiter")
    lines = response[start + len(_OPEN) : m.start()].split("\n")
    while lines and not lines[0].strip():
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    if lines and _FENCE.match(lines[0]):
        lines.pop(0)
        if lines and _FENCE.match(lines[-1]):
            lines.pop()
        while lines and not lines[0].strip():
            lines.pop(0)
        while lines and not lines[-1].strip():
            lines.pop()
    body = "\n".join(lines)
    if not body.strip():
        raise ExtractionError("empty function between FUNC delimiters")
    return body
