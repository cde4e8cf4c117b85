from __future__ import annotations

import json
from pathlib import Path

import pytest

from rsrefine.code_model import load_project, snapshot_from_files
from rsrefine.errors import ConfigError, ToolchainError
from rsrefine.toolchain import parse_cargo_json
from rsrefine.validation import (
    MAX_FEEDBACK_BYTES,
    MAX_FEEDBACK_DIAGNOSTICS,
    TIMEOUT_EXIT,
    CargoValidator,
    CompileError,
    CompileOutcome,
    TestCase,
    TestOutcome,
    ValidationResult,
    compile_project,
    is_equivalent,
    load_test_suite,
    render_feedback,
    run_tests,
)

from .conftest import needs_cargo

FIXTURES = Path(__file__).parent / "fixtures"


class TestSuiteLoading:
    def test_literal_and_file_streams(self, tmp_path):
        (tmp_path / "in.txt").write_bytes(b"from file\n")
        (tmp_path / "suite.json").write_text(json.dumps({"tests": [
            {"id": "a", "stdin": {"file": "in.txt"}, "expected_stdout": "x", "expected_exit": 2, "args": [1, "b"]},
            {"id": "b"},
        ]}))
        a, b = load_test_suite(tmp_path / "suite.json")
        assert a == TestCase("a", ("1", "b"), b"from file\n", b"x", 2)
        assert b == TestCase("b")

    def test_duplicate_ids(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"tests": [{"id": "a"}, {"id": "a"}]}))
        with pytest.raises(ConfigError):
            load_test_suite(tmp_path / "s.json")


class TestResultTypes:
    def test_success_iff_no_errors(self):
        with pytest.raises(ValueError):
            CompileOutcome(True, (CompileError(None, "x"),))
        with pytest.raises(ValueError):
            CompileOutcome(False, ())

    def test_tests_require_compile(self):
        with pytest.raises(ValueError):
            ValidationResult(CompileOutcome(False, (CompileError(None, "x"),)), ())

    def test_passed(self):
        ok = TestOutcome("t", b"", 0, True)
        bad = TestOutcome("u", b"", 1, False)
        assert ValidationResult(CompileOutcome(True), None).passed
        assert ValidationResult(CompileOutcome(True), (ok,)).passed
        assert not ValidationResult(CompileOutcome(True), (ok, bad)).passed

    def test_equivalence_vacuous(self):
        assert is_equivalent([])


class TestFeedback:
    def test_compile_errors_bounded(self):
        errs = tuple(CompileError("E0308", f"bad {i}", "src/main.rs", i) for i in range(100))
        text = render_feedback(CompileOutcome(False, errs), None)
        assert text.count("error[E0308]") == MAX_FEEDBACK_DIAGNOSTICS
        assert "60 more errors omitted" in text

    def test_size_bounded(self):
        errs = (CompileError(None, "x", rendered="y" * 50_000),)
        assert len(render_feedback(CompileOutcome(False, errs), None).encode()) <= MAX_FEEDBACK_BYTES

    def test_test_failures_listed(self):
        t = TestOutcome("t9", b"got\n", 1, False, b"want\n", 0)
        text = render_feedback(CompileOutcome(True), (t,))
        assert "t9" in text and "want" in text and "got" in text


class TestDiagnosticsParsing:
    def test_errors_and_executables(self):
        lines = [
            {"reason": "compiler-message", "message": {"level": "error", "message": "mismatched types",
             "code": {"code": "E0308"}, "spans": [{"is_primary": True, "file_name": "src/main.rs", "line_start": 4}],
             "rendered": "error[E0308]"}},
            {"reason": "compiler-message", "message": {"level": "error", "message": "aborting due to 1 previous error",
             "code": None, "spans": [], "rendered": ""}},
            {"reason": "compiler-artifact", "executable": "/t/debug/app"},
            "not json",
        ]
        stdout = "\n".join(l if isinstance(l, str) else json.dumps(l) for l in lines)
        diags, exes = parse_cargo_json(stdout)
        assert exes == ["/t/debug/app"]
        assert diags[0].code == "E0308" and diags[0].file == "src/main.rs" and diags[0].line == 4


@needs_cargo
class TestCargo:
    def test_echo_program_builds_and_runs(self, tmp_path):
        outcome = compile_project(load_project(FIXTURES / "echo"), tmp_path)
        assert outcome.success and outcome.error_count == 0
        results = run_tests(outcome.executables[-1], [TestCase("e", ("fail",), b"", b"fail\n", 3)], tmp_path)
        assert results[0].passed and results[0].observed_exit == 3

    def test_type_error_is_one_error(self, tmp_path):
        outcome = compile_project(load_project(FIXTURES / "typeerr"), tmp_path)
        assert not outcome.success
        assert outcome.error_count == 1
        err = outcome.errors[0]
        assert (err.code, err.file, err.line) == ("E0308", "src/main.rs", 2)

    def test_suite_two_of_three_pass(self):
        validator = CargoValidator()
        result = validator.validate(load_project(FIXTURES / "echo"), load_test_suite(FIXTURES / "echo" / "tests.json"))
        assert [t.passed for t in result.tests] == [True, True, False]
        assert not result.passed
        assert "test wrong failed" in result.feedback_text

    def test_cache_by_content(self):
        validator = CargoValidator()
        proj = load_project(FIXTURES / "echo")
        first = validator.validate(proj)
        second = validator.validate(load_project(FIXTURES / "echo"))
        assert first is second and validator.builds == 1

    def test_timeout_is_a_failure(self, tmp_path):
        proj = snapshot_from_files({
            "Cargo.toml": (FIXTURES / "echo" / "Cargo.toml").read_text(),
            "src/main.rs": "fn main() {\n    loop { std::thread::sleep(std::time::Duration::from_millis(50)); }\n}\n",
        })
        outcome = compile_project(proj, tmp_path)
        res = run_tests(outcome.executables[-1], [TestCase("slow")], tmp_path, timeout=0.3)
        assert res[0].timed_out and not res[0].passed and res[0].observed_exit == TIMEOUT_EXIT

    def test_empty_suite_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            run_tests(tmp_path / "x", [], tmp_path)

    def test_missing_binary(self, tmp_path):
        with pytest.raises(ToolchainError):
            run_tests(tmp_path / "missing", [TestCase("a")], tmp_path)

    def test_missing_toolchain(self, tmp_path):
        with pytest.raises(ToolchainError):
            compile_project(load_project(FIXTURES / "echo"), tmp_path, command=("no-such-cargo-binary", "build"))

    def test_empty_project(self, tmp_path):
        with pytest.raises(ToolchainError):
            compile_project(snapshot_from_files({}), tmp_path)
