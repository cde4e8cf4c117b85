from __future__ import annotations

import filecmp
import json
import shutil
from pathlib import Path

import jsonschema
import pytest

from rsrefine.cli import main
from rsrefine.code_model import snapshot_from_files
from rsrefine.errors import ConfigError, ToolchainError
from rsrefine.pipeline import (
    FunctionRecord,
    compute_metrics,
    emit_report,
    load_config,
    load_report,
    report_schema,
    run_translation,
)
from rsrefine.refiner.providers import read_transcript
from rsrefine.safety import SafetyBaseline, UnsafeConstructCounts
from rsrefine.validation import CargoValidator, CompileError, CompileOutcome, TestOutcome, ValidationResult

from .conftest import needs_cargo

E2E = Path(__file__).parent / "fixtures" / "e2e"


def run_fixture(tmp: Path, mock: str = "mock.json", name: str = "run"):
    cfg = load_config(
        E2E / "config.toml",
        output_dir=tmp / name / "out",
        report_path=tmp / name / "report.json",
        transcript_path=tmp / name / "transcript.jsonl",
        tree_dump_dir=tmp / name / "trees",
    )
    cfg.models = tuple(type(m)(m.id, kind="mock", path=str(E2E / mock)) for m in cfg.models)
    return cfg, run_translation(cfg)


def without_wall_time(report: dict) -> dict:
    report = json.loads(json.dumps(report))
    report["project"].pop("wall_time")
    return report


def same_tree(a: Path, b: Path) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(same_tree(a / d, b / d) for d in cmp.common_dirs)


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("e2e")
    return tmp, run_fixture(tmp, name="first"), run_fixture(tmp, name="second")


@needs_cargo
class TestEndToEnd:
    def test_all_functions_refined(self, runs):
        _, (_, first), _ = runs
        project = first.report.project
        assert project.FRR == 1.0 and project.FCR == 1.0
        assert project.TPR == 1.0 and project.PCR == 1.0 and project.PPR == 1.0
        assert project.SR > 0
        assert first.exit_code == 0

    def test_hand_counted_final_safety(self, runs):
        _, (_, first), _ = runs
        # baseline: rpc 2, rpr 1, luc 8, uce 3; final: rpc 2, luc 2, uce 2
        assert first.report.baseline["total"] == 14
        assert first.report.final_counts == {"rpc": 2, "rpr": 0, "luc": 2, "uce": 2, "utc": 0}
        assert first.report.project.SR == pytest.approx(1 - 6 / 14, abs=1e-12)

    def test_output_project_compiles_and_passes(self, runs):
        tmp, (cfg, _), _ = runs
        from rsrefine.code_model import load_project
        from rsrefine.validation import load_test_suite

        result = CargoValidator().validate(load_project(cfg.output_dir), load_test_suite(cfg.tests_file))
        assert result.passed

    def test_report_schema(self, runs):
        _, (cfg, _), _ = runs
        jsonschema.validate(json.loads(cfg.report_path.read_text()), report_schema())

    def test_bit_identical_runs(self, runs):
        _, (cfg1, _), (cfg2, _) = runs
        r1 = json.loads(cfg1.report_path.read_text())
        r2 = json.loads(cfg2.report_path.read_text())
        assert without_wall_time(r1) == without_wall_time(r2)
        assert same_tree(cfg1.output_dir, cfg2.output_dir)
        assert same_tree(cfg1.tree_dump_dir, cfg2.tree_dump_dir)

    def test_transcripts_identical_apart_from_paths(self, runs):
        _, (cfg1, _), (cfg2, _) = runs
        _, recs1 = read_transcript(cfg1.transcript_path)
        _, recs2 = read_transcript(cfg2.transcript_path)
        assert recs1 == recs2

    def test_query_accounting_matches_transcript(self, runs):
        _, (cfg, out), _ = runs
        header, records = read_transcript(cfg.transcript_path)
        assert header["kind"] == "run"
        n = len(out.report.per_function)
        assert out.report.project.avg_queries * n == len(records)

    def test_one_model_repairs_the_other_succeeds_first_time(self, runs):
        _, (cfg, _), _ = runs
        _, records = read_transcript(cfg.transcript_path)
        by_model = {}
        for rec in records:
            by_model.setdefault(rec["model_id"], []).append(rec)
        repaired = [r for r in by_model["a"] if "compilation fails" in r["conversation"][-1]["content"]]
        assert repaired and all("<FUNC>" in r["response"] for r in repaired)
        assert all(len(r["conversation"]) == 2 for r in by_model["b"])

    def test_tree_dumps(self, runs):
        _, (cfg, _), _ = runs
        dumps = sorted(p.name for p in cfg.tree_dump_dir.iterdir())
        assert len(dumps) == 3
        rows = json.loads((cfg.tree_dump_dir / dumps[0]).read_text())
        assert rows[0]["type"] == "Init" and rows[0]["parent"] is None

    def test_replay_reproduces_report(self, runs):
        tmp, (cfg, _), _ = runs
        out, report = tmp / "replayed", tmp / "replayed.json"
        code = main(["replay", "--transcript", str(cfg.transcript_path), "--out", str(out), "--report", str(report)])
        assert code == 0
        assert without_wall_time(json.loads(report.read_text())) == without_wall_time(json.loads(cfg.report_path.read_text()))
        assert same_tree(out, cfg.output_dir)


@needs_cargo
class TestFallback:
    def test_all_failing_keeps_input(self, tmp_path):
        cfg, out = run_fixture(tmp_path, mock="mock_failing.json")
        assert out.exit_code == 1
        project = out.report.project
        assert project.FRR == 0.0 and project.FCR == 1.0
        assert project.SR == 0.0
        assert same_tree(E2E / "project", cfg.output_dir)
        assert all(not r.refined for r in out.report.per_function.values())

    def test_cli_exit_code_for_no_refinement(self, tmp_path):
        code = main([
            "translate", "--config", str(E2E / "config.toml"), "--mock", str(E2E / "mock_failing.json"),
            "--out", str(tmp_path / "o"), "--report", str(tmp_path / "r.json"),
        ])
        assert code == 1
        assert same_tree(E2E / "project", tmp_path / "o")

    def test_non_compiling_input_aborts(self, tmp_path):
        proj = tmp_path / "p"
        shutil.copytree(E2E / "project", proj)
        (proj / "src" / "main.rs").write_text("fn main() { let x: i32 = \"no\"; }\n")
        cfg = load_config(E2E / "config.toml", project_dir=proj, output_dir=tmp_path / "o", report_path=tmp_path / "r.json")
        with pytest.raises(ToolchainError):
            run_translation(cfg)
        code = main(["translate", "--config", str(E2E / "config.toml"), "--project", str(proj),
                     "--mock", str(E2E / "mock.json"), "--out", str(tmp_path / "o2"), "--report", str(tmp_path / "r2.json")])
        assert code == 2


@needs_cargo
class TestCli:
    def test_translate_and_metrics(self, tmp_path, capsys):
        code = main([
            "translate", "--config", str(E2E / "config.toml"), "--mock", str(E2E / "mock.json"),
            "--out", str(tmp_path / "o"), "--report", str(tmp_path / "r.json"), "--seed", "0",
        ])
        assert code == 0
        capsys.readouterr()
        assert main(["metrics", "--project", str(tmp_path / "o"), "--baseline", str(E2E / "project")]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["compiles"] and data["SR"] == pytest.approx(1 - 6 / 14)

    def test_missing_config(self, tmp_path):
        assert main(["translate", "--config", str(tmp_path / "none.toml")]) == 2

    def test_no_models_without_mock(self, tmp_path):
        assert main(["translate", "--project", str(E2E / "project")]) == 2


class TestConfig:
    def test_paths_resolve_against_config_dir(self):
        cfg = load_config(E2E / "config.toml")
        assert cfg.project_dir == E2E / "project"
        assert cfg.tests_file == E2E / "tests.json"
        assert [m.id for m in cfg.models] == ["a", "b"]
        assert cfg.search.gen_children == 4 and cfg.search.uct_c == 1.5

    def test_unknown_search_key(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('[search]\nrollouts = 3\n[paths]\nproject = "."\n')
        with pytest.raises(ConfigError):
            load_config(path)

    def test_invalid_value(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('[search]\nnum_rollouts = 0\n[paths]\nproject = "."\n')
        with pytest.raises(ConfigError):
            load_config(path)

    def test_check(self, tmp_path):
        cfg = load_config(E2E / "config.toml", project_dir=tmp_path / "missing")
        with pytest.raises(ConfigError):
            cfg.check()

    def test_round_trip_dict(self):
        from rsrefine.pipeline import RunConfig

        cfg = load_config(E2E / "config.toml")
        again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.to_dict() == cfg.to_dict()


def result(compiles: bool, passed: list[bool] | None = None, errors=()) -> ValidationResult:
    if not compiles:
        return ValidationResult(CompileOutcome(False, tuple(errors) or (CompileError(None, "x"),)))
    tests = None if passed is None else tuple(TestOutcome(f"t{i}", b"", 0, p) for i, p in enumerate(passed))
    return ValidationResult(CompileOutcome(True), tests)


def records(refined: list[bool]) -> dict[str, FunctionRecord]:
    return {f"m.rs::f{i}": FunctionRecord(r, 0.0, 0, 2, 10) for i, r in enumerate(refined)}


PROGRAM = snapshot_from_files({"m.rs": "".join(f"fn f{i}() {{\n    1;\n}}\n" for i in range(10))})
BASE = SafetyBaseline(UnsafeConstructCounts(luc=4))


class TestMetrics:
    def test_frr_counts_accepted(self):
        m = compute_metrics(records([True] * 9 + [False]), PROGRAM, result(True), BASE)
        assert m.FRR == pytest.approx(0.9) and m.FCR == 1.0
        assert m.avg_queries == 2.0 and m.avg_tokens == 10.0

    def test_tpr_counts_tests(self):
        m = compute_metrics(records([True]), PROGRAM, result(True, [True] * 8 + [False] * 2), BASE)
        assert m.TPR == pytest.approx(0.8) and m.PPR == 0.0 and m.tests_total == 10

    def test_fcr_attributes_errors_to_functions(self):
        errs = (CompileError("E1", "x", "m.rs", 4), CompileError("E1", "y", "m.rs", 8))
        m = compute_metrics(records([False] * 10), PROGRAM, result(False, errors=errs), BASE)
        assert m.FCR == pytest.approx(0.8) and m.PCR == 0.0 and m.SR == 0.0

    def test_frr_never_exceeds_fcr_when_refined_compile(self):
        m = compute_metrics(records([True, False] * 5), PROGRAM, result(True, [True]), BASE)
        assert m.FRR <= m.FCR

    def test_vacuous_rates(self):
        empty = snapshot_from_files({"lib.rs": "const A: u8 = 1;\n"})
        m = compute_metrics({}, empty, result(True), SafetyBaseline(UnsafeConstructCounts()))
        assert m.FCR is None and m.FRR is None and m.TPR is None and m.avg_queries is None
        assert set(m.vacuous) == {"FCR", "FRR", "avg_queries", "avg_tokens", "TPR", "PPR"}
        assert m.SR == 1.0


class TestReportIO:
    def test_round_trip_and_schema(self, tmp_path):
        from rsrefine.pipeline import TranslationReport

        m = compute_metrics(records([True, False]), PROGRAM, result(True, [True]), BASE, wall_time=1.5)
        report = TranslationReport(records([True, False]), m, {"counts": BASE.counts0.as_dict(), "total": 4,
                                   "linter_warnings": None}, UnsafeConstructCounts().as_dict(), ["m.rs::f0", "m.rs::f1"])
        emit_report(report, tmp_path / "r.json")
        again = load_report(tmp_path / "r.json")
        assert again.to_dict() == report.to_dict()
        jsonschema.validate(json.loads((tmp_path / "r.json").read_text()), report_schema())

    def test_empty_report_is_valid(self, tmp_path):
        from rsrefine.pipeline import TranslationReport

        m = compute_metrics({}, snapshot_from_files({}), result(True), SafetyBaseline(UnsafeConstructCounts()))
        report = TranslationReport({}, m, {"counts": UnsafeConstructCounts().as_dict(), "total": 0,
                                   "linter_warnings": None}, UnsafeConstructCounts().as_dict(), [])
        emit_report(report, tmp_path / "r.json")
        jsonschema.validate(json.loads((tmp_path / "r.json").read_text()), report_schema())

    def test_unwritable_path(self, tmp_path):
        from rsrefine.pipeline import TranslationReport

        blocker = tmp_path / "file"
        blocker.write_text("x")
        m = compute_metrics({}, snapshot_from_files({}), result(True), SafetyBaseline(UnsafeConstructCounts()))
        report = TranslationReport({}, m, {}, {}, [])
        with pytest.raises(OSError):
            emit_report(report, blocker / "r.json")
