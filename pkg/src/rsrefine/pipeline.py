"""Whole-project refinement: baseline, per-function searches, metrics and report."""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import tomli

from .code_model import SIDECAR_NAME, ProjectSnapshot, load_project, order_by_dependency
from .errors import ConfigError, ToolchainError
from .mcts import SearchConfig, TreeSearch, Validator, dump_tree
from .refiner import HttpProvider, MockProvider, ModelPool, Provider, Refiner, ReplayProvider, TranscriptLog
from .refiner.providers import read_transcript
from .safety import (
    SafetyBaseline,
    count_constructs,
    count_linter_warnings,
    idiomaticity,
    safety_ratio,
)
from .validation import CargoValidator, CompileOutcome, TestCase, ValidationResult, load_test_suite

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
_COPY_IGNORE = shutil.ignore_patterns("target", ".git")


@dataclass(frozen=True)
class ModelSpec:
    """One entry of the model pool.

    ``kind`` is ``http`` (OpenAI-compatible endpoint), ``mock`` (scripted JSON
    file) or ``replay`` (a transcript written by an earlier run).
    """

    id: str
    kind: str = "http"
    endpoint: str | None = None
    model: str | None = None
    credentials_env: str | None = None
    temperature: float | None = None
    path: str | None = None

    def build(self, timeout: float) -> Provider:
        if self.kind == "http":
            if not self.endpoint:
                raise ConfigError(f"model {self.id}: http models need an endpoint")
            return HttpProvider(
                self.endpoint, self.model or self.id, credentials_env=self.credentials_env,
                temperature=self.temperature, timeout=timeout,
            )
        if self.kind in ("mock", "replay"):
            if not self.path:
                raise ConfigError(f"model {self.id}: {self.kind} models need a path")
            return load_offline_provider(self.path)
        raise ConfigError(f"model {self.id}: unknown kind {self.kind!r}")


@dataclass
class RunConfig:
    project_dir: Path
    output_dir: Path
    report_path: Path
    tests_file: Path | None = None
    search: SearchConfig = field(default_factory=SearchConfig)
    models: tuple[ModelSpec, ...] = ()
    build_timeout: float = 600.0
    test_timeout: float = 30.0
    model_timeout: float = 120.0
    retries: int = 2
    transcript_path: Path | None = None
    tree_dump_dir: Path | None = None
    lint: bool = False

    def __post_init__(self):
        for name in ("project_dir", "output_dir", "report_path", "tests_file", "transcript_path", "tree_dump_dir"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, Path):
                setattr(self, name, Path(value))
        self.models = tuple(self.models)

    def check(self) -> None:
        if not self.project_dir.is_dir():
            raise ConfigError(f"project directory not found: {self.project_dir}")
        if self.tests_file is not None and not self.tests_file.is_file():
            raise ConfigError(f"test suite not found: {self.tests_file}")
        if not self.models:
            raise ConfigError("no models configured")
        ids = [m.id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate model ids: {ids}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "project_dir": str(self.project_dir),
            "output_dir": str(self.output_dir),
            "report_path": str(self.report_path),
            "tests_file": str(self.tests_file) if self.tests_file else None,
            "search": asdict(self.search),
            "models": [asdict(m) for m in self.models],
            "build_timeout": self.build_timeout,
            "test_timeout": self.test_timeout,
            "model_timeout": self.model_timeout,
            "retries": self.retries,
            "transcript_path": str(self.transcript_path) if self.transcript_path else None,
            "tree_dump_dir": str(self.tree_dump_dir) if self.tree_dump_dir else None,
            "lint": self.lint,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        data = dict(data)
        data["search"] = _search_config(data.get("search") or {})
        data["models"] = tuple(ModelSpec(**m) for m in data.get("models") or ())
        return cls(**data)


def _search_config(section: Mapping[str, Any]) -> SearchConfig:
    known = {f.name for f in fields(SearchConfig)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown search settings: {sorted(unknown)}")
    try:
        return SearchConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad search settings: {exc}") from exc


def load_config(path: str | os.PathLike, **overrides: Any) -> RunConfig:
    """Read a TOML run configuration; keyword overrides win over file values.

    Layout::

        [search]       num_rollouts, uct_c, max_depth, gen_children, fix_children, reward_weight, seed
        [[models]]     id, kind, endpoint, model, credentials_env, temperature, path
        [timeouts]     build, test, model
        [paths]        project, tests, output, report, transcript, tree_dump
        [options]      lint, retries

    Relative paths are resolved against the config file's directory.
    """
    path = Path(path)
    try:
        data = tomli.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    base = path.parent

    def resolve(value):
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    paths = data.get("paths", {})
    timeouts = data.get("timeouts", {})
    options = data.get("options", {})
    models = []
    for m in data.get("models", []):
        m = dict(m)
        if m.get("path"):
            m["path"] = str(resolve(m["path"]))
        try:
            models.append(ModelSpec(**m))
        except TypeError as exc:
            raise ConfigError(f"bad model entry {m}: {exc}") from exc
    values: dict[str, Any] = {
        "project_dir": resolve(paths.get("project")),
        "tests_file": resolve(paths.get("tests")),
        "output_dir": resolve(paths.get("output", "refined")),
        "report_path": resolve(paths.get("report", "report.json")),
        "transcript_path": resolve(paths.get("transcript")),
        "tree_dump_dir": resolve(paths.get("tree_dump")),
        "search": _search_config(data.get("search", {})),
        "models": tuple(models),
        "build_timeout": float(timeouts.get("build", 600.0)),
        "test_timeout": float(timeouts.get("test", 30.0)),
        "model_timeout": float(timeouts.get("model", 120.0)),
        "retries": int(options.get("retries", 2)),
        "lint": bool(options.get("lint", False)),
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    if values["project_dir"] is None:
        raise ConfigError("no project directory given")
    return RunConfig(**values)


def load_offline_provider(path: str | os.PathLike) -> Provider:
    """A scripted mock (JSON object) or a recorded transcript (JSON lines)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = None
    if isinstance(data, dict) and ("script" in data or "rules" in data):
        return MockProvider.from_file(path)
    return ReplayProvider.from_file(path)


def build_pool(config: RunConfig, offline: str | os.PathLike | None = None) -> ModelPool:
    """Providers for every configured model; ``offline`` replaces all of them with one file."""
    if offline is not None:
        provider = load_offline_provider(offline)
        return ModelPool({m.id: provider for m in config.models})
    return ModelPool({m.id: m.build(config.model_timeout) for m in config.models})


# ---------------------------------------------------------------------------
# report


@dataclass
class FunctionRecord:
    refined: bool
    S: float
    compile_errors: int
    queries: int
    tokens: int
    rollouts: int = 0
    nodes: dict[str, int] = field(default_factory=dict)


@dataclass
class ProjectMetrics:
    SR: float | None
    FCR: float | None
    FRR: float | None
    TPR: float | None
    PCR: float
    PPR: float | None
    linter_warnings: int | None
    I: float | None
    avg_queries: float | None
    avg_tokens: float | None
    wall_time: float
    total_queries: int = 0
    total_tokens: int = 0
    tests_total: int = 0
    tests_passed: int = 0
    vacuous: list[str] = field(default_factory=list)


@dataclass
class TranslationReport:
    per_function: dict[str, FunctionRecord]
    project: ProjectMetrics
    baseline: dict[str, Any]
    final_counts: dict[str, int]
    order: list[str]
    schema_version: str = SCHEMA_VERSION

    @property
    def refined_count(self) -> int:
        return sum(1 for r in self.per_function.values() if r.refined)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "order": list(self.order),
            "baseline": self.baseline,
            "final_counts": self.final_counts,
            "per_function": {k: asdict(v) for k, v in self.per_function.items()},
            "project": asdict(self.project),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TranslationReport":
        return cls(
            per_function={k: FunctionRecord(**v) for k, v in data["per_function"].items()},
            project=ProjectMetrics(**data["project"]),
            baseline=dict(data["baseline"]),
            final_counts=dict(data["final_counts"]),
            order=list(data["order"]),
            schema_version=data["schema_version"],
        )


def report_schema() -> dict[str, Any]:
    return json.loads(resources.files("rsrefine").joinpath("report.schema.json").read_text(encoding="utf-8"))


def emit_report(report: TranslationReport, path: str | os.PathLike) -> None:
    """Write the report as JSON; floats keep their full repr precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_report(path: str | os.PathLike) -> TranslationReport:
    return TranslationReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# metrics


def _line_ranges(program: ProjectSnapshot) -> dict[str, list[tuple[str, int, int]]]:
    """Per file, the 1-based inclusive line range of every function."""
    by_file: dict[str, list[tuple[str, int, int]]] = {}
    for unit in program.function_index.values():
        raw = program.files[unit.file].encode("utf-8")
        s, e = unit.span
        first = raw.count(b"\n", 0, s) + 1
        last = raw.count(b"\n", 0, max(e - 1, s)) + 1
        by_file.setdefault(unit.file, []).append((unit.id, first, last))
    return by_file


def errors_by_function(program: ProjectSnapshot, outcome: CompileOutcome) -> dict[str, int]:
    """Compile errors per function, attributed by the error's primary location."""
    ranges = _line_ranges(program)
    counts: dict[str, int] = {}
    for err in outcome.errors:
        if err.file is None or err.line is None:
            continue
        rel = Path(err.file).as_posix()
        for uid, first, last in ranges.get(rel, ()):
            if first <= err.line <= last:
                counts[uid] = counts.get(uid, 0) + 1
    return counts


def _rate(num: int, den: int) -> float | None:
    return num / den if den else None


def compute_metrics(
    per_function: Mapping[str, FunctionRecord],
    final: ProjectSnapshot,
    final_result: ValidationResult,
    baseline: SafetyBaseline,
    *,
    linter_warnings: int | None = None,
    wall_time: float = 0.0,
) -> ProjectMetrics:
    """Project-level rates. Rates over an empty population are None and listed in ``vacuous``."""
    n = len(per_function)
    compiles = final_result.compile.success
    failing = set(errors_by_function(final, final_result.compile))
    if not compiles and not failing:
        # errors outside any function body still break every function's build
        failing = set(per_function)
    fcr = _rate(sum(1 for uid in per_function if uid not in failing), n)
    frr = _rate(sum(1 for r in per_function.values() if r.refined), n)
    tests = final_result.tests or ()
    passed = sum(1 for t in tests if t.passed)
    tpr = _rate(passed, len(tests))
    ppr = (1.0 if final_result.passed else 0.0) if tests else None
    queries = sum(r.queries for r in per_function.values())
    tokens = sum(r.tokens for r in per_function.values())
    vacuous = []
    if n == 0:
        vacuous += ["FCR", "FRR", "avg_queries", "avg_tokens"]
    if not tests:
        vacuous += ["TPR", "PPR"]
    return ProjectMetrics(
        SR=safety_ratio(count_constructs(final), baseline, compiles),
        FCR=fcr,
        FRR=frr,
        TPR=tpr,
        PCR=1.0 if compiles else 0.0,
        PPR=ppr,
        linter_warnings=linter_warnings,
        I=idiomaticity(linter_warnings, baseline) if linter_warnings is not None and baseline.linter0 is not None else None,
        avg_queries=_rate(queries, n),
        avg_tokens=_rate(tokens, n),
        wall_time=wall_time,
        total_queries=queries,
        total_tokens=tokens,
        tests_total=len(tests),
        tests_passed=passed,
        vacuous=vacuous,
    )


def _lint(program: ProjectSnapshot, timeout: float) -> int:
    with tempfile.TemporaryDirectory(prefix="rsrefine-lint-") as tmp:
        return count_linter_warnings(program, tmp, timeout=timeout)


# ---------------------------------------------------------------------------
# the run


@dataclass
class RunOutcome:
    report: TranslationReport
    program: ProjectSnapshot

    @property
    def exit_code(self) -> int:
        return 0 if self.report.refined_count > 0 else 1


def write_project(source_dir: Path, program: ProjectSnapshot, original: ProjectSnapshot, out: Path) -> None:
    """Copy the input tree to ``out`` and overwrite only files the run changed."""
    if out.exists():
        shutil.rmtree(out)
    shutil.copytree(source_dir, out, ignore=_COPY_IGNORE)
    for rel, text in program.files.items():
        if original.files.get(rel) != text:
            (out / rel).write_bytes(text.encode("utf-8"))
    stale = out / SIDECAR_NAME
    if stale.exists() and program is not original and program != original:
        # spans in the sidecar describe the input and no longer hold
        stale.unlink()


def run_translation(
    config: RunConfig,
    *,
    pool: ModelPool | None = None,
    validator: Validator | None = None,
) -> RunOutcome:
    """Refine every function in dependency order and write project, report and transcript.

    Raises ToolchainError when the input project does not compile and
    ConfigError for unusable configuration.
    """
    started = time.monotonic()
    if pool is None:
        config.check()
        pool = build_pool(config)
    project = load_project(config.project_dir)
    suite: list[TestCase] | None = load_test_suite(config.tests_file) if config.tests_file else None
    if validator is None:
        validator = CargoValidator(build_timeout=config.build_timeout, test_timeout=config.test_timeout)

    base_result = validator.validate(project, suite)
    if not base_result.compile.success:
        raise ToolchainError("input project does not compile:\n" + base_result.feedback_text)
    linter0 = _lint(project, config.build_timeout) if config.lint else None
    baseline = SafetyBaseline(count_constructs(project), linter0)

    transcript = TranscriptLog(config.transcript_path)
    transcript.append({"kind": "run", "config": config.to_dict()})
    refiner = Refiner(pool, transcript=transcript, retries=config.retries)

    order = order_by_dependency(project.function_index.values())
    current = project
    records: dict[str, FunctionRecord] = {}
    for uid in order:
        search = TreeSearch(
            current.unit(uid), current, config.search,
            refiner=refiner, validator=validator, baseline=baseline, suite=suite,
        )
        result = search.run()
        if result.found_success:
            current = result.program
        log.info("%s: %s (S=%.3f)", uid, "refined" if result.found_success else "kept", result.best.safety or 0.0)
        records[uid] = FunctionRecord(
            refined=result.found_success,
            S=result.best.safety or 0.0,
            compile_errors=0,
            queries=result.usage.queries,
            tokens=result.usage.tokens,
            rollouts=result.rollouts_used,
            nodes=dict(result.tree_stats["node_counts"]),
        )
        if config.tree_dump_dir is not None:
            config.tree_dump_dir.mkdir(parents=True, exist_ok=True)
            safe = uid.replace("/", "_").replace(":", "_").replace("#", "_")
            (config.tree_dump_dir / f"{safe}.json").write_text(
                json.dumps(dump_tree(result.root), indent=1) + "\n", encoding="utf-8"
            )

    final_result = validator.validate(current, suite)
    per_unit_errors = errors_by_function(current, final_result.compile)
    for uid, rec in records.items():
        rec.compile_errors = per_unit_errors.get(uid, 0)
    linter = _lint(current, config.build_timeout) if config.lint else None
    metrics = compute_metrics(
        records, current, final_result, baseline,
        linter_warnings=linter, wall_time=time.monotonic() - started,
    )
    report = TranslationReport(
        per_function=records,
        project=metrics,
        baseline={"counts": baseline.counts0.as_dict(), "total": baseline.counts0.total(), "linter_warnings": linter0},
        final_counts=count_constructs(current).as_dict(),
        order=list(order),
    )
    write_project(config.project_dir, current, project, config.output_dir)
    emit_report(report, config.report_path)
    return RunOutcome(report, current)


def replay_config(transcript: str | os.PathLike, **overrides: Any) -> RunConfig:
    """Rebuild the run configuration stored in a transcript's header line."""
    header, _ = read_transcript(transcript)
    if header is None:
        raise ConfigError(f"{transcript} has no run header")
    data = dict(header["config"])
    data.update({k: str(v) if isinstance(v, Path) else v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


def measure_program(
    project_dir: str | os.PathLike,
    baseline_dir: str | os.PathLike,
    *,
    lint: bool = False,
    validator: Validator | None = None,
    timeout: float = 600.0,
) -> dict[str, Any]:
    """Safety ratio (and optionally idiomaticity) of one project against a baseline project."""
    program = load_project(project_dir)
    base = load_project(baseline_dir)
    validator = validator or CargoValidator(build_timeout=timeout)
    compiles = validator.validate(program).compile.success
    baseline = SafetyBaseline(count_constructs(base), _lint(base, timeout) if lint else None)
    counts = count_constructs(program)
    out: dict[str, Any] = {
        "compiles": compiles,
        "counts": counts.as_dict(),
        "baseline_counts": baseline.counts0.as_dict(),
        "SR": safety_ratio(counts, baseline, compiles),
    }
    if lint:
        warnings = _lint(program, timeout)
        out["linter_warnings"] = warnings
        out["baseline_linter_warnings"] = baseline.linter0
        out["I"] = idiomaticity(warnings, baseline)
    return out
