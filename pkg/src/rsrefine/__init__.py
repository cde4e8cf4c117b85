"""Search-guided refinement of transpiled unsafe Rust into safer Rust."""

from .code_model import FunctionUnit, ProjectSnapshot, load_project, order_by_dependency, substitute
from .errors import (
    ConfigError,
    ExtractionError,
    ParseError,
    ProviderError,
    RefineError,
    ToolchainError,
    UnknownFunctionError,
)
from .mcts import SearchConfig, SearchNode, SearchResult, find_best_solution, mcts_search, node_reward, uct_score
from .pipeline import RunConfig, TranslationReport, load_config, run_translation
from .safety import SafetyBaseline, UnsafeConstructCounts, count_constructs, idiomaticity, safety_ratio
from .validation import CargoValidator, ValidationResult, compile_score

__version__ = "0.1.0"

__all__ = [
    "CargoValidator",
    "ConfigError",
    "ExtractionError",
    "FunctionUnit",
    "ParseError",
    "ProjectSnapshot",
    "ProviderError",
    "RefineError",
    "RunConfig",
    "SafetyBaseline",
    "SearchConfig",
    "SearchNode",
    "SearchResult",
    "ToolchainError",
    "TranslationReport",
    "UnknownFunctionError",
    "UnsafeConstructCounts",
    "ValidationResult",
    "compile_score",
    "count_constructs",
    "find_best_solution",
    "idiomaticity",
    "load_config",
    "load_project",
    "mcts_search",
    "node_reward",
    "order_by_dependency",
    "run_translation",
    "safety_ratio",
    "substitute",
    "uct_score",
]
