"""Command-line experiment suites."""

from .config import ExperimentConfig, parse_config
from .report import emit_report
from .suites import RUNNERS, RunContext, SuiteResult

__all__ = ["ExperimentConfig", "parse_config", "emit_report", "RUNNERS", "RunContext", "SuiteResult"]
