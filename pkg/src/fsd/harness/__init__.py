"""Scenario replay, oracle campaigns and benchmarks for the geo pipeline."""
from .config import ConfigError, HarnessConfig, format_config, load_config, parse_config
from .oracle import OracleResult, audit_no_duplicate_send, audit_rate_limit, decision_table, oracle_check
from .replay import RunReport, replay
from .scenario import (REGIONS, Advance, Answer, CandidateReport, GeneratorConfig, ParseError,
                       QuestionArrival, format_scenario, generate_scenario, parse_scenario,
                       region_config)

__all__ = [
    "ConfigError", "HarnessConfig", "format_config", "load_config", "parse_config",
    "OracleResult", "audit_no_duplicate_send", "audit_rate_limit", "decision_table", "oracle_check",
    "RunReport", "replay", "REGIONS", "Advance", "Answer", "CandidateReport", "GeneratorConfig",
    "ParseError", "QuestionArrival", "format_scenario", "generate_scenario", "parse_scenario",
    "region_config",
]
