"""Online harness: prompts, chat backends, answer extraction and the entity judge."""

from .backend import BackendConfig, BackendError, HTTPBackend
from .harness import DesignRun, RunSummary, judge_agent_entities, parse_answer, parse_boxed, run_agents, run_design
from .mock import MockBackend, MockServer
from .prompts import DESIGN_ROLES, NOTE_RULES, PromptBundle, design_roles, render_prompt

__all__ = [
    "BackendConfig", "BackendError", "HTTPBackend", "DesignRun", "RunSummary", "judge_agent_entities",
    "parse_answer", "parse_boxed", "run_agents", "run_design", "MockBackend", "MockServer",
    "DESIGN_ROLES", "NOTE_RULES", "PromptBundle", "design_roles", "render_prompt",
]
