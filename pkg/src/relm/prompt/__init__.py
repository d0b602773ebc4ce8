"""Prompt strategies, templating and deterministic rendering."""

from .render import (
    MES_DEFAULT_RUNS,
    AnswerSchema,
    Message,
    MoleculeRendering,
    PromptConfig,
    PromptMeta,
    RenderedPrompt,
    SchemaConflict,
    Strategy,
    StrategyKind,
    estimate_tokens,
    render,
    render_molecule,
)
from .templating import (
    SLOT_PLACEHOLDERS,
    Template,
    TemplateError,
    TemplateSet,
    default_templates,
)

__all__ = [
    "MES_DEFAULT_RUNS",
    "AnswerSchema",
    "Message",
    "MoleculeRendering",
    "PromptConfig",
    "PromptMeta",
    "RenderedPrompt",
    "SchemaConflict",
    "Strategy",
    "StrategyKind",
    "estimate_tokens",
    "render",
    "render_molecule",
    "SLOT_PLACEHOLDERS",
    "Template",
    "TemplateError",
    "TemplateSet",
    "default_templates",
]
