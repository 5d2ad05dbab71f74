"""Prompt templates for teacher distillation and student evaluation.

Two templates are shipped as versioned resource files so rendering can be
golden-tested byte-for-byte. The simple template only asks for
step-by-step reasoning and suits small models with weak
instruction-following; the complex template adds a system message and
instructs the model to box its final answer.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

SIMPLE = "simple"
COMPLEX = "complex"
PLACEHOLDER = "{input}"

# Model-name fragments that route to the simple template by default.
_SMALL_MODEL_MARKERS = ("0.5b", "1.5b")


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt body with exactly one question placeholder."""

    id: str
    system_text: str | None
    body: str

    def __post_init__(self) -> None:
        if self.body.count(PLACEHOLDER) != 1:
            raise ValueError(
                f"template {self.id!r} must contain exactly one {PLACEHOLDER!r} placeholder"
            )
        if self.id == SIMPLE and "Let's think step by step." not in self.body:
            raise ValueError("simple template is missing its reasoning cue line")
        if self.id == COMPLEX and "put your final answer within \\boxed{}" not in self.body:
            raise ValueError("complex template is missing the boxed-answer instruction")


@dataclass(frozen=True)
class RenderedPrompt:
    """A rendered prompt, deliverable as chat messages or raw text."""

    messages: tuple[tuple[str, str], ...]

    def to_text(self) -> str:
        """Serialize for completion-style endpoints.

        A single user message passes through as-is; chat prompts are
        serialized with im_start/im_end control tokens and end with an
        open assistant turn.
        """
        if len(self.messages) == 1 and self.messages[0][0] == "user":
            return self.messages[0][1]
        parts = [f"<|im_start|>{role}\n{content}<|im_end|>" for role, content in self.messages]
        return "\n".join(parts) + "\n<|im_start|>assistant\n"


def _read_resource(name: str) -> str:
    return resources.files("w2s.resources").joinpath(name).read_text(encoding="utf-8")


def load_template(template_id: str) -> PromptTemplate:
    """Load one of the two shipped templates from its resource files."""
    if template_id == SIMPLE:
        return PromptTemplate(id=SIMPLE, system_text=None, body=_read_resource("simple.txt"))
    if template_id == COMPLEX:
        return PromptTemplate(
            id=COMPLEX,
            system_text=_read_resource("complex_system.txt"),
            body=_read_resource("complex_user.txt"),
        )
    raise ValueError(f"unknown template id {template_id!r}")


def render(template: PromptTemplate, question: str) -> RenderedPrompt:
    """Substitute the question into the template placeholder, verbatim.

    The placeholder is replaced literally (no other formatting), so
    questions containing braces or backslashes survive untouched.
    """
    if not question:
        raise ValueError("question must be nonempty")
    body = template.body.replace(PLACEHOLDER, question, 1)
    if template.system_text is None:
        return RenderedPrompt(messages=(("user", body),))
    return RenderedPrompt(messages=(("system", template.system_text), ("user", body)))


def select_template(
    model_profile: str,
    mapping: dict[str, str] | None = None,
    strict: bool = False,
) -> str:
    """Pick a template id for a model name.

    An explicit mapping wins. Without one, 0.5B/1.5B-class names get the
    simple template and everything else the complex one; strict mode
    refuses to fall back on that heuristic.
    """
    if mapping and model_profile in mapping:
        choice = mapping[model_profile]
        if choice not in (SIMPLE, COMPLEX):
            raise ValueError(f"mapping for {model_profile!r} names unknown template {choice!r}")
        return choice
    if strict:
        raise KeyError(f"model profile {model_profile!r} has no configured template")
    lowered = model_profile.lower()
    if any(marker in lowered for marker in _SMALL_MODEL_MARKERS):
        return SIMPLE
    return COMPLEX
