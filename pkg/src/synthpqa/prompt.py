"""Prompt rendering for the three answer-generation strategies.

Each strategy is a fixed template over the question's title and body; the
personalized variant adds the asker's top tags, and the contextual variant
names the community. Rendering is pure: identical inputs give byte-identical
output.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .corpus import Question, UserProfile

log = logging.getLogger(__name__)

BASIC = "basic"
PERSONALIZED = "personalized"
CONTEXTUAL = "contextual"
PROMPT_TYPES = (BASIC, PERSONALIZED, CONTEXTUAL)

BASIC_TEMPLATE = "Write an answer to the given question: Title: {title} Body: {body}."

PERSONALIZED_TEMPLATE = (
    "Write an answer to the given question: Title: {title} Body: {body}.\n"
    "Answering the question, consider that who asks the question is interested in: {tags}. "
    "Ignore the user interests if they are not relevant to the question "
    "without mentioning that you have ignored them."
)

CONTEXTUAL_TEMPLATE = (
    "Write an answer to the given question in the context of {community}: "
    "Title: {title} Body: {body}."
)

DEFAULT_TEMPLATES = {
    BASIC: BASIC_TEMPLATE,
    PERSONALIZED: PERSONALIZED_TEMPLATE,
    CONTEXTUAL: CONTEXTUAL_TEMPLATE,
}

TAG_SEPARATOR = ", "


@dataclass(frozen=True)
class RenderedPrompt:
    question_id: str
    prompt_type: str
    text: str
    model_hint: str = ""


def load_template(path: str | Path) -> str:
    """Read an override template: plain text with {title}/{body}/{tags}/{community} fields."""
    text = Path(path).read_text(encoding="utf-8")
    return text.rstrip("\n")


def render(
    question: Question,
    ptype: str,
    profile: UserProfile | None = None,
    community: str | None = None,
    templates: dict[str, str] | None = None,
) -> RenderedPrompt:
    """Render one prompt for `question` under the given strategy.

    `profile` is required for the personalized strategy; an empty profile still
    renders (with an empty tag list) but is logged, since the ignore-interests
    instruction stays in place. The contextual strategy falls back to the
    question's own community when none is given.
    """
    if ptype not in PROMPT_TYPES:
        raise ValueError(f"unknown prompt type {ptype!r}; expected one of {PROMPT_TYPES}")
    template = (templates or DEFAULT_TEMPLATES).get(ptype, DEFAULT_TEMPLATES[ptype])

    fields = {"title": question.title, "body": question.body, "tags": "", "community": ""}
    if ptype == PERSONALIZED:
        if profile is None:
            raise ValueError(f"personalized prompt for question {question.id!r} requires a profile")
        if not profile.top_tags:
            log.warning("question %s: personalized prompt rendered with an empty tag profile",
                        question.id)
        fields["tags"] = TAG_SEPARATOR.join(profile.top_tags)
    elif ptype == CONTEXTUAL:
        fields["community"] = community if community is not None else question.community

    return RenderedPrompt(question_id=question.id, prompt_type=ptype,
                          text=template.format(**fields))


def render_all(
    questions: list[Question],
    ptypes: tuple[str, ...] = PROMPT_TYPES,
    profiles: dict[str, UserProfile] | None = None,
    templates: dict[str, str] | None = None,
) -> list[RenderedPrompt]:
    """Render every requested strategy for every question, in input order."""
    profiles = profiles or {}
    out: list[RenderedPrompt] = []
    for q in questions:
        for ptype in ptypes:
            profile = profiles.get(q.user_id) if ptype == PERSONALIZED else None
            if ptype == PERSONALIZED and profile is None:
                profile = UserProfile(user_id=q.user_id, top_tags=(), as_of=0)
            out.append(render(q, ptype, profile=profile, templates=templates))
    return out
