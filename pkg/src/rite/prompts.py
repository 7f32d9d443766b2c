"""Byte-exact prompt construction with tracked segment spans.

Every prompt used by the embedding pipeline is built from a small list
of segments (fixed literals, the subject text, an optional reasoning
block). Assembly records the byte range of each segment in the final
UTF-8 string so that pooling can address, e.g., the second occurrence
of the subject in a repetition prompt without re-searching the text.

Spans are byte offsets into the UTF-8 encoding, always falling on
character boundaries because segments are concatenated whole strings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .core import ReasoningVariant
from .errors import (
    EmptySubjectError,
    InternalError,
    MissingReasoningError,
    UnexpectedReasoningError,
)


class SubjectKind(enum.Enum):
    QUERY = "query"
    PASSAGE = "passage"


class SegmentRole(enum.Enum):
    LITERAL = "literal"
    SUBJECT_TEXT = "subject"
    REASONING_SLOT = "reasoning"


@dataclass(frozen=True)
class TemplateSegment:
    role: SegmentRole
    text: str = ""

    def __post_init__(self):
        if self.role is SegmentRole.LITERAL and not self.text:
            raise InternalError("literal segment with empty text")
        if self.role is not SegmentRole.LITERAL and self.text:
            raise InternalError(f"{self.role.value} segment must not carry text")


@dataclass(frozen=True)
class PromptTemplate:
    """An ordered list of segments plus the kind of subject it binds.

    Repetition (echo-family) templates contain exactly two subject
    segments; single-occurrence templates exactly one; at most one
    reasoning slot.
    """

    segments: tuple[TemplateSegment, ...]
    subject_kind: SubjectKind

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        n_subj = self.subject_count
        if n_subj not in (1, 2):
            raise InternalError(f"template must bind the subject once or twice, got {n_subj}")
        n_slots = sum(1 for s in self.segments if s.role is SegmentRole.REASONING_SLOT)
        if n_slots > 1:
            raise InternalError("template may contain at most one reasoning slot")

    @property
    def subject_count(self) -> int:
        return sum(1 for s in self.segments if s.role is SegmentRole.SUBJECT_TEXT)

    @property
    def is_echo_family(self) -> bool:
        return self.subject_count == 2

    @property
    def has_reasoning_slot(self) -> bool:
        return any(s.role is SegmentRole.REASONING_SLOT for s in self.segments)


@dataclass(frozen=True)
class AssembledPrompt:
    """A rendered prompt with byte spans for every segment.

    ``spans[i]`` is the half-open byte range of segment ``i`` in the
    UTF-8 encoding of ``text``; spans are disjoint, ordered, and tile
    the text exactly. ``second_subject_span`` is set only for
    echo-family templates and addresses the second subject occurrence.
    """

    text: str
    spans: tuple[tuple[int, int], ...]
    second_subject_span: tuple[int, int] | None = None

    def __post_init__(self):
        pos = 0
        for start, end in self.spans:
            if start != pos or end < start:
                raise InternalError("segment spans must tile the text in order")
            pos = end
        if pos != len(self.text.encode("utf-8")):
            raise InternalError("segment spans do not cover the full text")

    def byte_slice(self, span: tuple[int, int]) -> str:
        """Decode the text addressed by a byte span."""
        return self.text.encode("utf-8")[span[0]:span[1]].decode("utf-8")


def _lit(text: str) -> TemplateSegment:
    return TemplateSegment(SegmentRole.LITERAL, text)


_SUBJECT = TemplateSegment(SegmentRole.SUBJECT_TEXT)
_REASONING = TemplateSegment(SegmentRole.REASONING_SLOT)

# The single summarizing-word instruction, shared by the PR-style templates.
_PR_INSTRUCTION = (
    "Use one most important word to represent the {kind} in a retrieval "
    'task. Make sure your word is in lowercase. The word is: "'
)


def echo_template(subject_kind: SubjectKind) -> PromptTemplate:
    """Repetition prompt: the subject appears twice.

    Renders as ``Rewrite the query: x, rewritten query: x`` (with
    "query" replaced by "passage" for document embedding).
    """
    kind = subject_kind.value
    return PromptTemplate(
        segments=(
            _lit(f"Rewrite the {kind}: "),
            _SUBJECT,
            _lit(f", rewritten {kind}: "),
            _SUBJECT,
        ),
        subject_kind=subject_kind,
    )


def pr_template(subject_kind: SubjectKind) -> PromptTemplate:
    """Single-word summarization prompt ending in an opening quote.

    The trailing quote is a plain ASCII double quote; the hidden state
    poised to generate the word after it is the embedding.
    """
    kind = subject_kind.value
    return PromptTemplate(
        segments=(
            _lit(f"{kind.capitalize()}: "),
            _SUBJECT,
            _lit(". " + _PR_INSTRUCTION.format(kind=kind)),
        ),
        subject_kind=subject_kind,
    )


_REASONING_TAILS = {
    ReasoningVariant.P1: (
        ". After thinking step by step, provide a better search query for "
        "search engine to answer the given question."
    ),
    ReasoningVariant.P2: (
        ". Think step by step to reason about what is the essential problem "
        "of this question, and what should be included in the relevant "
        "documents. Make your response concise."
    ),
    ReasoningVariant.P3: (
        ". After thinking step by step, provide a better search query for "
        "search engine to answer the given question, and identify what "
        "should be included in the relevant documents. Make your response "
        "concise."
    ),
}


def reasoning_template(variant: ReasoningVariant) -> PromptTemplate:
    """Prompt that elicits a reasoning text for a query."""
    return PromptTemplate(
        segments=(
            _lit("Query: "),
            _SUBJECT,
            _lit(_REASONING_TAILS[variant]),
        ),
        subject_kind=SubjectKind.QUERY,
    )


def rite_echo_template() -> PromptTemplate:
    """Reasoning block prepended to the query repetition prompt.

    Renders as ``<reasoning> Rewrite the query: x, rewritten query: x``
    with a single space joining the reasoning block to the template.
    """
    return PromptTemplate(
        segments=(
            _REASONING,
            _lit(" Rewrite the query: "),
            _SUBJECT,
            _lit(", rewritten query: "),
            _SUBJECT,
        ),
        subject_kind=SubjectKind.QUERY,
    )


def rite_pr_template() -> PromptTemplate:
    """Reasoning block inserted between the query and the PR instruction."""
    return PromptTemplate(
        segments=(
            _lit("Query: "),
            _SUBJECT,
            _lit(". "),
            _REASONING,
            _lit(" " + _PR_INSTRUCTION.format(kind="query")),
        ),
        subject_kind=SubjectKind.QUERY,
    )


def assemble(
    template: PromptTemplate,
    subject: str,
    reasoning: str | None = None,
) -> AssembledPrompt:
    """Render a template, recording a byte span per segment.

    Reasoning must be supplied iff the template has a reasoning slot,
    and is whitespace-trimmed before assembly; a reasoning that trims
    to nothing is rejected (callers decide fallback policy upstream).
    """
    if not subject:
        raise EmptySubjectError("subject text must be non-empty")
    if template.has_reasoning_slot:
        if reasoning is None:
            raise MissingReasoningError("template requires a reasoning text")
        reasoning = reasoning.strip()
        if not reasoning:
            raise MissingReasoningError("reasoning text is empty after trimming")
    elif reasoning is not None:
        raise UnexpectedReasoningError("template has no reasoning slot")

    parts: list[str] = []
    spans: list[tuple[int, int]] = []
    subject_spans: list[tuple[int, int]] = []
    pos = 0
    for seg in template.segments:
        if seg.role is SegmentRole.LITERAL:
            part = seg.text
        elif seg.role is SegmentRole.SUBJECT_TEXT:
            part = subject
        else:
            part = reasoning  # type: ignore[assignment]
        nbytes = len(part.encode("utf-8"))
        span = (pos, pos + nbytes)
        spans.append(span)
        if seg.role is SegmentRole.SUBJECT_TEXT:
            subject_spans.append(span)
        parts.append(part)
        pos += nbytes

    second = subject_spans[1] if template.is_echo_family else None
    return AssembledPrompt(
        text="".join(parts),
        spans=tuple(spans),
        second_subject_span=second,
    )
