"""Event template parsing and prompt rendering.

An event template is a natural-language sentence in which every argument role
appears once as a bracketed placeholder::

    [Attacker] attacked [Target] using [Instrument] as [Place].

Parsing splits the raw text into literal and placeholder segments and records
where each placeholder sits. Rendering turns a parsed template into the prompt
string fed to the query model, together with the character span of every role
inside that string, so role queries can be pooled from the right subwords.
"""

from enum import StrEnum

from pydantic import BaseModel, Field

from pyeventfill.config import PromptVariant
from pyeventfill.exceptions import ConfigurationError, TemplateParseError, ValidationError


class SegmentKind(StrEnum):
    """Kind of template segment."""

    LITERAL = "literal"
    PLACEHOLDER = "placeholder"


class TemplateSegment(BaseModel, frozen=True):
    """One piece of a parsed template.

    Attributes:
        kind: Literal text or a role placeholder.
        text: The raw characters, brackets included for placeholders.
        role: Role name for placeholders, None for literals.
    """

    kind: SegmentKind
    text: str
    role: str | None = None


class EventTemplate(BaseModel, frozen=True):
    """A parsed event template.

    Attributes:
        raw_text: The template exactly as written.
        segments: Alternating literal and placeholder segments.
        placeholder_spans: Per role, the ``[start, end)`` offsets of ``[Role]`` in raw_text.

    Example:
        >>> template = parse_template("[Entity] met at [Place].")
        >>> template.roles
        ('Entity', 'Place')
        >>> template.placeholder_spans["Place"]
        (16, 23)
    """

    raw_text: str
    segments: tuple[TemplateSegment, ...]
    placeholder_spans: dict[str, tuple[int, int]] = Field(default_factory=dict)

    @property
    def roles(self) -> tuple[str, ...]:
        """Role names in template order."""
        return tuple(seg.role for seg in self.segments if seg.role is not None)

    def reconstruct(self) -> str:
        """Rebuild the raw text from the segments."""
        return "".join(seg.text for seg in self.segments)


class PromptRendering(BaseModel, frozen=True):
    """A rendered prompt and the location of every role inside it.

    Attributes:
        text: The prompt string.
        role_spans: Per role, ``[start, end)`` character offsets into text.
    """

    text: str
    role_spans: dict[str, tuple[int, int]] = Field(default_factory=dict)

    def role_text(self, role: str) -> str:
        """Slice the rendered text covered by a role."""
        start, end = self.role_spans[role]
        return self.text[start:end]


def parse_template(raw_text: str) -> EventTemplate:
    """Parse a bracketed event template.

    Args:
        raw_text: Template text, e.g. ``"[Entity] met at [Place]."``.

    Returns:
        The parsed EventTemplate.

    Raises:
        TemplateParseError: If the text is empty, brackets are unbalanced or
            nested, or a placeholder is empty.
        ValidationError: If a role name occurs twice.
    """
    if not raw_text:
        raise TemplateParseError("Template is empty", 0)

    segments: list[TemplateSegment] = []
    spans: dict[str, tuple[int, int]] = {}
    literal_start = 0
    open_at: int | None = None

    for pos, char in enumerate(raw_text):
        if char == "[":
            if open_at is not None:
                raise TemplateParseError("Nested '[' inside a placeholder", pos)
            if pos > literal_start:
                segments.append(
                    TemplateSegment(kind=SegmentKind.LITERAL, text=raw_text[literal_start:pos])
                )
            open_at = pos
        elif char == "]":
            if open_at is None:
                raise TemplateParseError("Unmatched ']'", pos)
            role = raw_text[open_at + 1 : pos]
            if not role.strip():
                raise TemplateParseError("Empty placeholder", open_at)
            if role in spans:
                raise ValidationError(f"Duplicate role '{role}' in template: {raw_text}")
            spans[role] = (open_at, pos + 1)
            segments.append(
                TemplateSegment(
                    kind=SegmentKind.PLACEHOLDER, text=raw_text[open_at : pos + 1], role=role
                )
            )
            open_at = None
            literal_start = pos + 1

    if open_at is not None:
        raise TemplateParseError("Unclosed '['", open_at)
    if literal_start < len(raw_text):
        segments.append(TemplateSegment(kind=SegmentKind.LITERAL, text=raw_text[literal_start:]))

    return EventTemplate(raw_text=raw_text, segments=tuple(segments), placeholder_spans=spans)


def event_type_prefix(event_type: str) -> str:
    """Render an event type name as a prompt prefix.

    Example:
        >>> event_type_prefix("Conflict:Attack")
        'Conflict Attack: '
    """
    return event_type.replace(":", " ").replace("_", " ") + ": "


def render_prompt(
    template: EventTemplate,
    variant: PromptVariant = PromptVariant.STANDARD,
    event_type_prefix_enabled: bool = False,
    role_definitions: dict[str, str] | None = None,
    event_type: str | None = None,
) -> PromptRendering:
    """Render a template as a query prompt.

    Variants:
        concatenation: role names joined by single spaces.
        standard: the template with brackets stripped around role names.
        enriched: like standard, with ``(definition)`` after every role name.

    A template without placeholders renders as its literal text under every
    variant.

    Args:
        template: Parsed template.
        variant: Prompt variant.
        event_type_prefix_enabled: Prepend ``"<Event Type>: "`` to the prompt.
        role_definitions: Role to definition map, required for ``enriched``.
        event_type: Event type name, required when the prefix is enabled.

    Returns:
        PromptRendering with one span per role.

    Raises:
        ConfigurationError: If ``enriched`` lacks a definition for some role,
            or the prefix is requested without an event type name.
    """
    prefix = ""
    if event_type_prefix_enabled:
        if event_type is None:
            raise ConfigurationError("Event type prefix requested without an event type name")
        prefix = event_type_prefix(event_type)

    roles = template.roles
    if variant is PromptVariant.ENRICHED:
        missing = [role for role in roles if role not in (role_definitions or {})]
        if missing:
            raise ConfigurationError(f"Enriched prompts need definitions for roles: {missing}")

    if not roles:
        return PromptRendering(text=prefix + template.raw_text)

    parts: list[str] = [prefix]
    cursor = len(prefix)
    spans: dict[str, tuple[int, int]] = {}

    def emit(piece: str, role: str | None = None) -> None:
        nonlocal cursor
        if role is not None:
            spans[role] = (cursor, cursor + len(piece))
        parts.append(piece)
        cursor += len(piece)

    match variant:
        case PromptVariant.CONCATENATION:
            for index, role in enumerate(roles):
                if index:
                    emit(" ")
                emit(role, role)
        case PromptVariant.STANDARD:
            for seg in template.segments:
                emit(seg.role if seg.role is not None else seg.text, seg.role)
        case PromptVariant.ENRICHED:
            definitions = role_definitions or {}
            for seg in template.segments:
                if seg.role is None:
                    emit(seg.text)
                else:
                    emit(f"{seg.role} ({definitions[seg.role]})", seg.role)

    return PromptRendering(text="".join(parts), role_spans=spans)
