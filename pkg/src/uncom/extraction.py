"""Command extraction: transcript -> (object, action, target) mentions.

Two routes produce the same result type: an external language-model
adapter whose reply is validated (and repaired when slightly off), and
a deterministic fallback grammar for the imperative tabletop register.
The fallback is what makes the engine reproducible without any model.
"""

from __future__ import annotations

import ast
import importlib.resources
import json
import re
from dataclasses import dataclass

from .errors import (
    AdapterUnavailableError,
    EmptyTranscriptError,
    NoActionError,
    UncomError,
)
from .types import CommandElements, Mention, Transcript, WordToken

VERBS = frozenset(
    """take put place stack pour move bring grab pick set drop push pass
    give slide lift shift carry flip turn hand fetch""".split()
)
DETERMINERS = frozenset("the a an this that these those".split())
PRONOUNS = frozenset("it them him her".split())
CONNECTIVES = frozenset("and then".split())
DEICTIC_ADVERBS = frozenset("here there".split())
PREP_WORDS = frozenset(
    """on onto in into inside of to top at near next beside between behind
    over above under below by front up down off toward towards""".split()
)
SUBSTITUTE_WORDS = frozenset("this that it here there thing one something".split())

# Canonical surface forms for phrasal prepositions inside actions; the
# dropped words do not contribute to the mention timespan.
ACTION_CANONICAL = {("on", "top", "of"): ("on", "top")}

SPATIAL_LEXICON = (
    ("in front of", "front"),
    ("next to", "next_to"),
    ("between", "between"),
    ("beside", "beside"),
    ("behind", "behind"),
    ("near", "near"),
    ("left", "left"),
    ("right", "right"),
)

_PUNCT = ".,!?;:\"'"

ADAPTER = "adapter"
FALLBACK = "fallback"


@dataclass(frozen=True)
class SpatialRelation:
    """A spatial-relation phrase and the anchor it positions against."""

    phrase: str
    kind: str
    anchor_text: str
    incomplete: bool = False
    two_anchor: bool = False


@dataclass(frozen=True)
class ExtractionResult:
    elements: CommandElements
    relation: SpatialRelation | None
    source: str
    flags: tuple[str, ...] = ()


def _clean_word(text: str) -> str:
    """Drop bracketed annotations and surrounding punctuation."""
    t = re.sub(r"\[[^\]]*\]?", "", text)
    t = t.replace("]", "")
    return t.strip(_PUNCT + " ")


def _norm(text: str) -> str:
    return _clean_word(text).lower()


def transcript_from_text(
    text: str, start: float = 0.5, word_duration: float = 0.4, gap: float = 0.1
) -> Transcript:
    """Build a transcript with synthetic word timing from plain text.

    Bracketed annotations like "[pointing]" are treated as non-speech
    and removed before tokenization.
    """
    cleaned = re.sub(r"\[[^\]]*\]", " ", text)
    words = []
    t = start
    for raw in cleaned.split():
        if not _clean_word(raw):
            continue
        words.append(WordToken(text=raw, start=round(t, 4), end=round(t + word_duration, 4)))
        t += word_duration + gap
    return Transcript(words=tuple(words))


def _head_word(text: str) -> str:
    words = [w for w in (_norm(p) for p in text.split()) if w]
    while words and words[0] in DETERMINERS:
        words.pop(0)
    for k in range(1, len(words)):
        if words[k] in PREP_WORDS or words[k] in CONNECTIVES:
            words = words[:k]
            break
    return words[-1] if words else ""


def classify_concreteness(mention: Mention | str) -> bool:
    """True when the mention names an object class rather than deixis.

    The head word is the last token after stripping determiners and any
    trailing prepositional tail; substitute words like "here" or
    "thing" mark the mention as not concrete.
    """
    text = mention.text if isinstance(mention, Mention) else mention
    head = _head_word(text)
    return bool(head) and head not in SUBSTITUTE_WORDS


def _strip_anchor(text: str) -> str:
    words = [_norm(w) for w in text.split() if _norm(w)]
    while words and words[0] == "of":
        words.pop(0)
    return " ".join(words)


def detect_spatial_relation(
    action_text: str, target_text: str
) -> SpatialRelation | None:
    """Longest-match scan for a spatial term, action text first.

    The anchor is the noun phrase the relation positions against: the
    text after the relation inside the target, or the whole target when
    the relation sits in the action.
    """
    for phrase, kind in SPATIAL_LEXICON:
        pattern = r"\b" + re.escape(phrase) + r"\b"
        if re.search(pattern, action_text.lower()):
            anchor = _strip_anchor(target_text)
            return _make_relation(phrase, kind, anchor)
        match = re.search(pattern, target_text.lower())
        if match:
            anchor = _strip_anchor(target_text[match.end() :])
            return _make_relation(phrase, kind, anchor)
    return None


def _make_relation(phrase: str, kind: str, anchor: str) -> SpatialRelation:
    return SpatialRelation(
        phrase=phrase,
        kind=kind,
        anchor_text=anchor,
        incomplete=not anchor,
        two_anchor=kind == "between" and " and " in f" {anchor} ",
    )


# --- fallback grammar -----------------------------------------------------

def _canonical_segment(tokens: list[WordToken]) -> tuple[str, list[WordToken]]:
    words = [_norm(t.text) for t in tokens]
    kept = list(tokens)
    for pattern, replacement in ACTION_CANONICAL.items():
        size = len(pattern)
        k = 0
        while k + size <= len(words):
            if tuple(words[k : k + size]) == pattern:
                words[k : k + size] = list(replacement)
                kept[k : k + size] = kept[k : k + len(replacement)]
                k += len(replacement)
            else:
                k += 1
    return " ".join(words), kept


def _mention_from_tokens(tokens: list[WordToken], text: str | None = None) -> Mention:
    surface = text if text is not None else " ".join(_norm(t.text) for t in tokens)
    return Mention(
        text=surface,
        timespan=(min(t.start for t in tokens), max(t.end for t in tokens)),
    )


def extract_fallback(transcript: Transcript) -> ExtractionResult:
    """Deterministic shallow grammar for imperative tabletop commands.

    Leading verb starts the action; the first noun phrase after it is
    the object; "and" plus a verb opens an action continuation whose
    prepositions stay in the action surface form; the final noun phrase
    or deictic adverb is the target. "it" pronouns are dropped.
    """
    tokens = [t for t in transcript.words if _norm(t.text)]
    if not tokens:
        raise EmptyTranscriptError("transcript has no words")
    n = len(tokens)

    first_verb = next(
        (k for k, t in enumerate(tokens) if _norm(t.text) in VERBS), None
    )
    if first_verb is None:
        raise NoActionError(f"no verb found in {transcript.text!r}")

    segments: list[list[WordToken]] = []
    object_tokens: list[WordToken] | None = None
    target_tokens: list[WordToken] | None = None

    def is_segment_boundary(k: int) -> bool:
        if _norm(tokens[k].text) not in CONNECTIVES:
            return False
        j = k + 1
        while j < n and _norm(tokens[j].text) in CONNECTIVES:
            j += 1
        return j < n and _norm(tokens[j].text) in VERBS

    def collect_action_run(segment: list[WordToken], k: int) -> int:
        while k < n:
            w = _norm(tokens[k].text)
            if w in PRONOUNS:
                k += 1
            elif w in DEICTIC_ADVERBS:
                break
            elif w in PREP_WORDS:
                segment.append(tokens[k])
                k += 1
            else:
                break
        return k

    def read_np(k: int, stop_at_preps: bool) -> tuple[list[WordToken], int]:
        dets: list[WordToken] = []
        content: list[WordToken] = []
        while k < n and _norm(tokens[k].text) in DETERMINERS:
            dets.append(tokens[k])
            k += 1
        while k < n:
            w = _norm(tokens[k].text)
            if w in DEICTIC_ADVERBS or is_segment_boundary(k):
                break
            if w in CONNECTIVES and stop_at_preps:
                break
            if stop_at_preps and w in PREP_WORDS:
                break
            content.append(tokens[k])
            k += 1
        return (content if content else dets), k

    segment = [tokens[first_verb]]
    segments.append(segment)
    i = collect_action_run(segment, first_verb + 1)
    np_tokens, i = read_np(i, stop_at_preps=True)
    if np_tokens:
        object_tokens = np_tokens

    while i < n:
        w = _norm(tokens[i].text)
        if is_segment_boundary(i):
            while _norm(tokens[i].text) in CONNECTIVES:
                i += 1
            segment = [tokens[i]]
            segments.append(segment)
            i = collect_action_run(segment, i + 1)
        elif w in DEICTIC_ADVERBS:
            target_tokens = [tokens[i]]
            i += 1
        elif w in PREP_WORDS or w in PRONOUNS:
            i = collect_action_run(segments[-1], i)
        else:
            np_tokens, i = read_np(i, stop_at_preps=False)
            if np_tokens:
                target_tokens = np_tokens
            else:
                i += 1

    parts = [_canonical_segment(seg) for seg in segments]
    action_text = ", ".join(text for text, _ in parts)
    action_tokens = [t for _, kept in parts for t in kept]
    action = _mention_from_tokens(action_tokens, action_text)

    obj = _mention_from_tokens(object_tokens) if object_tokens else None
    if obj is not None:
        obj = Mention(obj.text, obj.timespan, classify_concreteness(obj))
    target = _mention_from_tokens(target_tokens) if target_tokens else None
    if target is not None:
        target = Mention(target.text, target.timespan, classify_concreteness(target))

    elements = CommandElements(object=obj, action=action, target=target)
    relation = detect_spatial_relation(action.text, target.text if target else "")
    flags = ("ordering_violation",) if elements.ordering_violated() else ()
    return ExtractionResult(
        elements=elements, relation=relation, source=FALLBACK, flags=flags
    )


# --- adapter route --------------------------------------------------------

def load_prompts() -> tuple[str, str]:
    """The two extraction prompts sent to the language model, verbatim."""
    pkg = importlib.resources.files("uncom") / "prompts"
    return (
        (pkg / "extract_elements.txt").read_text(encoding="utf-8").strip(),
        (pkg / "refine_concreteness.txt").read_text(encoding="utf-8").strip(),
    )


def _first_balanced_object(text: str) -> str | None:
    start = text.find("{")
    while start != -1:
        depth = 0
        for k in range(start, len(text)):
            if text[k] == "{":
                depth += 1
            elif text[k] == "}":
                depth -= 1
                if depth == 0:
                    return text[start : k + 1]
        start = text.find("{", start + 1)
    return None


def _parse_reply(text: str) -> dict | None:
    for candidate in (text, _first_balanced_object(text)):
        if candidate is None:
            continue
        for loader in (json.loads, ast.literal_eval):
            try:
                obj = loader(candidate)
            except (ValueError, SyntaxError):
                continue
            if isinstance(obj, dict):
                return obj
    return None


def _mention_from_reply(raw, extent: tuple[float, float]) -> Mention | None:
    if not isinstance(raw, dict):
        return None
    text = raw.get("text")
    if not isinstance(text, str) or not text.strip():
        return None
    span = raw.get("timestamp", raw.get("timespan"))
    if (
        not isinstance(span, (list, tuple))
        or len(span) != 2
        or not all(isinstance(v, (int, float)) for v in span)
    ):
        return None
    start, end = float(span[0]), float(span[1])
    if end < start or start < extent[0] - 1e-6 or end > extent[1] + 1e-6:
        return None
    concrete = raw.get("concrete")
    if concrete is not None and not isinstance(concrete, bool):
        concrete = None
    return Mention(text=text.strip(), timespan=(start, end), concrete=concrete)


def extract_via_adapter(transcript: Transcript, adapter) -> ExtractionResult:
    """Run the two-prompt language-model extraction through ``adapter``.

    The adapter exposes ``extract(prompts, transcript) -> str``. Minor
    reply deviations (single quotes, prose around the JSON object) are
    repaired; anything that still fails validation drops to the
    deterministic fallback with source marked accordingly.
    """
    prompts = load_prompts()
    extract_fn = getattr(adapter, "extract", adapter)
    try:
        reply = extract_fn(list(prompts), transcript)
    except UncomError as exc:
        raise AdapterUnavailableError(
            f"extraction adapter failed: {exc.message}"
        ) from exc

    parsed = _parse_reply(reply if isinstance(reply, str) else "")
    if parsed is not None:
        extent = transcript.extent
        obj = _mention_from_reply(parsed.get("object"), extent)
        action = _mention_from_reply(parsed.get("action"), extent)
        target = _mention_from_reply(parsed.get("target"), extent)
        if obj is not None or action is not None or target is not None:
            if obj is not None and obj.concrete is None:
                obj = Mention(obj.text, obj.timespan, classify_concreteness(obj))
            if target is not None and target.concrete is None:
                target = Mention(
                    target.text, target.timespan, classify_concreteness(target)
                )
            elements = CommandElements(object=obj, action=action, target=target)
            relation = detect_spatial_relation(
                action.text if action else "", target.text if target else ""
            )
            flags = ("ordering_violation",) if elements.ordering_violated() else ()
            return ExtractionResult(
                elements=elements, relation=relation, source=ADAPTER, flags=flags
            )

    result = extract_fallback(transcript)
    return ExtractionResult(
        elements=result.elements,
        relation=result.relation,
        source=FALLBACK,
        flags=result.flags + ("adapter_reply_invalid",),
    )
