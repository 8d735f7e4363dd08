"""Strict parser and serializer for the tagged evaluation response format.

A well-formed response is a ``<think>`` block followed by ``<type>`` and
``<quality>``, then either the three robustness flags ``<jpeg>``,
``<gaussian>``, ``<filter>`` (residual watermarks) or a single
``<security>`` level (semantic watermarks). Tag order is fixed, every
tag appears exactly once, only whitespace may sit between blocks, and
values follow an exact grammar. Anything else is rejected with the
first failure in document order; parsing never raises on untrusted
input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import ParameterError

CATEGORY_RESIDUAL = "residual"
CATEGORY_LOSSLESS = "lossless_semantic"
CATEGORY_RING = "ring_semantic"
CATEGORIES = (CATEGORY_RESIDUAL, CATEGORY_LOSSLESS, CATEGORY_RING)

TYPE_STRINGS = {
    "residual watermark": CATEGORY_RESIDUAL,
    "watermark-free or performance-lossless semantic watermark": CATEGORY_LOSSLESS,
    "semantic watermark with ring patterns": CATEGORY_RING,
}
TYPE_BY_CATEGORY = {v: k for k, v in TYPE_STRINGS.items()}

_TAG_NAMES = ("think", "type", "quality", "jpeg", "gaussian", "filter",
              "security")
_TAG_RE = re.compile(r"</?(%s)>" % "|".join(_TAG_NAMES))

_RESIDUAL_QUALITY_RE = re.compile(r"\d+(?:\.\d{1,2})?\Z", re.ASCII)
_INT_RE = re.compile(r"\d+\Z", re.ASCII)


class FailureReason(str, Enum):
    MISSING_TAG = "missing_tag"
    DUPLICATE_TAG = "duplicate_tag"
    WRONG_TAG_SET = "wrong_tag_set"
    UNPARSEABLE_VALUE = "unparseable_value"
    OUT_OF_RANGE = "out_of_range"
    TAG_ORDER = "tag_order"
    STRAY_TEXT = "stray_text"


@dataclass(frozen=True)
class FormatVerdict:
    ok: bool
    failure_reason: FailureReason | None = None
    detail: str = ""

    def __post_init__(self):
        if self.ok and self.failure_reason is not None:
            raise ParameterError("a passing verdict cannot carry a reason")
        if not self.ok and self.failure_reason is None:
            raise ParameterError("a failing verdict needs a reason")


@dataclass(frozen=True)
class ParsedResponse:
    """Fields of one well-formed response.

    Exactly the fields of the declared category are populated; the
    others stay None. ``raw_length`` is the character count of the
    source text and is ignored by equality.
    """

    think: str
    category: str
    residual_quality: float | None = None
    jpeg: int | None = None
    gaussian: int | None = None
    filter: int | None = None
    semantic_quality: int | None = None
    semantic_security: int | None = None
    raw_length: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ParameterError(f"unknown category {self.category!r}")
        if not self.think or self.think != self.think.strip():
            raise ParameterError("think text must be non-empty and stripped")
        if _TAG_RE.search(self.think):
            raise ParameterError("think text may not contain format tags")
        residual_fields = (self.residual_quality, self.jpeg, self.gaussian,
                           self.filter)
        semantic_fields = (self.semantic_quality, self.semantic_security)
        if self.category == CATEGORY_RESIDUAL:
            if any(f is None for f in residual_fields):
                raise ParameterError("residual responses need quality and "
                                     "all three robustness flags")
            if any(f is not None for f in semantic_fields):
                raise ParameterError("residual responses carry no semantic fields")
            q = float(self.residual_quality)
            if not 1.0 <= q <= 5.0 or round(q, 2) != q:
                raise ParameterError("residual quality must lie in [1, 5] "
                                     "with at most two decimals")
            for name in ("jpeg", "gaussian", "filter"):
                if getattr(self, name) not in (0, 1):
                    raise ParameterError(f"{name} flag must be 0 or 1")
        else:
            if any(f is not None for f in residual_fields):
                raise ParameterError("semantic responses carry no residual fields")
            for name, v in (("semantic_quality", self.semantic_quality),
                            ("semantic_security", self.semantic_security)):
                if v not in (1, 2, 3):
                    raise ParameterError(f"{name} must be 1, 2 or 3")


def measure_length(text: str, mode: str = "chars") -> int:
    """Length of a raw response, in characters or whitespace-split words."""
    if mode == "chars":
        return len(text)
    if mode == "words":
        return len(text.split())
    raise ParameterError(f"unknown length mode {mode!r}")


_RESIDUAL_BLOCKS = ("jpeg", "gaussian", "filter")
_SEMANTIC_BLOCKS = ("security",)


def _fail(reason: FailureReason, detail: str) -> FormatVerdict:
    return FormatVerdict(ok=False, failure_reason=reason, detail=detail)


class _Scanner:
    """Cursor over the tag tokens of one response text."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = [(m.group(1), m.group(0).startswith("</"),
                        m.start(), m.end()) for m in _TAG_RE.finditer(text)]
        self.ti = 0
        self.pos = 0
        self.completed: list[str] = []

    def _classify(self, name: str, is_close: bool, upcoming,
                  expected: str) -> FormatVerdict:
        shown = f"</{name}>" if is_close else f"<{name}>"
        if name in self.completed:
            return _fail(FailureReason.DUPLICATE_TAG, f"second {shown}")
        if name in upcoming or is_close:
            return _fail(FailureReason.TAG_ORDER,
                         f"{shown} where {expected} was expected")
        return _fail(FailureReason.WRONG_TAG_SET,
                     f"{shown} does not belong to this category")

    def read_block(self, name: str, upcoming) -> str | FormatVerdict:
        """Consume ``<name>value</name>``; returns the raw value text."""
        nxt_start = self.tokens[self.ti][2] if self.ti < len(self.tokens) \
            else len(self.text)
        if self.text[self.pos:nxt_start].strip():
            return _fail(FailureReason.STRAY_TEXT,
                         f"text outside tags before <{name}>")
        if self.ti >= len(self.tokens):
            return _fail(FailureReason.MISSING_TAG, f"missing <{name}>")
        tok_name, is_close, _, end = self.tokens[self.ti]
        if tok_name != name or is_close:
            return self._classify(tok_name, is_close, upcoming, f"<{name}>")
        self.ti += 1
        if self.ti >= len(self.tokens):
            return _fail(FailureReason.MISSING_TAG, f"missing </{name}>")
        in_name, in_close, in_start, in_end = self.tokens[self.ti]
        if not (in_name == name and in_close):
            if in_name == name:
                return _fail(FailureReason.DUPLICATE_TAG,
                             f"<{name}> nested in <{name}>")
            return _fail(FailureReason.TAG_ORDER,
                         f"<{in_name}> inside <{name}> block")
        value = self.text[end:in_start]
        self.ti += 1
        self.pos = in_end
        self.completed.append(name)
        return value

    def finish(self) -> FormatVerdict | None:
        if self.ti < len(self.tokens):
            gap_end = self.tokens[self.ti][2]
            if self.text[self.pos:gap_end].strip():
                return _fail(FailureReason.STRAY_TEXT, "text after last block")
            name, is_close, _, _ = self.tokens[self.ti]
            return self._classify(name, is_close, upcoming=(),
                                  expected="end of response")
        if self.text[self.pos:].strip():
            return _fail(FailureReason.STRAY_TEXT, "text after last block")
        return None


def _parse_residual_quality(raw: str) -> float | FormatVerdict:
    v = raw.strip()
    if not _RESIDUAL_QUALITY_RE.match(v):
        return _fail(FailureReason.UNPARSEABLE_VALUE,
                     f"quality {v!r} is not a number with <= 2 decimals")
    x = float(v)
    if not 1.0 <= x <= 5.0:
        return _fail(FailureReason.OUT_OF_RANGE, f"quality {v} outside [1, 5]")
    return x


def _parse_int(raw: str, tag: str, allowed) -> int | FormatVerdict:
    v = raw.strip()
    if not _INT_RE.match(v):
        return _fail(FailureReason.UNPARSEABLE_VALUE,
                     f"{tag} {v!r} is not an integer")
    x = int(v)
    if x not in allowed:
        return _fail(FailureReason.OUT_OF_RANGE,
                     f"{tag} {x} not in {sorted(allowed)}")
    return x


def parse(text: str) -> ParsedResponse | FormatVerdict:
    """Parse one response. Returns a ParsedResponse on success and a
    failing FormatVerdict otherwise; never raises on untrusted text."""
    sc = _Scanner(text)

    # until <type> declares the category every known tag is merely
    # misordered, not off-category
    think = sc.read_block("think", _TAG_NAMES)
    if isinstance(think, FormatVerdict):
        return think
    think = think.strip()
    if not think:
        return _fail(FailureReason.UNPARSEABLE_VALUE, "empty think block")

    type_raw = sc.read_block("type", _TAG_NAMES[1:])
    if isinstance(type_raw, FormatVerdict):
        return type_raw
    category = TYPE_STRINGS.get(type_raw.strip())
    if category is None:
        return _fail(FailureReason.UNPARSEABLE_VALUE,
                     f"unknown type {type_raw.strip()!r}")
    tail_blocks = _RESIDUAL_BLOCKS if category == CATEGORY_RESIDUAL \
        else _SEMANTIC_BLOCKS

    quality_raw = sc.read_block("quality", ("quality",) + tail_blocks)
    if isinstance(quality_raw, FormatVerdict):
        return quality_raw

    if category == CATEGORY_RESIDUAL:
        quality = _parse_residual_quality(quality_raw)
        if isinstance(quality, FormatVerdict):
            return quality
        flags = {}
        for i, tag in enumerate(_RESIDUAL_BLOCKS):
            raw = sc.read_block(tag, _RESIDUAL_BLOCKS[i:])
            if isinstance(raw, FormatVerdict):
                return raw
            value = _parse_int(raw, tag, (0, 1))
            if isinstance(value, FormatVerdict):
                return value
            flags[tag] = value
        verdict = sc.finish()
        if verdict is not None:
            return verdict
        return ParsedResponse(think=think, category=category,
                              residual_quality=quality, jpeg=flags["jpeg"],
                              gaussian=flags["gaussian"],
                              filter=flags["filter"],
                              raw_length=measure_length(text))

    quality = _parse_int(quality_raw, "quality", (1, 2, 3))
    if isinstance(quality, FormatVerdict):
        return quality
    security_raw = sc.read_block("security", _SEMANTIC_BLOCKS)
    if isinstance(security_raw, FormatVerdict):
        return security_raw
    security = _parse_int(security_raw, "security", (1, 2, 3))
    if isinstance(security, FormatVerdict):
        return security
    verdict = sc.finish()
    if verdict is not None:
        return verdict
    return ParsedResponse(think=think, category=category,
                          semantic_quality=quality,
                          semantic_security=security,
                          raw_length=measure_length(text))


def check(text: str) -> FormatVerdict:
    """Format verdict only; ok=True when ``parse`` would succeed."""
    result = parse(text)
    if isinstance(result, FormatVerdict):
        return result
    return FormatVerdict(ok=True)


def serialize(resp: ParsedResponse) -> str:
    """Canonical text for a response, one tag block per line.

    ``parse(serialize(resp))`` returns an equal response (raw_length
    aside); residual quality prints with exactly two decimals.
    """
    lines = [f"<think>{resp.think}</think>",
             f"<type>{TYPE_BY_CATEGORY[resp.category]}</type>"]
    if resp.category == CATEGORY_RESIDUAL:
        lines += [f"<quality>{resp.residual_quality:.2f}</quality>",
                  f"<jpeg>{resp.jpeg}</jpeg>",
                  f"<gaussian>{resp.gaussian}</gaussian>",
                  f"<filter>{resp.filter}</filter>"]
    else:
        lines += [f"<quality>{resp.semantic_quality}</quality>",
                  f"<security>{resp.semantic_security}</security>"]
    return "\n".join(lines)
