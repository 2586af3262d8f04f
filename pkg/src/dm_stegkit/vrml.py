"""Span-preserving VRML97 tokenizer and the green-intensity digit channel.

Payload bits become the literal fractional digits of the second (green)
component of each RGB triple inside ``Color { color [ ... ] }`` nodes.
Re-emission splices rewritten tokens into the original text, so every
byte outside the rewritten spans is preserved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import InsufficientSlots, MissingHeader, UnbalancedBrackets
from .stego import frame_payload, unframe_payload

VRML_HEADER = "#VRML V2.0"

_TOKEN_RE = re.compile(
    r"""
    (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<number>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<punct>[{}\[\]])
  | (?P<keyword>[A-Za-z_][A-Za-z0-9_\-]*)
    """,
    re.VERBOSE,
)
_SKIP_RE = re.compile(r"[\s,]+")


@dataclass(frozen=True)
class Token:
    kind: str            # keyword | number | punct | string | comment
    start: int
    end: int
    text: str
    value: float | None = None


@dataclass
class VrmlTokenStream:
    text: str
    tokens: list[Token]
    color_green_slots: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def emit(self, replacements: dict[int, str] | None = None) -> str:
        """Rebuild the file text, substituting tokens listed by index."""
        if not replacements:
            return self.text
        parts = []
        pos = 0
        for idx in sorted(replacements):
            tok = self.tokens[idx]
            parts.append(self.text[pos:tok.start])
            parts.append(replacements[idx])
            pos = tok.end
        parts.append(self.text[pos:])
        return "".join(parts)


@dataclass(frozen=True)
class ChannelParams:
    start_slot: int = 0
    digits_per_value: int = 6

    def __post_init__(self):
        if not 1 <= self.digits_per_value <= 9:
            raise ValueError("digits_per_value must be in [1, 9]")
        if self.start_slot < 0:
            raise ValueError("start_slot must be >= 0")


def parse_vrml(text: str) -> VrmlTokenStream:
    """Tokenize a VRML97 subset and locate the rewritable green slots."""
    if not text.startswith(VRML_HEADER):
        raise MissingHeader(f"expected a {VRML_HEADER!r} header line")
    tokens = _tokenize(text)
    _check_brackets(tokens)
    stream = VrmlTokenStream(text=text, tokens=tokens)
    stream.color_green_slots = _find_green_slots(tokens)
    if not stream.color_green_slots:
        stream.warnings.append("no Color node with usable RGB triples found")
    return stream


def _tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        ws = _SKIP_RE.match(text, pos)
        if ws:
            pos = ws.end()
            continue
        m = _TOKEN_RE.match(text, pos)
        if m:
            kind = m.lastgroup
            value = float(m.group()) if kind == "number" else None
            tokens.append(Token(kind, m.start(), m.end(), m.group(), value))
            pos = m.end()
        else:
            # unknown byte: keep as punct so nothing is ever dropped
            tokens.append(Token("punct", pos, pos + 1, text[pos]))
            pos += 1
    return tokens


_BRACKET_PAIR = {"}": "{", "]": "["}


def _check_brackets(tokens):
    stack: list[Token] = []
    for tok in tokens:
        if tok.kind != "punct":
            continue
        if tok.text in "{[":
            stack.append(tok)
        elif tok.text in "}]":
            if not stack or stack[-1].text != _BRACKET_PAIR[tok.text]:
                raise UnbalancedBrackets(tok.start, f"unexpected {tok.text!r}")
            stack.pop()
    if stack:
        raise UnbalancedBrackets(stack[-1].start, f"unclosed {stack[-1].text!r}")


def _find_green_slots(tokens) -> list[int]:
    """Indices of the 2nd number of each RGB triple in Color color lists."""
    slots = []
    sig = [i for i, t in enumerate(tokens) if t.kind != "comment"]
    for si, ti in enumerate(sig):
        tok = tokens[ti]
        if tok.kind != "keyword" or tok.text != "Color":
            continue
        if si + 1 >= len(sig) or tokens[sig[si + 1]].text != "{":
            continue
        depth = 0
        j = si + 1
        while j < len(sig):
            t = tokens[sig[j]]
            if t.text == "{":
                depth += 1
            elif t.text == "}":
                depth -= 1
                if depth == 0:
                    break
            elif t.kind == "keyword" and t.text == "color" and depth == 1:
                if j + 1 < len(sig) and tokens[sig[j + 1]].text == "[":
                    j += 1
                    triple = []
                    while j + 1 < len(sig):
                        j += 1
                        t = tokens[sig[j]]
                        if t.text == "]":
                            break
                        if t.kind == "number":
                            triple.append(sig[j])
                            if len(triple) == 3:
                                green = tokens[triple[1]]
                                if green.value is not None and 0.0 <= green.value <= 1.0:
                                    slots.append(triple[1])
                                triple = []
            j += 1
    return slots


def _slot_capacity_bits(stream: VrmlTokenStream, params: ChannelParams) -> int:
    return max(0, len(stream.color_green_slots) - params.start_slot) * params.digits_per_value


def channel_capacity_bytes(stream: VrmlTokenStream, params: ChannelParams = ChannelParams()) -> int:
    """Largest payload (bytes) the stream can carry after frame overhead."""
    from .stego import FRAME_OVERHEAD

    return max(0, (_slot_capacity_bits(stream, params) - FRAME_OVERHEAD * 8) // 8)


def embed_green_digits(stream: VrmlTokenStream, payload: bytes,
                       params: ChannelParams = ChannelParams()) -> str:
    """Write a framed payload into green fractional digits; returns new text.

    Each rewritten token becomes ``0.<digits>`` where the digits are the
    literal '0'/'1' payload bits, ``digits_per_value`` per token, the last
    group right-padded with '0'.
    """
    bits = frame_payload(payload)
    k = params.digits_per_value
    needed = -(-len(bits) // k)
    slots = stream.color_green_slots[params.start_slot:]
    if needed > len(slots):
        raise InsufficientSlots(needed, len(slots))
    replacements = {}
    for g in range(needed):
        group = bits[g * k:(g + 1) * k]
        digits = "".join(str(b) for b in group).ljust(k, "0")
        replacements[slots[g]] = "0." + digits
    return stream.emit(replacements)


def extract_green_digits(text: str, params: ChannelParams = ChannelParams()) -> bytes:
    """Read green fractional digits from ``start_slot`` on and unframe them.

    Digit collection stops at the first non-binary fractional digit, since
    an embedded region is contiguous.
    """
    stream = parse_vrml(text)
    bits = []
    for idx in stream.color_green_slots[params.start_slot:]:
        tok = stream.tokens[idx]
        _, dot, frac = tok.text.partition(".")
        if not dot:
            break
        stop = False
        for ch in frac:
            if ch == "0":
                bits.append(0)
            elif ch == "1":
                bits.append(1)
            else:
                stop = True
                break
        if stop:
            break
    return unframe_payload(bits)
