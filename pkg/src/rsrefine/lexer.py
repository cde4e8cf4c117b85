"""A small Rust tokenizer.

Good enough to find item boundaries and to count unsafe constructs in
transpiler output; it does not build an AST. Offsets are character offsets
into the input string.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError

IDENT = "ident"
LIFETIME = "lifetime"
STRING = "string"
CHAR = "char"
NUMBER = "number"
PUNCT = "punct"

KEYWORDS = frozenset(
    """as async await break const continue crate dyn else enum extern false fn for if impl in
    let loop match mod move mut pub ref return self Self static struct super trait true type
    union unsafe use where while""".split()
)

_PUNCT3 = ("<<=", ">>=", "...", "..=")
_PUNCT2 = (
    "::", "->", "=>", "==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "*=", "/=", "%=",
    "^=", "&=", "|=", "<<", ">>", "..",
)
_OPEN = {"(": ")", "[": "]", "{": "}"}
_CLOSE = {")": "(", "]": "[", "}": "{"}


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    text: str
    start: int
    end: int
    line: int

    def is_punct(self, text: str) -> bool:
        return self.kind == PUNCT and self.text == text

    def is_kw(self, text: str) -> bool:
        return self.kind == IDENT and self.text == text


def _is_ident_start(ch: str) -> bool:
    return ch == "_" or ch.isalpha()


def _is_ident_char(ch: str) -> bool:
    return ch == "_" or ch.isalnum()


def tokenize(text: str, file: str | None = None, *, strict: bool = True) -> list[Token]:
    """Split ``text`` into tokens, dropping whitespace and comments.

    With ``strict=False`` unterminated literals and comments run to end of
    input instead of raising, and stray characters are skipped.
    """
    tokens: list[Token] = []
    i = 0
    n = len(text)
    line = 1

    def fail(msg: str, pos: int) -> ParseError:
        ln = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        return ParseError(msg, file, ln, col)

    def scan_quoted(pos: int, quote: str) -> int:
        # pos points just past the opening quote; returns index past the closing quote
        while pos < n:
            ch = text[pos]
            if ch == "\\":
                pos += 2
                continue
            if ch == quote:
                return pos + 1
            pos += 1
        if strict:
            raise fail("unterminated literal", pos)
        return n

    def scan_raw(pos: int) -> int | None:
        # pos at 'r'; returns end index of raw string or None if not a raw string
        j = pos + 1
        hashes = 0
        while j < n and text[j] == "#":
            hashes += 1
            j += 1
        if j >= n or text[j] != '"':
            return None
        closer = '"' + "#" * hashes
        k = text.find(closer, j + 1)
        if k < 0:
            if strict:
                raise fail("unterminated raw string", pos)
            return n
        return k + len(closer)

    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            continue
        start = i
        if text.startswith("//", i):
            j = text.find("\n", i)
            i = n if j < 0 else j
            continue
        if text.startswith("/*", i):
            depth = 1
            j = i + 2
            while j < n and depth:
                if text.startswith("/*", j):
                    depth += 1
                    j += 2
                elif text.startswith("*/", j):
                    depth -= 1
                    j += 2
                else:
                    j += 1
            if depth and strict:
                raise fail("unterminated block comment", i)
            line += text.count("\n", i, j)
            i = j
            continue

        kind = None
        end = i
        # string-like literals with prefixes: b"", br"", r"", c"", cr""
        if ch in "bcr":
            prefix_end = i
            if ch in "bc" and i + 1 < n and text[i + 1] == "r":
                prefix_end = i + 1
            if text[prefix_end] == "r":
                raw_end = scan_raw(prefix_end)
                if raw_end is not None:
                    kind, end = STRING, raw_end
            if kind is None and ch in "bc" and i + 1 < n and text[i + 1] == '"':
                kind, end = STRING, scan_quoted(i + 2, '"')
            if kind is None and ch == "b" and i + 1 < n and text[i + 1] == "'":
                kind, end = CHAR, scan_quoted(i + 2, "'")
        if kind is None:
            if ch == '"':
                kind, end = STRING, scan_quoted(i + 1, '"')
            elif ch == "'":
                if i + 1 < n and text[i + 1] == "\\":
                    kind, end = CHAR, scan_quoted(i + 1, "'")
                elif i + 2 < n and text[i + 2] == "'":
                    kind, end = CHAR, i + 3
                elif i + 1 < n and _is_ident_start(text[i + 1]):
                    j = i + 1
                    while j < n and _is_ident_char(text[j]):
                        j += 1
                    kind, end = LIFETIME, j
                elif strict:
                    raise fail("malformed character literal", i)
                else:
                    i += 1
                    continue
            elif ch == "r" and text.startswith("r#", i) and i + 2 < n and _is_ident_start(text[i + 2]):
                j = i + 2
                while j < n and _is_ident_char(text[j]):
                    j += 1
                kind, end = IDENT, j
            elif _is_ident_start(ch):
                j = i + 1
                while j < n and _is_ident_char(text[j]):
                    j += 1
                kind, end = IDENT, j
            elif ch.isdigit():
                j = i + 1
                hexlike = text.startswith(("0x", "0X", "0b", "0o"), i)
                while j < n:
                    c = text[j]
                    if _is_ident_char(c):
                        j += 1
                    elif c == "." and j + 1 < n and text[j + 1].isdigit() and not hexlike:
                        j += 1
                    elif c in "+-" and text[j - 1] in "eE" and not hexlike:
                        j += 1
                    else:
                        break
                kind, end = NUMBER, j
            else:
                for cand in _PUNCT3 + _PUNCT2:
                    if text.startswith(cand, i):
                        kind, end = PUNCT, i + len(cand)
                        break
                else:
                    if ch in "+-*/%^!&|=<>@.,;:#$?~()[]{}":
                        kind, end = PUNCT, i + 1
                    elif strict:
                        raise fail(f"unexpected character {ch!r}", i)
                    else:
                        i += 1
                        continue
        tokens.append(Token(kind, text[start:end], start, end, line))
        line += text.count("\n", start, end)
        i = end
    return tokens


def match_delimiters(tokens: list[Token], file: str | None = None, *, strict: bool = True) -> dict[int, int]:
    """Map the index of every opening ``( [ {`` token to its closing partner (and back)."""
    pairs: dict[int, int] = {}
    stack: list[int] = []
    for idx, tok in enumerate(tokens):
        if tok.kind != PUNCT:
            continue
        if tok.text in _OPEN:
            stack.append(idx)
        elif tok.text in _CLOSE:
            if not stack or tokens[stack[-1]].text != _CLOSE[tok.text]:
                if strict:
                    raise ParseError(f"unbalanced {tok.text!r}", file, tok.line)
                continue
            open_idx = stack.pop()
            pairs[open_idx] = idx
            pairs[idx] = open_idx
    if stack and strict:
        tok = tokens[stack[-1]]
        raise ParseError(f"unclosed {tok.text!r}", file, tok.line)
    return pairs
