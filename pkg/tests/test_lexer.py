from __future__ import annotations

import pytest

from rsrefine.errors import ParseError
from rsrefine.lexer import CHAR, IDENT, LIFETIME, NUMBER, PUNCT, STRING, match_delimiters, tokenize


def kinds(text):
    return [(t.kind, t.text) for t in tokenize(text)]


class TestTokenize:
    def test_comments_dropped(self):
        assert kinds("a // x\n/* b /* nested */ c */ d") == [(IDENT, "a"), (IDENT, "d")]

    def test_lifetime_vs_char(self):
        assert kinds("'a 'b' '\\n'") == [(LIFETIME, "'a"), (CHAR, "'b'"), (CHAR, "'\\n'")]

    def test_raw_and_byte_strings(self):
        toks = tokenize('r#"say "hi""# b"x" "esc\\"aped"')
        assert [t.kind for t in toks] == [STRING, STRING, STRING]
        assert toks[0].text == 'r#"say "hi""#'

    def test_multichar_punctuation(self):
        assert [t.text for t in tokenize("a::b -> c *= d ..= e")] == ["a", "::", "b", "->", "c", "*=", "d", "..=", "e"]

    def test_numbers(self):
        assert [t.kind for t in tokenize("0x1F 1_000u32 2.5")] == [NUMBER, NUMBER, NUMBER]

    def test_line_numbers(self):
        toks = tokenize("a\n\nb")
        assert [t.line for t in toks] == [1, 3]

    def test_character_offsets(self):
        text = "é x"
        tok = tokenize(text)[1]
        assert text[tok.start:tok.end] == "x"

    def test_unterminated_string_strict(self):
        with pytest.raises(ParseError) as info:
            tokenize('let s = "open', "src/x.rs")
        assert info.value.file == "src/x.rs"

    def test_unterminated_string_lenient(self):
        toks = tokenize('let s = "open', strict=False)
        assert toks[-1].kind == STRING

    def test_punct_helper(self):
        t = tokenize("*")[0]
        assert t.kind == PUNCT and t.is_punct("*") and not t.is_kw("*")


class TestDelimiters:
    def test_pairs(self):
        toks = tokenize("f(a[1]) { }")
        pairs = match_delimiters(toks)
        assert pairs[1] == 6 and pairs[6] == 1
        assert pairs[3] == 5

    @pytest.mark.parametrize("text", ["f(", "f)", "{ ( }"])
    def test_unbalanced(self, text):
        with pytest.raises(ParseError):
            match_delimiters(tokenize(text), "m.rs")
