"""Sentence splitting, tokenization and offset maps.

Everything here is non-destructive: every token and sentence carries a
character span into the string it came from, and ``raw[span]`` gives back
the exact text.  Character indices count code points (Python ``str``
indexing), which is also what SQuAD offsets use.
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence


class Span(NamedTuple):
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start

    def slice(self, text: str) -> str:
        return text[self.start:self.end]


@dataclass(frozen=True)
class Token:
    text: str
    span: Span

    @property
    def start(self) -> int:
        return self.span.start

    @property
    def end(self) -> int:
        return self.span.end


@dataclass(frozen=True)
class TokenizedText:
    raw: str
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i: int) -> Token:
        return self.tokens[i]

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    @property
    def starts(self) -> list[int]:
        return [t.span.start for t in self.tokens]

    def token_at(self, char_index: int) -> int | None:
        """Index of the token containing ``char_index``.

        A position in whitespace resolves to the next token; ``None`` if
        there is no token at or after it.
        """
        starts = self.starts
        k = bisect.bisect_right(starts, char_index) - 1
        if k >= 0 and char_index < self.tokens[k].span.end:
            return k
        k += 1
        return k if k < len(self.tokens) else None


# ---------------------------------------------------------------------------
# Abbreviation lexicons

@lru_cache(maxsize=None)
def load_abbreviations(name: str) -> frozenset[str]:
    """Load a shipped lexicon (``"en"`` or ``"sr"``) or a lexicon file path."""
    if name in ("en", "sr"):
        text = resources.files("qaforge").joinpath(f"data/abbrev_{name}.txt").read_text("utf-8")
    else:
        text = Path(name).read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def default_abbreviations() -> frozenset[str]:
    return load_abbreviations("en") | load_abbreviations("sr")


# ---------------------------------------------------------------------------
# Sentences

_OPENERS = "\"'“‘„«([{"
_CLOSERS = "\"'”’»)]}"
# terminator run, optional closing quotes/brackets, then the whitespace gap
_BOUNDARY = re.compile(r"[.?!]+[" + re.escape(_CLOSERS) + r"]*(?=\s)")
_WS = re.compile(r"\s+")


def _starts_sentence(ch: str) -> bool:
    return ch.isupper() or ch.isdigit() or ch in _OPENERS


def _is_abbreviation(text: str, end: int, lexicon: frozenset[str], lowered: frozenset[str]) -> bool:
    # `end` is one past the period; walk back to the previous whitespace
    start = end
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    word = text[start:end].lstrip(_OPENERS)
    return word in lexicon or word.lower() in lowered


def split_sentences(text: str, abbreviations: Iterable[str] | None = None) -> list[tuple[str, Span]]:
    """Split ``text`` into sentences with spans into ``text``.

    A boundary is a run of ``.?!`` (plus closing quotes) followed by
    whitespace and then an uppercase letter, a digit or an opening quote.
    A period closing a lexicon abbreviation never ends a sentence.
    Sentence spans exclude the surrounding whitespace.
    """
    if abbreviations is None:
        lexicon = default_abbreviations()
    else:
        lexicon = frozenset(abbreviations)
    lowered = frozenset(a.lower() for a in lexicon)

    cuts = []
    for m in _BOUNDARY.finditer(text):
        gap = _WS.match(text, m.end())
        nxt = gap.end()
        if nxt >= len(text) or not _starts_sentence(text[nxt]):
            continue
        term = m.group().rstrip(_CLOSERS)
        if term == "." and _is_abbreviation(text, m.start() + 1, lexicon, lowered):
            continue
        cuts.append(m.end())

    out = []
    begin = 0
    for cut in cuts + [len(text)]:
        seg = text[begin:cut]
        stripped = seg.strip()
        if stripped:
            lead = len(seg) - len(seg.lstrip())
            span = Span(begin + lead, begin + lead + len(stripped))
            out.append((stripped, span))
        begin = cut
    return out


def trim(text: str) -> str:
    """Strip the ends and collapse interior whitespace runs to one space."""
    return " ".join(text.split())


def join_sentences(sentences: Sequence[str]) -> tuple[str, list[Span]]:
    spans = []
    pos = 0
    for s in sentences:
        spans.append(Span(pos, pos + len(s)))
        pos += len(s) + 1
    return " ".join(sentences), spans


# ---------------------------------------------------------------------------
# Tokens

_WORD_CHAR = r"[^\W_]|[\u0300-\u036f]"
_TOKEN = re.compile(
    rf"""
    \d+(?:[.,:]\d+)+                                # 1,000.5  12:30  3.14
    | (?:[^\W\d_]\.){{2,}}                           # initialisms: e.g.  U.S.
    | (?:{_WORD_CHAR}|_)+(?:[-'’](?:{_WORD_CHAR})+)*   # words, a-b, don't
    | (?P<p>[^\w\s])(?P=p)*                          # punctuation, runs of one char
    """,
    re.VERBOSE,
)


def tokenize(text: str, offset: int = 0) -> TokenizedText:
    """Split ``text`` into word and punctuation tokens.

    ``offset`` shifts every span, for tokenizing a slice of a larger text;
    ``raw`` is then still the slice.
    """
    tokens = tuple(
        Token(m.group(), Span(m.start() + offset, m.end() + offset)) for m in _TOKEN.finditer(text)
    )
    return TokenizedText(text, tokens)


def tokenize_segments(text: str, spans: Sequence[Span]) -> tuple[TokenizedText, list[int]]:
    """Tokenize each span of ``text`` and concatenate into one token stream.

    Returns the whole-text tokenization and the token count per span.
    Tokens never cross span borders.
    """
    tokens: list[Token] = []
    counts = []
    for span in spans:
        part = tokenize(span.slice(text), offset=span.start)
        tokens.extend(part.tokens)
        counts.append(len(part))
    return TokenizedText(text, tuple(tokens)), counts


def build_offset_maps(tokenized: TokenizedText) -> tuple[dict[int, int], list[Span]]:
    """Return ``(char2word, word2char)``.

    ``char2word`` maps each token's first character to its index;
    ``word2char[i]`` is the full span of token ``i``.
    """
    char2word = {t.span.start: i for i, t in enumerate(tokenized.tokens)}
    word2char = [t.span for t in tokenized.tokens]
    return char2word, word2char
