"""Serbian Cyrillic <-> Latin transliteration."""

from __future__ import annotations

import enum
import unicodedata
from collections import Counter

_UPPER = {
    "А": "A", "Б": "B", "В": "V", "Г": "G", "Д": "D", "Ђ": "Đ", "Е": "E", "Ж": "Ž",
    "З": "Z", "И": "I", "Ј": "J", "К": "K", "Л": "L", "Љ": "Lj", "М": "M", "Н": "N",
    "Њ": "Nj", "О": "O", "П": "P", "Р": "R", "С": "S", "Т": "T", "Ћ": "Ć", "У": "U",
    "Ф": "F", "Х": "H", "Ц": "C", "Ч": "Č", "Џ": "Dž", "Ш": "Š",
}
CYR_TO_LAT = {**_UPPER, **{c.lower(): l.lower() for c, l in _UPPER.items()}}
DIGRAPHS = frozenset("ЉЊЏ")

LAT_TO_CYR = {lat: cyr for cyr, lat in CYR_TO_LAT.items() if len(lat) == 1}
# digraph spellings, longest match first; every casing variant
_LAT_DIGRAPHS = {}
for _cyr in "ЉЊЏ":
    _lat = CYR_TO_LAT[_cyr]
    for _variant in (_lat, _lat.upper(), _lat[0].lower() + _lat[1:].upper()):
        _LAT_DIGRAPHS[_variant] = _cyr
    _LAT_DIGRAPHS[_lat.lower()] = _cyr.lower()
# single-code-point ligatures: Ǆ ǅ ǆ Ǉ ǈ ǉ Ǌ ǋ ǌ
_LIGATURES = {
    "Ǆ": "Џ", "ǅ": "Џ", "ǆ": "џ",
    "Ǉ": "Љ", "ǈ": "Љ", "ǉ": "љ",
    "Ǌ": "Њ", "ǋ": "Њ", "ǌ": "њ",
}


class Script(str, enum.Enum):
    CYRILLIC = "Cyrillic"
    LATIN = "Latin"
    MIXED = "Mixed"
    NEUTRAL = "Neutral"


def _is_cyrillic_letter(ch: str) -> bool:
    return ch.isalpha() and unicodedata.name(ch, "").startswith("CYRILLIC")


def _is_latin_letter(ch: str) -> bool:
    return ch.isalpha() and unicodedata.name(ch, "").startswith("LATIN")


def _word_bounds(text: str, i: int) -> tuple[int, int]:
    start = i
    while start > 0 and text[start - 1].isalpha():
        start -= 1
    end = i + 1
    while end < len(text) and text[end].isalpha():
        end += 1
    return start, end


def _digraph_upper(text: str, i: int) -> bool:
    """Whether the uppercase digraph at ``text[i]`` should be fully capitalized."""
    if i + 1 < len(text) and text[i + 1].isalpha():
        return text[i + 1].isupper()
    start, end = _word_bounds(text, i)
    word = text[start:end]
    return len(word) > 1 and word.isupper()


def cyr_to_lat(text: str, tally: Counter | None = None) -> str:
    """Transliterate Serbian Cyrillic to Latin.

    Љ, Њ and Џ become ``LJ``/``NJ``/``DŽ`` when the next letter is uppercase
    or the word is all caps, otherwise ``Lj``/``Nj``/``Dž``.  Cyrillic
    letters outside the Serbian alphabet pass through unchanged and are
    counted in ``tally`` when one is given.
    """
    out = []
    for i, ch in enumerate(text):
        lat = CYR_TO_LAT.get(ch)
        if lat is None:
            if tally is not None and _is_cyrillic_letter(ch):
                tally[ch] += 1
            out.append(ch)
        elif ch in DIGRAPHS and _digraph_upper(text, i):
            out.append(lat.upper())
        else:
            out.append(lat)
    return "".join(out)


def lat_to_cyr(text: str) -> tuple[str, int]:
    """Best-effort Latin to Cyrillic.

    Digraphs ``dž``, ``lj`` and ``nj`` are always merged (greedy longest
    match), which is wrong across morpheme borders such as *nadživeti*.
    Returns the converted text and the number of merged digraphs, each of
    which is a potential false merge.
    """
    out = []
    ambiguous = 0
    i = 0
    n = len(text)
    while i < n:
        pair = text[i:i + 2]
        if len(pair) == 2 and pair in _LAT_DIGRAPHS:
            out.append(_LAT_DIGRAPHS[pair])
            ambiguous += 1
            i += 2
            continue
        ch = text[i]
        out.append(_LIGATURES.get(ch) or LAT_TO_CYR.get(ch, ch))
        i += 1
    return "".join(out), ambiguous


def detect_script(text: str) -> Script:
    has_cyr = has_lat = False
    for ch in text:
        if not has_cyr and _is_cyrillic_letter(ch):
            has_cyr = True
        elif not has_lat and _is_latin_letter(ch):
            has_lat = True
        if has_cyr and has_lat:
            return Script.MIXED
    if has_cyr:
        return Script.CYRILLIC
    if has_lat:
        return Script.LATIN
    return Script.NEUTRAL
