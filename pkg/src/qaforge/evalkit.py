"""EM/F1 scoring, dataset statistics and per-question-type analysis."""

from __future__ import annotations

import enum
import math
import re
import string
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

from .textseg import tokenize
from .translit import lat_to_cyr


class MissingPrediction(KeyError):
    def __init__(self, qid: str):
        super().__init__(qid)
        self.qid = qid

    def __str__(self):
        return f"no prediction for question {self.qid!r}"


@dataclass(frozen=True)
class NormalizationOptions:
    lowercase: bool = True
    strip_punctuation: bool = True
    collapse_whitespace: bool = True
    article_removal: bool = False
    articles: tuple[str, ...] = ("a", "an", "the")
    # "unicode": every category P character; "ascii": string.punctuation,
    # which is what the official SQuAD v1.1 script strips
    punctuation: str = "unicode"


SERBIAN = NormalizationOptions()
SQUAD_V1 = NormalizationOptions(article_removal=True, punctuation="ascii")

_ASCII_PUNCT = frozenset(string.punctuation)


def _strip_punct(text: str, mode: str) -> str:
    if mode == "ascii":
        return "".join(ch for ch in text if ch not in _ASCII_PUNCT)
    if mode == "unicode":
        return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))
    raise ValueError(f"unknown punctuation mode {mode!r}")


def normalize(text: str, opts: NormalizationOptions = SERBIAN) -> str:
    """Lowercase, drop punctuation, drop articles, collapse whitespace.

    Steps run in the order of the official SQuAD script.
    """
    if opts.lowercase:
        text = text.lower()
    if opts.strip_punctuation:
        text = _strip_punct(text, opts.punctuation)
    if opts.article_removal and opts.articles:
        pattern = r"\b(" + "|".join(map(re.escape, opts.articles)) + r")\b"
        text = re.sub(pattern, " ", text)
    if opts.collapse_whitespace:
        text = " ".join(text.split())
    return text


def _f1_tokens(pred: list[str], gold: list[str]) -> float:
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    common = Counter(pred) & Counter(gold)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = 1.0 * num_same / len(pred)
    recall = 1.0 * num_same / len(gold)
    return (2 * precision * recall) / (precision + recall)


def exact_match(prediction: str, golds: Sequence[str], opts: NormalizationOptions = SERBIAN) -> int:
    if not golds:
        raise ValueError("at least one gold answer is required")
    p = normalize(prediction, opts)
    return int(any(p == normalize(g, opts) for g in golds))


def f1(prediction: str, golds: Sequence[str], opts: NormalizationOptions = SERBIAN) -> float:
    """Best token-multiset F1 over the gold answers."""
    if not golds:
        raise ValueError("at least one gold answer is required")
    p = normalize(prediction, opts).split()
    return max(_f1_tokens(p, normalize(g, opts).split()) for g in golds)


# ---------------------------------------------------------------------------
# Question types


class QuestionCategory(str, enum.Enum):
    WHO = "Who"
    WHAT = "What"
    HOW = "How"
    WHEN = "When"
    WHERE = "Where"
    HOW_MANY = "How many"
    OTHER = "Other"


_KEYWORDS_LATIN = {
    QuestionCategory.WHO: ("Ko", "Koji", "Koje", "Koja"),
    QuestionCategory.WHAT: ("Šta",),
    QuestionCategory.HOW: ("Kako",),
    QuestionCategory.WHEN: ("Kad", "Kada"),
    QuestionCategory.WHERE: ("Gde",),
    QuestionCategory.HOW_MANY: ("Koliko", "Koliki", "Kolika"),
}
# both scripts, casefolded; dict order is the match precedence
QUESTION_KEYWORDS: dict[QuestionCategory, frozenset[str]] = {
    cat: frozenset(w.casefold() for kw in words for w in (kw, lat_to_cyr(kw)[0]))
    for cat, words in _KEYWORDS_LATIN.items()
}


def classify_question(question: str) -> QuestionCategory:
    """Category of the question's first token; ``Other`` when none matches."""
    tokens = tokenize(question).tokens
    if not tokens:
        return QuestionCategory.OTHER
    first = tokens[0].text.casefold()
    for cat, words in QUESTION_KEYWORDS.items():
        if first in words:
            return cat
    return QuestionCategory.OTHER


# ---------------------------------------------------------------------------
# Reports


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass
class CategoryRow:
    category: str
    count: int = 0
    em: float = 0.0
    f1: float = 0.0
    cl: float = 0.0
    ql: float = 0.0
    pal: float = 0.0
    ral: float = 0.0


@dataclass
class EvalReport:
    exact_match: float
    f1: float
    total: int
    categories: list[CategoryRow] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "exact_match": self.exact_match,
            "f1": self.f1,
            "total": self.total,
            "categories": [asdict(r) for r in self.categories],
        }

    def format_table(self) -> str:
        header = ("Question Type", "N", "EM[%]", "F1[%]", "CL", "QL", "PAL", "RAL")
        rows = [
            (r.category, str(r.count), f"{r.em:.2f}", f"{r.f1:.2f}", str(round_half_up(r.cl)),
             str(round_half_up(r.ql)), str(round_half_up(r.pal)), str(round_half_up(r.ral)))
            for r in self.categories
        ]
        rows.append(("Overall", str(self.total), f"{self.exact_match:.2f}", f"{self.f1:.2f}", "", "", "", ""))
        widths = [max(len(row[k]) for row in [header] + rows) for k in range(len(header))]
        lines = []
        for n, row in enumerate([header] + rows):
            cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells).rstrip())
            if n == 0:
                lines.append("-" * len(lines[0]))
        return "\n".join(lines)


def evaluate(
    predictions: Mapping[str, str],
    dataset: Mapping,
    opts: NormalizationOptions = SERBIAN,
) -> EvalReport:
    """Score ``predictions`` (question id -> answer) against ``dataset``.

    Overall EM and F1 are summed in dataset order and scaled by
    ``100 / total``, exactly like the official v1.1 script.
    """
    em_sum = 0
    f1_sum = 0.0
    total = 0
    rows = {cat: CategoryRow(cat.value) for cat in QuestionCategory}
    for article in dataset["data"]:
        for para in article["paragraphs"]:
            context = para["context"]
            for qa in para["qas"]:
                qid = qa["id"]
                if qid not in predictions:
                    raise MissingPrediction(qid)
                pred = predictions[qid]
                golds = [a["text"] for a in qa["answers"]]
                em = exact_match(pred, golds, opts)
                f = f1(pred, golds, opts)
                em_sum += em
                f1_sum += f
                total += 1
                row = rows[classify_question(qa["question"])]
                row.count += 1
                row.em += em
                row.f1 += f
                row.cl += len(context)
                row.ql += len(qa["question"])
                row.pal += len(pred)
                row.ral += len(golds[0])
    for row in rows.values():
        if row.count:
            row.em = 100.0 * row.em / row.count
            row.f1 = 100.0 * row.f1 / row.count
            row.cl /= row.count
            row.ql /= row.count
            row.pal /= row.count
            row.ral /= row.count
    if total == 0:
        return EvalReport(0.0, 0.0, 0, list(rows.values()))
    return EvalReport(100.0 * em_sum / total, 100.0 * f1_sum / total, total, list(rows.values()))


@dataclass
class DatasetStats:
    samples: int
    context_length: int
    question_length: int
    answer_length: int
    mean_context_length: float
    mean_question_length: float
    mean_answer_length: float

    def to_json(self) -> dict:
        return asdict(self)


def dataset_stats(dataset: Mapping) -> DatasetStats:
    """Sample count and mean character lengths per question sample.

    Contexts are counted once per question; the answer is the first one.
    Rounded means use round-half-up.
    """
    n = 0
    c = q = a = 0
    for article in dataset["data"]:
        for para in article["paragraphs"]:
            clen = len(para["context"])
            for qa in para["qas"]:
                n += 1
                c += clen
                q += len(qa["question"])
                a += len(qa["answers"][0]["text"]) if qa["answers"] else 0
    if n == 0:
        return DatasetStats(0, 0, 0, 0, 0.0, 0.0, 0.0)
    mc, mq, ma = c / n, q / n, a / n
    return DatasetStats(n, round_half_up(mc), round_half_up(mq), round_half_up(ma), mc, mq, ma)
