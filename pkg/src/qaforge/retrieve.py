"""Answer projection and dataset assembly.

The pipeline runs per paragraph: split the source context into sentences,
translate sentences, title and questions, optionally transliterate, align
sentence pairs, lift sentence links to context-level links and map every
answer through them.  Each stage below is a plain function; the CLI
writes their outputs to files between stages, and
:func:`synthesize_dataset` chains them in memory.
"""

from __future__ import annotations

import bisect
import enum
import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .align import AlignerConfig, AlignmentLinkSet, DimensionMismatch, SYMMETRIZED, align_corpus
from .textseg import Span, TokenizedText, build_offset_maps, join_sentences, split_sentences, tokenize_segments, trim
from .translate import TranslationCache, TranslationUnit, translate_batch
from .translit import cyr_to_lat, lat_to_cyr

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Input is not a well-formed SQuAD v1.1 dataset."""


class DropReason(str, enum.Enum):
    NO_ALIGNMENT = "NoAlignment"
    TRANSLATION_FAILED = "TranslationFailed"
    EMPTY_ANSWER = "EmptyAnswer"
    OFFSET_ERROR = "OffsetError"


@dataclass(frozen=True)
class DropRecord:
    id: str
    reason: DropReason
    detail: str = ""

    def to_json(self) -> dict:
        return {"id": self.id, "reason": self.reason.value, "detail": self.detail}

    @classmethod
    def from_json(cls, rec: Mapping) -> "DropRecord":
        return cls(rec["id"], DropReason(rec["reason"]), rec.get("detail", ""))


class Dropped(Exception):
    def __init__(self, reason: DropReason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason
        self.detail = detail


class OffsetError(Dropped):
    def __init__(self, detail: str):
        super().__init__(DropReason.OFFSET_ERROR, detail)


@dataclass
class QaSample:
    id: str
    title: str
    context: str
    question: str
    answer_text: str
    answer_start: int

    def is_consistent(self) -> bool:
        end = self.answer_start + len(self.answer_text)
        return 0 <= self.answer_start and end <= len(self.context) and self.context[self.answer_start:end] == self.answer_text


# ---------------------------------------------------------------------------
# Context-level alignment and extraction


def build_context_alignment(
    sentence_alignments: Sequence[AlignmentLinkSet],
    src_token_counts: Sequence[int],
    tgt_token_counts: Sequence[int],
) -> AlignmentLinkSet:
    """Shift each sentence's links by the token counts of the sentences before it."""
    if not (len(sentence_alignments) == len(src_token_counts) == len(tgt_token_counts)):
        raise DimensionMismatch(
            f"{len(sentence_alignments)} alignments for {len(src_token_counts)}/{len(tgt_token_counts)} sentences"
        )
    links = set()
    src_off = tgt_off = 0
    for k, (a, ns, nt) in enumerate(zip(sentence_alignments, src_token_counts, tgt_token_counts)):
        for i, j in a.links:
            if i >= ns or j >= nt:
                raise DimensionMismatch(f"sentence {k}: link {i}-{j} outside {ns}x{nt}")
            links.add((i + src_off, j + tgt_off))
        src_off += ns
        tgt_off += nt
    return AlignmentLinkSet(frozenset(links), SYMMETRIZED, src_off, tgt_off)


def source_answer_words(answer_text: str, answer_start: int, source: TokenizedText) -> range:
    """Token indices covered by the answer's character range.

    A start that falls inside a token snaps to that token.
    """
    char2word, _ = build_offset_maps(source)
    end = answer_start + len(answer_text)
    if answer_start in char2word:
        first = char2word[answer_start]
    else:
        first = source.token_at(answer_start)
    last = bisect.bisect_left(source.starts, end) - 1
    if first is None or last < first:
        return range(0)
    return range(first, last + 1)


def extract_answer(
    answer_text: str,
    answer_start: int,
    source: TokenizedText,
    alignment: AlignmentLinkSet,
    target: TokenizedText,
) -> tuple[str, int]:
    """Project a source answer span onto the target context.

    Collects the target words linked to any source answer word and takes
    the character range from the smallest to the largest of them.
    Raises :class:`Dropped` (``NoAlignment``, ``EmptyAnswer``) or
    :class:`OffsetError`.
    """
    if not answer_text.strip():
        raise Dropped(DropReason.EMPTY_ANSWER, "blank source answer")
    if answer_start < 0 or answer_start + len(answer_text) > len(source.raw):
        raise OffsetError(f"source answer at {answer_start} escapes context of length {len(source.raw)}")
    words = source_answer_words(answer_text, answer_start, source)
    if not words:
        raise Dropped(DropReason.EMPTY_ANSWER, "answer covers no source token")
    targets = sorted(j for i, j in alignment.links if i in words)
    if not targets:
        raise Dropped(DropReason.NO_ALIGNMENT)
    _, word2char = build_offset_maps(target)
    if targets[-1] >= len(word2char):
        raise OffsetError(f"target word {targets[-1]} beyond {len(word2char)} tokens")
    start = word2char[targets[0]].start
    end = word2char[targets[-1]].end
    if end > len(target.raw) or start >= end:
        raise OffsetError(f"span {start}..{end} escapes target context of length {len(target.raw)}")
    return target.raw[start:end], start


def is_punctuation_only(text: str) -> bool:
    return all(unicodedata.category(ch).startswith("P") or ch.isspace() for ch in text)


# ---------------------------------------------------------------------------
# Stages


@dataclass
class Paragraph:
    pid: str
    article: int
    title: str
    context: str
    sentences: list[Span]
    qas: list[dict]

    def to_json(self) -> dict:
        return {
            "pid": self.pid,
            "article": self.article,
            "title": self.title,
            "context": self.context,
            "sentences": [list(s) for s in self.sentences],
            "qas": self.qas,
        }

    @classmethod
    def from_json(cls, rec: Mapping) -> "Paragraph":
        return cls(rec["pid"], rec["article"], rec["title"], rec["context"],
                   [Span(*s) for s in rec["sentences"]], rec["qas"])


def validate_squad(dataset: Any) -> None:
    try:
        if not isinstance(dataset["data"], list):
            raise TypeError("data is not a list")
        for a, article in enumerate(dataset["data"]):
            if not isinstance(article["title"], str):
                raise TypeError(f"article {a}: title is not a string")
            for p, para in enumerate(article["paragraphs"]):
                if not isinstance(para["context"], str):
                    raise TypeError(f"article {a} paragraph {p}: context is not a string")
                for qa in para["qas"]:
                    if not isinstance(qa["id"], str) or not isinstance(qa["question"], str):
                        raise TypeError(f"article {a} paragraph {p}: bad qa entry")
                    for ans in qa["answers"]:
                        if not isinstance(ans["text"], str) or not isinstance(ans["answer_start"], int):
                            raise TypeError(f"qa {qa['id']}: bad answer entry")
    except (KeyError, TypeError, IndexError) as exc:
        raise DatasetError(f"not a SQuAD v1.1 dataset: {exc}") from None


def iter_samples(dataset: Mapping):
    """Yield ``(title, context, qa)`` for every question."""
    for article in dataset["data"]:
        for para in article["paragraphs"]:
            for qa in para["qas"]:
                yield article["title"], para["context"], qa


def segment_dataset(dataset: Mapping, abbreviations: Sequence[str] | None = None) -> list[Paragraph]:
    """Split stage: one record per paragraph with its sentence spans."""
    validate_squad(dataset)
    out = []
    for a, article in enumerate(dataset["data"]):
        for p, para in enumerate(article["paragraphs"]):
            context = para["context"]
            spans = [span for _, span in split_sentences(context, abbreviations)] if context.strip() else []
            out.append(Paragraph(f"{a}.{p}", a, article["title"], context, spans, para["qas"]))
    return out


def title_unit_id(article: int) -> str:
    return f"t:{article}"


def sentence_unit_id(pid: str, k: int) -> str:
    return f"c:{pid}.{k}"


def question_unit_id(qid: str) -> str:
    return f"q:{qid}"


def translation_units(paragraphs: Sequence[Paragraph], src_lang: str, tgt_lang: str) -> list[TranslationUnit]:
    units = []
    seen_articles = set()
    for para in paragraphs:
        if para.article not in seen_articles:
            seen_articles.add(para.article)
            units.append(TranslationUnit(title_unit_id(para.article), trim(para.title), src_lang, tgt_lang))
        for k, span in enumerate(para.sentences):
            units.append(TranslationUnit(sentence_unit_id(para.pid, k), trim(span.slice(para.context)), src_lang, tgt_lang))
        for qa in para.qas:
            units.append(TranslationUnit(question_unit_id(qa["id"]), trim(qa["question"]), src_lang, tgt_lang))
    return units


TRANSLIT_MODES = ("off", "latin", "cyrillic")


def transliterate_texts(texts: Mapping[str, str], mode: str) -> dict[str, str]:
    if mode not in TRANSLIT_MODES:
        raise ValueError(f"transliteration mode must be one of {TRANSLIT_MODES}, got {mode!r}")
    if mode == "off":
        return dict(texts)
    if mode == "latin":
        tally: Counter = Counter()
        out = {k: cyr_to_lat(v, tally) for k, v in texts.items()}
        if tally:
            logger.warning("left %d non-Serbian Cyrillic letters untouched: %s",
                           sum(tally.values()), "".join(sorted(tally)))
        return out
    ambiguous = 0
    out = {}
    for k, v in texts.items():
        out[k], n = lat_to_cyr(v)
        ambiguous += n
    if ambiguous:
        logger.warning("%d Latin digraphs merged; some may be false merges", ambiguous)
    return out


def _target_sentences(para: Paragraph, texts: Mapping[str, str]) -> list[str] | None:
    out = []
    for k in range(len(para.sentences)):
        t = trim(texts.get(sentence_unit_id(para.pid, k), ""))
        if not t:
            return None
        out.append(t)
    return out


@dataclass
class _Sides:
    source: TokenizedText
    src_counts: list[int]
    target: TokenizedText | None = None
    tgt_counts: list[int] = field(default_factory=list)


def _tokenize_paragraph(para: Paragraph, texts: Mapping[str, str]) -> _Sides:
    source, src_counts = tokenize_segments(para.context, para.sentences)
    sides = _Sides(source, src_counts)
    sentences = _target_sentences(para, texts)
    if sentences is not None:
        context, spans = join_sentences(sentences)
        sides.target, sides.tgt_counts = tokenize_segments(context, spans)
    return sides


def alignment_corpus(paragraphs: Sequence[Paragraph], texts: Mapping[str, str]) -> list[tuple[list[str], list[str]]]:
    """One token pair per source sentence, in paragraph order.

    Sentences of paragraphs whose translation failed get an empty target
    side so that line numbers stay aligned with the split stage.
    """
    corpus = []
    for para in paragraphs:
        sides = _tokenize_paragraph(para, texts)
        src_words = sides.source.texts
        tgt_words = sides.target.texts if sides.target is not None else []
        s_off = t_off = 0
        for k, ns in enumerate(sides.src_counts):
            nt = sides.tgt_counts[k] if sides.target is not None else 0
            corpus.append((src_words[s_off:s_off + ns], tgt_words[t_off:t_off + nt]))
            s_off += ns
            t_off += nt
    return corpus


def align_stage(corpus, config: AlignerConfig) -> list[AlignmentLinkSet]:
    if not any(s and t for s, t in corpus):
        return [AlignmentLinkSet(frozenset(), SYMMETRIZED, len(s), len(t)) for s, t in corpus]
    return align_corpus(corpus, config)


def retrieve_dataset(
    paragraphs: Sequence[Paragraph],
    texts: Mapping[str, str],
    alignments: Sequence[AlignmentLinkSet],
    version: str = "1.1",
    drop_punctuation_answers: bool = False,
) -> tuple[dict, list[DropRecord]]:
    """Assemble the target-language dataset.

    ``alignments`` holds one link set per source sentence, in the order of
    :func:`alignment_corpus`.  Returns the SQuAD-format dataset and one
    drop record per sample that did not make it.
    """
    n_sent = sum(len(p.sentences) for p in paragraphs)
    if len(alignments) != n_sent:
        raise DimensionMismatch(f"{len(alignments)} alignment lines for {n_sent} sentences")

    data: list[dict] = []
    by_article: dict[int, dict] = {}
    drops: list[DropRecord] = []
    cursor = 0
    for para in paragraphs:
        sent_align = alignments[cursor:cursor + len(para.sentences)]
        cursor += len(para.sentences)
        sides = _tokenize_paragraph(para, texts)
        title = trim(texts.get(title_unit_id(para.article), ""))
        failed: tuple[DropReason, str] | None = None
        ctx_align = None
        if sides.target is None:
            failed = (DropReason.TRANSLATION_FAILED, "context sentence translation empty")
        elif not title:
            failed = (DropReason.TRANSLATION_FAILED, "title translation empty")
        else:
            try:
                ctx_align = build_context_alignment(sent_align, sides.src_counts, sides.tgt_counts)
            except DimensionMismatch as exc:
                failed = (DropReason.OFFSET_ERROR, f"alignment does not fit paragraph {para.pid}: {exc}")

        kept = []
        for qa in para.qas:
            qid = qa["id"]
            if failed is not None:
                drops.append(DropRecord(qid, *failed))
                continue
            question = texts.get(question_unit_id(qid), "")
            if not question.strip():
                drops.append(DropRecord(qid, DropReason.TRANSLATION_FAILED, "question translation empty"))
                continue
            if not qa["answers"]:
                drops.append(DropRecord(qid, DropReason.EMPTY_ANSWER, "no answers"))
                continue
            answers = []
            drop = None
            for n, ans in enumerate(qa["answers"]):
                try:
                    text, start = extract_answer(ans["text"], ans["answer_start"], sides.source, ctx_align, sides.target)
                    if drop_punctuation_answers and is_punctuation_only(text):
                        raise Dropped(DropReason.EMPTY_ANSWER, f"punctuation-only answer {text!r}")
                except Dropped as exc:
                    if n == 0:
                        drop = DropRecord(qid, exc.reason, exc.detail)
                        break
                    continue
                answers.append({"text": text, "answer_start": start})
            if drop is not None:
                drops.append(drop)
                continue
            kept.append({"id": qid, "question": question, "answers": answers})

        if not kept:
            continue
        article = by_article.get(para.article)
        if article is None:
            article = {"title": title, "paragraphs": []}
            by_article[para.article] = article
            data.append(article)
        article["paragraphs"].append({"context": sides.target.raw, "qas": kept})
    return {"version": version, "data": data}, drops


def synthesize_dataset(
    source_dataset: Mapping,
    provider,
    aligner: AlignerConfig | None = None,
    transliterate: str = "off",
    src_lang: str = "eng_Latn",
    tgt_lang: str = "srp_Cyrl",
    cache: TranslationCache | None = None,
    alignments: Sequence[AlignmentLinkSet] | None = None,
    drop_punctuation_answers: bool = False,
    jobs: int = 1,
) -> tuple[dict, list[DropRecord]]:
    """Run split, translate, transliterate, align and retrieve in memory.

    ``alignments`` injects precomputed sentence alignments (one per source
    sentence) instead of training the aligner.
    """
    paragraphs = segment_dataset(source_dataset)
    units = translation_units(paragraphs, src_lang, tgt_lang)
    results = translate_batch(units, provider, cache=cache, jobs=jobs)
    texts = transliterate_texts({r.id: r.target_text for r in results}, transliterate)
    if alignments is None:
        corpus = alignment_corpus(paragraphs, texts)
        alignments = align_stage(corpus, aligner or AlignerConfig())
    return retrieve_dataset(paragraphs, texts, alignments, source_dataset.get("version", "1.1"), drop_punctuation_answers)


def count_samples(dataset: Mapping) -> int:
    return sum(len(p["qas"]) for a in dataset["data"] for p in a["paragraphs"])


def check_outputs(source: Mapping, output: Mapping, drops: Sequence[DropRecord]) -> None:
    """Assert conservation and the embedded-answer invariant; raise on violation."""
    src_ids = [qa["id"] for _, _, qa in iter_samples(source)]
    out_ids = [qa["id"] for _, _, qa in iter_samples(output)]
    drop_ids = [d.id for d in drops]
    if sorted(out_ids + drop_ids) != sorted(src_ids):
        raise AssertionError(
            f"conservation violated: {len(out_ids)} outputs + {len(drop_ids)} drops != {len(src_ids)} inputs"
        )
    for _, context, qa in iter_samples(output):
        for ans in qa["answers"]:
            s = ans["answer_start"]
            if context[s:s + len(ans["text"])] != ans["text"]:
                raise AssertionError(f"answer of {qa['id']} is not at its offset")


def dumps_dataset(dataset: Mapping) -> str:
    return json.dumps(dataset, ensure_ascii=False)
