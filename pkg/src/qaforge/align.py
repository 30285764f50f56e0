"""Unsupervised word alignment.

IBM Model 1 trained by EM (with an optional collapsed Gibbs sampler),
per-target-word Viterbi decoding, grow-diag-final-and symmetrization and
Pharaoh-format I/O.

Training flattens the corpus into one entry per (target token, source
position) so that the E-step is a handful of numpy passes.  Entries are
processed in fixed-size chunks; chunk boundaries do not depend on the
number of worker threads and chunk counts are summed in chunk order, so
``jobs`` never changes the result.  A different ``chunk_entries`` changes
the summation order and may perturb counts at the 1e-15 level.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NULL = "<NULL>"
FORWARD, REVERSE, SYMMETRIZED = "forward", "reverse", "symmetrized"

SentencePair = tuple[Sequence[str], Sequence[str]]


class AlignmentError(Exception):
    pass


class EmptyCorpus(AlignmentError):
    pass


class DimensionMismatch(AlignmentError):
    pass


class ParseError(AlignmentError):
    def __init__(self, lineno: int, line: str, reason: str = "bad link"):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno
        self.line = line


@dataclass(frozen=True)
class AlignmentLinkSet:
    """Links ``(source index, target index)`` for one sentence pair.

    Reverse-direction sets are stored already transposed into
    (source, target) orientation.
    """

    links: frozenset[tuple[int, int]]
    direction: str = FORWARD
    src_len: int | None = None
    tgt_len: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "links", frozenset(self.links))
        for i, j in self.links:
            if i < 0 or j < 0:
                raise ValueError(f"negative link index ({i}, {j})")
            if self.src_len is not None and i >= self.src_len:
                raise DimensionMismatch(f"source index {i} outside sentence of length {self.src_len}")
            if self.tgt_len is not None and j >= self.tgt_len:
                raise DimensionMismatch(f"target index {j} outside sentence of length {self.tgt_len}")

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(sorted(self.links))

    def __len__(self) -> int:
        return len(self.links)

    def __contains__(self, link) -> bool:
        return tuple(link) in self.links

    def transposed(self) -> "AlignmentLinkSet":
        return AlignmentLinkSet(
            frozenset((j, i) for i, j in self.links), self.direction, self.tgt_len, self.src_len
        )


# ---------------------------------------------------------------------------
# Corpus


def read_parallel_text(src_path, tgt_path) -> list[tuple[list[str], list[str]]]:
    """Two UTF-8 files of space-separated tokens, one sentence per line."""
    with open(src_path, encoding="utf-8") as fs, open(tgt_path, encoding="utf-8") as ft:
        src_lines = fs.read().splitlines()
        tgt_lines = ft.read().splitlines()
    if len(src_lines) != len(tgt_lines):
        raise DimensionMismatch(f"{src_path} has {len(src_lines)} lines, {tgt_path} has {len(tgt_lines)}")
    return [(s.split(), t.split()) for s, t in zip(src_lines, tgt_lines)]


def read_parallel_jsonl(path) -> list[tuple[list[str], list[str]]]:
    corpus = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                corpus.append((list(rec["src"]), list(rec["tgt"])))
            except (ValueError, KeyError, TypeError):
                raise ParseError(lineno, line.rstrip("\n"), "bad corpus record") from None
    return corpus


# ---------------------------------------------------------------------------
# Lexical table


@dataclass
class LexiconTable:
    """Translation probabilities t(target | source) with add-alpha smoothing.

    Only co-occurring pairs are stored.  Every other pair gets the source
    word's floor ``alpha / (total + alpha * |target vocab|)``, so each row
    sums to one over the whole target vocabulary.  Source id 0 is NULL.
    """

    src_vocab: dict[str, int]
    tgt_vocab: dict[str, int]
    pair_keys: np.ndarray  # sorted int64, src_id * |tgt vocab| + tgt_id
    pair_probs: np.ndarray
    floor: np.ndarray  # per source id
    alpha: float
    log_likelihood: list[float] = field(default_factory=list)

    @property
    def n_tgt(self) -> int:
        return len(self.tgt_vocab)

    def prob(self, src: str, tgt: str) -> float:
        e = self.src_vocab.get(src, -1)
        f = self.tgt_vocab.get(tgt, -1)
        return float(self._lookup(np.array([e]), np.array([f]))[0])

    def _lookup(self, e: np.ndarray, f: np.ndarray) -> np.ndarray:
        e = np.asarray(e, dtype=np.int64)
        f = np.asarray(f, dtype=np.int64)
        oov_floor = 1.0 / max(self.n_tgt, 1)
        out = np.where(e >= 0, self.floor[np.maximum(e, 0)], oov_floor)
        known = (e >= 0) & (f >= 0)
        if known.any() and len(self.pair_keys):
            keys = e[known] * self.n_tgt + f[known]
            pos = np.searchsorted(self.pair_keys, keys)
            pos_c = np.minimum(pos, len(self.pair_keys) - 1)
            hit = self.pair_keys[pos_c] == keys
            vals = out[known]
            vals[hit] = self.pair_probs[pos_c[hit]]
            out[known] = vals
        return out

    def row_sums(self) -> np.ndarray:
        """Sum of t(. | e) over the full target vocabulary, per source id."""
        src_ids = self.pair_keys // max(self.n_tgt, 1)
        n_src = len(self.src_vocab)
        observed = np.bincount(src_ids, weights=self.pair_probs, minlength=n_src)
        n_obs = np.bincount(src_ids, minlength=n_src)
        return observed + self.floor * (self.n_tgt - n_obs)

    def matrix(self, src: Sequence[str], tgt: Sequence[str]) -> np.ndarray:
        """``(len(src) + 1, len(tgt))`` probabilities; row 0 is NULL."""
        e = np.array([0] + [self.src_vocab.get(w, -1) for w in src], dtype=np.int64)
        f = np.array([self.tgt_vocab.get(w, -1) for w in tgt], dtype=np.int64)
        ee = np.repeat(e, len(f))
        ff = np.tile(f, len(e))
        return self._lookup(ee, ff).reshape(len(e), len(f))


class _Flat:
    """Corpus flattened to (target token x source position) entries, chunked."""

    def __init__(self, corpus: Sequence[SentencePair], chunk_entries: int):
        self.src_vocab: dict[str, int] = {NULL: 0}
        self.tgt_vocab: dict[str, int] = {}
        src_ids, tgt_ids, src_lens, tgt_lens = [], [], [], []
        for src, tgt in corpus:
            src_ids.append(0)
            for w in src:
                src_ids.append(self.src_vocab.setdefault(w, len(self.src_vocab)))
            for w in tgt:
                tgt_ids.append(self.tgt_vocab.setdefault(w, len(self.tgt_vocab)))
            src_lens.append(len(src) + 1)
            tgt_lens.append(len(tgt))
        self.S = np.array(src_ids, dtype=np.int64)
        self.F = np.array(tgt_ids, dtype=np.int64)
        self.Lp1 = np.array(src_lens, dtype=np.int64)
        self.M = np.array(tgt_lens, dtype=np.int64)
        self.src_off = np.concatenate([[0], np.cumsum(self.Lp1)[:-1]]).astype(np.int64)
        self.tgt_off = np.concatenate([[0], np.cumsum(self.M)[:-1]]).astype(np.int64)
        self.T = len(self.tgt_vocab)

        # chunk boundaries over sentence pairs by entry count
        entries = self.Lp1 * self.M
        self.chunks: list[tuple[int, int]] = []
        start, acc = 0, 0
        for p, n in enumerate(entries.tolist()):
            if acc and acc + n > chunk_entries:
                self.chunks.append((start, p))
                start, acc = p, 0
            acc += n
        if start < len(entries):
            self.chunks.append((start, len(entries)))

    def entries(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Keys, source ids, target-token group ids and per-token log(L+1) for pairs lo..hi."""
        pair_of_tok = np.repeat(np.arange(lo, hi), self.M[lo:hi])
        g0, g1 = self.tgt_off[lo], self.tgt_off[lo] + self.M[lo:hi].sum()
        tok = np.arange(g0, g1)
        lens = self.Lp1[pair_of_tok]
        total = int(lens.sum())
        group = np.repeat(np.arange(len(tok)), lens)
        starts = np.cumsum(lens) - lens
        within = np.arange(total) - np.repeat(starts, lens)
        src_pos = self.src_off[pair_of_tok][group] + within
        e = self.S[src_pos]
        keys = e * self.T + self.F[tok][group]
        return keys, e, group, np.log(lens.astype(np.float64))


def _corpus_for_training(corpus: Sequence[SentencePair], token_cap: int) -> list[SentencePair]:
    kept = [(s, t) for s, t in corpus if s and t and len(s) <= token_cap and len(t) <= token_cap]
    if len(kept) < len(corpus):
        logger.info("skipping %d of %d pairs for training (empty or over %d tokens)",
                    len(corpus) - len(kept), len(corpus), token_cap)
    if not kept:
        raise EmptyCorpus("no usable sentence pairs")
    return kept


class _Trainer:
    def __init__(self, corpus, alpha, token_cap, chunk_entries):
        if alpha <= 0:
            raise ValueError("alpha must be > 0")
        self.alpha = alpha
        self.flat = _Flat(_corpus_for_training(corpus, token_cap), chunk_entries)
        fl = self.flat
        uniq = [np.unique(fl.entries(lo, hi)[0]) for lo, hi in fl.chunks]
        self.pair_keys = np.unique(np.concatenate(uniq)) if uniq else np.zeros(0, np.int64)
        self.pair_src = self.pair_keys // fl.T
        self.n_src = len(fl.src_vocab)
        # cache chunk index arrays while they stay small
        self._cache: dict[int, tuple] = {}
        self._cacheable = sum(int((fl.Lp1[lo:hi] * fl.M[lo:hi]).sum()) for lo, hi in fl.chunks) <= 20_000_000

    def chunk(self, k: int):
        if k in self._cache:
            return self._cache[k]
        lo, hi = self.flat.chunks[k]
        keys, e, group, log_lp1 = self.flat.entries(lo, hi)
        idx = np.searchsorted(self.pair_keys, keys)
        item = (idx, e, group, log_lp1)
        if self._cacheable:
            self._cache[k] = item
        return item

    def uniform_probs(self) -> np.ndarray:
        n_e = np.bincount(self.pair_src, minlength=self.n_src)
        return 1.0 / n_e[self.pair_src]

    def e_step(self, probs: np.ndarray, jobs: int = 1) -> tuple[np.ndarray, float]:
        def one(k):
            idx, _, group, log_lp1 = self.chunk(k)
            p = probs[idx]
            denom = np.bincount(group, weights=p, minlength=len(log_lp1))
            post = p / denom[group]
            counts = np.bincount(idx, weights=post, minlength=len(probs))
            ll = float(np.sum(np.log(denom) - log_lp1))
            return counts, ll

        ks = range(len(self.flat.chunks))
        if jobs > 1 and len(self.flat.chunks) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(one, ks))
        else:
            parts = [one(k) for k in ks]
        counts = np.zeros(len(probs))
        ll = 0.0
        for c, l in parts:  # fixed chunk order
            counts += c
            ll += l
        return counts, ll

    def m_step(self, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        T = self.flat.T
        totals = np.bincount(self.pair_src, weights=counts, minlength=self.n_src)
        denom = totals + self.alpha * T
        return (counts + self.alpha) / denom[self.pair_src], self.alpha / denom

    def table(self, probs, floor, history) -> LexiconTable:
        return LexiconTable(
            dict(self.flat.src_vocab), dict(self.flat.tgt_vocab), self.pair_keys,
            probs.copy(), floor.copy(), self.alpha, list(history),
        )


def train_ibm1(
    corpus: Sequence[SentencePair],
    iterations: int = 5,
    alpha: float = 0.001,
    token_cap: int = 200,
    jobs: int = 1,
    chunk_entries: int = 2_000_000,
    final_likelihood: bool = False,
    on_iteration: Callable[[int, LexiconTable], None] | None = None,
) -> LexiconTable:
    """Train IBM Model 1 t(target | source) by EM.

    Starts uniform over each source word's co-occurring target words.  The
    returned table's ``log_likelihood`` holds the corpus log-likelihood
    (alignment prior ``1/(l+1)`` included) under the table entering each
    E-step, plus the final table's value when ``final_likelihood`` is set.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    tr = _Trainer(corpus, alpha, token_cap, chunk_entries)
    probs = tr.uniform_probs()
    floor = np.zeros(tr.n_src)
    history: list[float] = []
    for it in range(iterations):
        counts, ll = tr.e_step(probs, jobs)
        history.append(ll)
        probs, floor = tr.m_step(counts)
        logger.debug("ibm1 iteration %d: log-likelihood %.6f", it + 1, ll)
        if on_iteration is not None:
            on_iteration(it + 1, tr.table(probs, floor, history))
    if final_likelihood:
        history.append(tr.e_step(probs, jobs)[1])
    return tr.table(probs, floor, history)


def train_gibbs(
    corpus: Sequence[SentencePair],
    iterations: int = 100,
    alpha: float = 0.001,
    seed: int = 0,
    burn_in: int | None = None,
    token_cap: int = 200,
) -> LexiconTable:
    """Collapsed Gibbs sampling for Model 1 under a symmetric Dirichlet prior.

    Link counts averaged over the post-burn-in samples become the lexicon
    (smoothed with the same ``alpha``).  Seeded and serial, so reproducible.
    Pure Python per token: meant for small corpora.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if burn_in is None:
        burn_in = iterations // 2
    tr = _Trainer(corpus, alpha, token_cap, chunk_entries=1 << 62)
    idx, e, group, log_lp1 = tr.chunk(0)
    T = tr.flat.T
    rng = np.random.default_rng(seed)
    n_tok = len(log_lp1)
    bounds = np.searchsorted(group, np.arange(n_tok + 1))
    n_pair = np.zeros(len(tr.pair_keys))
    n_src = np.zeros(tr.n_src)
    state = np.empty(n_tok, dtype=np.int64)
    for g in range(n_tok):
        lo, hi = bounds[g], bounds[g + 1]
        a = lo + int(rng.integers(hi - lo))
        state[g] = a
        n_pair[idx[a]] += 1
        n_src[e[a]] += 1
    avg = np.zeros_like(n_pair)
    kept = 0
    for it in range(iterations):
        draws = rng.random(n_tok)
        for g in range(n_tok):
            lo, hi = bounds[g], bounds[g + 1]
            a = state[g]
            n_pair[idx[a]] -= 1
            n_src[e[a]] -= 1
            w = (n_pair[idx[lo:hi]] + alpha) / (n_src[e[lo:hi]] + alpha * T)
            c = np.cumsum(w)
            a = lo + min(int(np.searchsorted(c, draws[g] * c[-1], side="right")), hi - lo - 1)
            state[g] = a
            n_pair[idx[a]] += 1
            n_src[e[a]] += 1
        if it >= burn_in:
            avg += n_pair
            kept += 1
    probs, floor = tr.m_step(avg / max(kept, 1))
    return tr.table(probs, floor, [])


def corpus_log_likelihood(lexicon: LexiconTable, corpus: Sequence[SentencePair]) -> float:
    """Model 1 log-likelihood of ``corpus`` (straightforward loop, for checking)."""
    total = 0.0
    for src, tgt in corpus:
        if not src or not tgt:
            continue
        m = lexicon.matrix(src, tgt)
        total += float(np.sum(np.log(m.sum(axis=0) / (len(src) + 1))))
    return total


# ---------------------------------------------------------------------------
# Decoding


def viterbi_align(lexicon: LexiconTable, pair: SentencePair, direction: str = FORWARD) -> AlignmentLinkSet:
    """Link each target word to its most probable source word.

    ``pair`` is always (source, target) in corpus orientation.  For
    ``direction="reverse"`` the lexicon must have been trained on the
    swapped corpus; the pair is swapped for decoding and the links are
    returned transposed back to (source, target).  A target word whose
    NULL probability is strictly the highest stays unlinked; ties go to
    the smallest real source index.
    """
    src, tgt = pair
    if direction == REVERSE:
        src, tgt = tgt, src
    elif direction != FORWARD:
        raise ValueError(f"unknown direction {direction!r}")
    links = set()
    if src and tgt:
        m = lexicon.matrix(src, tgt)
        best = np.argmax(m[1:], axis=0)
        wins = m[1:][best, np.arange(len(tgt))] >= m[0]
        links = {(int(i), j) for j, (i, ok) in enumerate(zip(best, wins)) if ok}
    out = AlignmentLinkSet(frozenset(links), direction, len(src), len(tgt))
    return out.transposed() if direction == REVERSE else out


def diagonal_alignment(src_len: int, tgt_len: int) -> AlignmentLinkSet:
    return AlignmentLinkSet(frozenset((k, k) for k in range(min(src_len, tgt_len))), SYMMETRIZED, src_len, tgt_len)


_NEIGHBORS = ((-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


def _dims(a: AlignmentLinkSet, b: AlignmentLinkSet) -> tuple[int, int]:
    def pick(x, y, k):
        if x is not None and y is not None and x != y:
            raise DimensionMismatch(f"sentence lengths differ: {x} vs {y}")
        if x is not None or y is not None:
            return x if x is not None else y
        return 1 + max((link[k] for link in a.links | b.links), default=-1)

    return pick(a.src_len, b.src_len, 0), pick(a.tgt_len, b.tgt_len, 1)


def symmetrize_gdfa(forward: AlignmentLinkSet, reverse: AlignmentLinkSet) -> AlignmentLinkSet:
    """grow-diag-final-and.

    Both inputs are in (source, target) orientation.  Start from the
    intersection; grow into union points among the 8 neighbours of
    existing links whose source or target word is still unaligned, until
    nothing changes; then add forward and finally reverse links whose two
    words are both unaligned.  Scans run row-major ascending.
    """
    n_src, n_tgt = _dims(forward, reverse)
    union = forward.links | reverse.links
    alignment = set(forward.links & reverse.links)
    src_aligned = {i for i, _ in alignment}
    tgt_aligned = {j for _, j in alignment}

    def add(i, j):
        alignment.add((i, j))
        src_aligned.add(i)
        tgt_aligned.add(j)

    changed = True
    while changed:
        changed = False
        for i in range(n_src):
            for j in range(n_tgt):
                if (i, j) not in alignment:
                    continue
                for di, dj in _NEIGHBORS:
                    ni, nj = i + di, j + dj
                    if (ni, nj) in union and (ni, nj) not in alignment and (
                        ni not in src_aligned or nj not in tgt_aligned
                    ):
                        add(ni, nj)
                        changed = True

    for directional in (forward.links, reverse.links):
        for i in range(n_src):
            for j in range(n_tgt):
                if (i, j) in directional and i not in src_aligned and j not in tgt_aligned:
                    add(i, j)

    return AlignmentLinkSet(frozenset(alignment), SYMMETRIZED, n_src, n_tgt)


# ---------------------------------------------------------------------------
# Pharaoh format


def format_pharaoh(links: Iterable[tuple[int, int]]) -> str:
    return " ".join(f"{i}-{j}" for i, j in sorted(links))


def parse_pharaoh(line: str, lineno: int = 1, direction: str = FORWARD) -> AlignmentLinkSet:
    links = set()
    for item in line.split():
        i, sep, j = item.partition("-")
        if not sep or not i.isdigit() or not j.isdigit():
            raise ParseError(lineno, line)
        links.add((int(i), int(j)))
    return AlignmentLinkSet(frozenset(links), direction)


def read_pharaoh(path: str | os.PathLike, direction: str = SYMMETRIZED) -> list[AlignmentLinkSet]:
    text = Path(path).read_text("utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [parse_pharaoh(line, k, direction) for k, line in enumerate(lines, 1)]


def write_pharaoh(alignments: Iterable[AlignmentLinkSet | Iterable[tuple[int, int]]], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for a in alignments:
            links = a.links if isinstance(a, AlignmentLinkSet) else a
            f.write(format_pharaoh(links) + "\n")


# ---------------------------------------------------------------------------
# Whole-corpus driver


@dataclass
class AlignerConfig:
    method: str = "ibm1"  # ibm1 | gibbs | diagonal
    iterations: int = 5
    alpha: float = 0.001
    seed: int = 0
    token_cap: int = 200
    lowercase: bool = True
    symmetrize: bool = True
    jobs: int = 1

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def align_corpus(corpus: Sequence[SentencePair], config: AlignerConfig | None = None) -> list[AlignmentLinkSet]:
    """Align every pair: train both directions, decode, symmetrize."""
    cfg = config or AlignerConfig()
    if cfg.method == "diagonal":
        return [diagonal_alignment(len(s), len(t)) for s, t in corpus]
    if cfg.lowercase:
        corpus = [([w.lower() for w in s], [w.lower() for w in t]) for s, t in corpus]
    swapped = [(t, s) for s, t in corpus]

    def train(c):
        if cfg.method == "ibm1":
            return train_ibm1(c, cfg.iterations, cfg.alpha, cfg.token_cap, jobs=cfg.jobs)
        if cfg.method == "gibbs":
            return train_gibbs(c, cfg.iterations, cfg.alpha, seed=cfg.seed, token_cap=cfg.token_cap)
        raise ValueError(f"unknown aligner method {cfg.method!r}")

    fwd_lex = train(corpus)
    if not cfg.symmetrize:
        return [viterbi_align(fwd_lex, p, FORWARD) for p in corpus]
    rev_lex = train(swapped)
    out = []
    for p in corpus:
        f = viterbi_align(fwd_lex, p, FORWARD)
        r = viterbi_align(rev_lex, p, REVERSE)
        out.append(symmetrize_gdfa(f, r))
    return out
