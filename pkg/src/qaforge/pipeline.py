"""File-based pipeline stages.

Each stage reads the previous stage's files from a work directory, writes
its own, and records a manifest (input/output hashes, config, timing).
A stage whose manifest still matches its inputs, config and outputs is
skipped.  ``synthesize`` runs every stage through these same functions, so
its output is byte-identical to running the stages by hand.

Work directory layout::

    split.jsonl          paragraphs with sentence spans (line 1: header)
    translations.jsonl   provider output, {"id", "text"} per unit
    target.jsonl         translations after transliteration
    corpus.jsonl         tokenized sentence pairs fed to the aligner
    alignments.txt       one Pharaoh line per source sentence
    <stage>.manifest.json
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .align import AlignerConfig, DimensionMismatch, read_pharaoh, write_pharaoh
from .retrieve import (
    DropRecord,
    Paragraph,
    align_stage,
    alignment_corpus,
    check_outputs,
    retrieve_dataset,
    segment_dataset,
    transliterate_texts,
    translation_units,
)
from .translate import TranslationCache, make_provider, translate_batch

logger = logging.getLogger(__name__)

SPLIT, TRANSLATIONS, TARGET, CORPUS, ALIGNMENTS = (
    "split.jsonl", "translations.jsonl", "target.jsonl", "corpus.jsonl", "alignments.txt",
)


@dataclass
class PipelineConfig:
    input: str | None = None
    output: str | None = None
    provider: str = "identity"
    src_lang: str = "eng_Latn"
    tgt_lang: str = "srp_Cyrl"
    translit: str = "off"
    aligner: str = "ibm1"
    iterations: int = 5
    alpha: float = 0.001
    seed: int = 0
    alignments: str | None = None
    drop_report: str | None = None
    jobs: int = 1
    workdir: str | None = None
    drop_punctuation_answers: bool = False

    def aligner_config(self) -> AlignerConfig:
        return AlignerConfig(
            method=self.aligner, iterations=self.iterations, alpha=self.alpha, seed=self.seed, jobs=self.jobs
        )

    def validate(self) -> None:
        if self.translit not in ("off", "latin", "cyrillic"):
            raise ValueError(f"--translit must be off, latin or cyrillic, not {self.translit!r}")
        if self.translit != "off" and not self.tgt_lang.startswith(("srp", "hbs", "sr")):
            logger.warning("transliteration mode %s with non-Serbian target %s", self.translit, self.tgt_lang)
        if self.iterations < 1:
            raise ValueError("--iterations must be >= 1")
        if self.alpha <= 0:
            raise ValueError("--alpha must be > 0")
        if self.jobs < 1:
            raise ValueError("--jobs must be >= 1")


def default_drop_report(output: str | os.PathLike) -> Path:
    p = Path(output)
    return p.with_name(p.stem + ".drops.jsonl")


# ---------------------------------------------------------------------------
# Manifests


def file_hash(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class StageResult:
    stage: str
    skipped: bool
    outputs: dict[str, str] = field(default_factory=dict)
    info: dict[str, Any] = field(default_factory=dict)


def _manifest_path(workdir: Path, stage: str) -> Path:
    return workdir / f"{stage}.manifest.json"


def _up_to_date(manifest: Path, inputs: dict[str, Path], config: dict) -> bool:
    if not manifest.exists():
        return False
    try:
        m = json.loads(manifest.read_text("utf-8"))
    except ValueError:
        return False
    if m.get("config") != config or m.get("version") != __version__:
        return False
    if m.get("inputs") != {k: file_hash(p) for k, p in inputs.items()}:
        return False
    for path, digest in m.get("outputs", {}).items():
        if not Path(path).exists() or file_hash(path) != digest:
            return False
    return True


def run_stage(
    stage: str,
    workdir: Path,
    inputs: dict[str, Path],
    outputs: list[Path],
    config: dict,
    body: Callable[[], dict | None],
) -> StageResult:
    manifest = _manifest_path(workdir, stage)
    for name, path in inputs.items():
        if not path.exists():
            raise FileNotFoundError(f"{stage}: missing input {name} ({path})")
    if _up_to_date(manifest, inputs, config):
        logger.info("%s: up to date, skipping", stage)
        return StageResult(stage, True, {str(p): file_hash(p) for p in outputs})
    t0 = time.perf_counter()
    info = body() or {}
    elapsed = time.perf_counter() - t0
    out_hashes = {str(p): file_hash(p) for p in outputs}
    record = {
        "stage": stage,
        "version": __version__,
        "config": config,
        "inputs": {k: file_hash(p) for k, p in inputs.items()},
        "outputs": out_hashes,
        "timings": {"seconds": round(elapsed, 6)},
        "info": info,
    }
    workdir.mkdir(parents=True, exist_ok=True)
    manifest.write_text(json.dumps(record, indent=2, ensure_ascii=False) + "\n", "utf-8")
    logger.info("%s: done in %.2fs", stage, elapsed)
    return StageResult(stage, False, out_hashes, info)


# ---------------------------------------------------------------------------
# File helpers


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def load_json(path: str | os.PathLike) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_json(path: str | os.PathLike, obj: Any) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(obj, ensure_ascii=False))


def read_split(workdir: Path) -> tuple[str, list[Paragraph]]:
    records = _read_jsonl(workdir / SPLIT)
    header, rest = records[0], records[1:]
    return header["version"], [Paragraph.from_json(r) for r in rest]


def read_texts(path: Path) -> dict[str, str]:
    return {r["id"]: r["text"] for r in _read_jsonl(path)}


# ---------------------------------------------------------------------------
# Stages


def stage_split(source: Path, workdir: Path) -> StageResult:
    workdir.mkdir(parents=True, exist_ok=True)
    out = workdir / SPLIT

    def body():
        dataset = load_json(source)
        paragraphs = segment_dataset(dataset)
        header = {"version": dataset.get("version", "1.1"), "source": source.name}
        _write_jsonl(out, [header] + [p.to_json() for p in paragraphs])
        return {"paragraphs": len(paragraphs), "sentences": sum(len(p.sentences) for p in paragraphs)}

    return run_stage("split", workdir, {"source": source}, [out], {}, body)


def stage_translate(workdir: Path, cfg: PipelineConfig, provider=None, cache: TranslationCache | None = None) -> StageResult:
    out = workdir / TRANSLATIONS
    config = {"provider": cfg.provider, "src_lang": cfg.src_lang, "tgt_lang": cfg.tgt_lang}

    def body():
        _, paragraphs = read_split(workdir)
        units = translation_units(paragraphs, cfg.src_lang, cfg.tgt_lang)
        prov = provider if provider is not None else make_provider(cfg.provider)
        results = translate_batch(units, prov, cache=cache if cache is not None else TranslationCache.default(), jobs=cfg.jobs)
        _write_jsonl(out, ({"id": r.id, "text": r.target_text} for r in results))
        return {"units": len(units), "empty": sum(1 for r in results if not r.target_text.strip())}

    inputs = {"split": workdir / SPLIT}
    if cfg.provider.startswith("file:"):
        inputs["provider_file"] = Path(cfg.provider[len("file:"):])
    return run_stage("translate", workdir, inputs, [out], config, body)


def stage_transliterate(workdir: Path, cfg: PipelineConfig) -> StageResult:
    out = workdir / TARGET

    def body():
        texts = transliterate_texts(read_texts(workdir / TRANSLATIONS), cfg.translit)
        _write_jsonl(out, ({"id": k, "text": v} for k, v in texts.items()))

    return run_stage("transliterate", workdir, {"translations": workdir / TRANSLATIONS}, [out],
                     {"translit": cfg.translit}, body)


def stage_align(workdir: Path, cfg: PipelineConfig) -> StageResult:
    corpus_path, out = workdir / CORPUS, workdir / ALIGNMENTS
    inputs = {"split": workdir / SPLIT, "target": workdir / TARGET}
    config = {"aligner": asdict(cfg.aligner_config())}
    config["aligner"].pop("jobs")
    if cfg.alignments:
        inputs["external"] = Path(cfg.alignments)
        config = {"external": True}

    def body():
        _, paragraphs = read_split(workdir)
        corpus = alignment_corpus(paragraphs, read_texts(workdir / TARGET))
        _write_jsonl(corpus_path, ({"src": s, "tgt": t} for s, t in corpus))
        if cfg.alignments:
            alignments = read_pharaoh(cfg.alignments)
            if len(alignments) != len(corpus):
                raise DimensionMismatch(f"{cfg.alignments}: {len(alignments)} lines for {len(corpus)} sentence pairs")
        else:
            alignments = align_stage(corpus, cfg.aligner_config())
        write_pharaoh(alignments, out)
        return {"pairs": len(corpus), "links": sum(len(a) for a in alignments)}

    return run_stage("align", workdir, inputs, [corpus_path, out], config, body)


def stage_retrieve(workdir: Path, cfg: PipelineConfig) -> StageResult:
    if not cfg.output:
        raise ValueError("retrieve needs --output")
    output = Path(cfg.output)
    drop_report = Path(cfg.drop_report) if cfg.drop_report else default_drop_report(output)
    inputs = {"split": workdir / SPLIT, "target": workdir / TARGET, "alignments": workdir / ALIGNMENTS}
    config = {"drop_punctuation_answers": cfg.drop_punctuation_answers,
              "output": str(output), "drop_report": str(drop_report)}

    def body():
        version, paragraphs = read_split(workdir)
        texts = read_texts(workdir / TARGET)
        alignments = read_pharaoh(workdir / ALIGNMENTS)
        dataset, drops = retrieve_dataset(paragraphs, texts, alignments, version, cfg.drop_punctuation_answers)
        n_in = sum(len(p.qas) for p in paragraphs)
        source = {"data": [{"title": "", "paragraphs": [{"context": p.context, "qas": p.qas} for p in paragraphs]}]}
        check_outputs(source, dataset, drops)
        write_json(output, dataset)
        drop_report.parent.mkdir(parents=True, exist_ok=True)
        _write_jsonl(drop_report, (d.to_json() for d in drops))
        reasons: dict[str, int] = {}
        for d in drops:
            reasons[d.reason.value] = reasons.get(d.reason.value, 0) + 1
        return {"inputs": n_in, "outputs": n_in - len(drops), "drops": reasons}

    return run_stage("retrieve", workdir, inputs, [output, drop_report], config, body)


def synthesize(cfg: PipelineConfig, provider=None, cache: TranslationCache | None = None) -> list[StageResult]:
    if not cfg.input or not cfg.output:
        raise ValueError("synthesize needs --input and --output")
    workdir = Path(cfg.workdir) if cfg.workdir else Path(str(cfg.output) + ".work")
    return [
        stage_split(Path(cfg.input), workdir),
        stage_translate(workdir, cfg, provider, cache),
        stage_transliterate(workdir, cfg),
        stage_align(workdir, cfg),
        stage_retrieve(workdir, cfg),
    ]


def read_drop_report(path: str | os.PathLike) -> list[DropRecord]:
    return [DropRecord.from_json(r) for r in _read_jsonl(Path(path))]
