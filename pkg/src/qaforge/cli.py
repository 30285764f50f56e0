"""Command-line entry point: ``qaforge <subcommand> [flags]``.

Flags override values from ``--config`` (a TOML file of flag names as
keys, dashes or underscores), which override built-in defaults.  Errors
exit non-zero and print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .align import AlignmentError, align_corpus, read_parallel_jsonl, read_pharaoh, write_pharaoh
from .evalkit import SERBIAN, SQUAD_V1, MissingPrediction, dataset_stats, evaluate
from .pipeline import (
    PipelineConfig,
    load_json,
    stage_align,
    stage_retrieve,
    stage_split,
    stage_translate,
    stage_transliterate,
    synthesize,
    write_json,
)
from .retrieve import DatasetError
from .translate import ProviderUnavailable, TranslationError

logger = logging.getLogger("qaforge")

EXIT_CODES = {
    "usage": 2,
    "input": 3,
    "provider": 4,
    "prediction": 5,
    "internal": 1,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are None so that config-file values can fill the gaps
    p.add_argument("--input", help="input file or work directory")
    p.add_argument("--output", help="output file or work directory")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--jobs", type=int, help="parallel workers (1 = serial, bit-reproducible)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_translate(p):
    p.add_argument("--provider", help="identity | file:<path> | http:<url>")
    p.add_argument("--src-lang", dest="src_lang")
    p.add_argument("--tgt-lang", dest="tgt_lang")


def _add_translit(p):
    p.add_argument("--translit", choices=("off", "latin", "cyrillic"))


def _add_align(p):
    p.add_argument("--aligner", choices=("ibm1", "gibbs", "diagonal"), help="default ibm1")
    p.add_argument("--iterations", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--alignments", help="Pharaoh file with precomputed sentence alignments")
    p.add_argument("--format", choices=("pharaoh",), default="pharaoh", help="alignment output format")


def _add_retrieve(p):
    p.add_argument("--drop-report", dest="drop_report")
    p.add_argument("--drop-punctuation-answers", dest="drop_punctuation_answers",
                   action="store_const", const=True, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qaforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qaforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="split source contexts into sentences (SQuAD JSON -> work dir)")
    _add_common(p)

    p = sub.add_parser("translate", help="translate titles, sentences and questions")
    _add_common(p)
    _add_translate(p)

    p = sub.add_parser("transliterate", help="convert translations between scripts")
    _add_common(p)
    _add_translit(p)
    p.add_argument("--tgt-lang", dest="tgt_lang")

    p = sub.add_parser("align", help="word-align sentence pairs (work dir or corpus JSONL)")
    _add_common(p)
    _add_align(p)

    p = sub.add_parser("retrieve", help="project answers and write the dataset")
    _add_common(p)
    _add_retrieve(p)

    p = sub.add_parser("synthesize", help="run every stage")
    _add_common(p)
    _add_translate(p)
    _add_translit(p)
    _add_align(p)
    _add_retrieve(p)
    p.add_argument("--workdir", help="intermediate files (default: <output>.work)")

    p = sub.add_parser("stats", help="sample count and mean lengths of a dataset")
    _add_common(p)

    for name, help_ in (("evaluate", "EM/F1 of a predictions file"),
                        ("analyze", "EM/F1 and lengths per question type")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        p.add_argument("--predictions", required=True, help="JSON object: question id -> answer")
        p.add_argument("--normalization", choices=("serbian", "squad"), default="serbian",
                       help="squad = official English SQuAD v1.1 normalization")
    return parser


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    return {k.replace("-", "_"): v for k, v in raw.items()}


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Flags > config file > defaults."""
    file_cfg = load_config(getattr(args, "config", None))
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(file_cfg) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    values = dict(file_cfg)
    for name in known:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def _print_results(results) -> None:
    for r in results:
        state = "skipped (up to date)" if r.skipped else "done"
        extra = f" {json.dumps(r.info, ensure_ascii=False)}" if r.info else ""
        print(f"{r.stage}: {state}{extra}")


def _workdir(cfg: PipelineConfig) -> Path:
    if not cfg.input:
        raise ValueError("--input (work directory) is required")
    return Path(cfg.input)


def _cmd_align(cfg: PipelineConfig) -> None:
    src = Path(cfg.input) if cfg.input else None
    if src is not None and src.is_file():
        # standalone: corpus JSONL in, Pharaoh out
        if not cfg.output:
            raise ValueError("--output is required")
        corpus = read_parallel_jsonl(src)
        if cfg.alignments:
            alignments = read_pharaoh(cfg.alignments)
        else:
            alignments = align_corpus(corpus, cfg.aligner_config())
        write_pharaoh(alignments, cfg.output)
        print(f"align: {len(alignments)} sentence pairs -> {cfg.output}")
        return
    if src is None and cfg.alignments and cfg.output:
        # format round trip of an alignment file
        write_pharaoh(read_pharaoh(cfg.alignments), cfg.output)
        return
    workdir = _workdir(cfg)
    if cfg.output and Path(cfg.output) != workdir:
        raise ValueError("align on a work directory writes in place; --output must equal --input")
    _print_results([stage_align(workdir, cfg)])


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    cmd = args.command
    if cmd in ("stats", "evaluate", "analyze"):
        if not args.input:
            raise ValueError("--input is required")
        dataset = load_json(args.input)
        if cmd == "stats":
            out = dataset_stats(dataset).to_json()
            text = json.dumps(out, ensure_ascii=False)
        else:
            predictions = load_json(args.predictions)
            opts = SQUAD_V1 if args.normalization == "squad" else SERBIAN
            report = evaluate(predictions, dataset, opts)
            out = report.to_json()
            if cmd == "evaluate":
                text = json.dumps({"exact_match": report.exact_match, "f1": report.f1})
            else:
                text = report.format_table()
        if args.output:
            write_json(args.output, out)
        print(text)
        return 0

    cfg = resolve_config(args)
    if cmd == "split":
        if not cfg.input or not cfg.output:
            raise ValueError("split needs --input (SQuAD JSON) and --output (work directory)")
        _print_results([stage_split(Path(cfg.input), Path(cfg.output))])
    elif cmd == "translate":
        _print_results([stage_translate(_workdir(cfg), cfg)])
    elif cmd == "transliterate":
        _print_results([stage_transliterate(_workdir(cfg), cfg)])
    elif cmd == "align":
        _cmd_align(cfg)
    elif cmd == "retrieve":
        _print_results([stage_retrieve(_workdir(cfg), cfg)])
    elif cmd == "synthesize":
        _print_results(synthesize(cfg))
    return 0


def _error(kind: str, exc: BaseException, stage: str | None) -> int:
    payload = {"error": type(exc).__name__, "kind": kind, "message": str(exc)}
    if stage:
        payload["stage"] = stage
    sys.stderr.write(json.dumps(payload, ensure_ascii=False) + "\n")
    return EXIT_CODES[kind]


def main(argv=None) -> int:
    stage = None
    try:
        argv = sys.argv[1:] if argv is None else argv
        stage = next((a for a in argv if not a.startswith("-")), None)
        return run(argv)
    except UsageError as exc:
        return _error("usage", exc, stage)
    except MissingPrediction as exc:
        return _error("prediction", exc, stage)
    except (ProviderUnavailable, TranslationError) as exc:
        return _error("provider", exc, stage)
    except (DatasetError, AlignmentError, FileNotFoundError, json.JSONDecodeError,
            tomllib.TOMLDecodeError, ValueError) as exc:
        return _error("input", exc, stage)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001
        logger.debug("unexpected failure", exc_info=True)
        return _error("internal", exc, stage)


if __name__ == "__main__":
    sys.exit(main())
