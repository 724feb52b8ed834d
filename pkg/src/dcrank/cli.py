"""``dcrank`` command line.

Settings are layered: RunConfig defaults, then ``--config FILE`` (JSON or
key=value lines), then explicit flags. Summaries go to stdout as JSON; the
report table goes to stdout as text. A failing stage exits with status 1
and names the stage on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import pipeline
from .config import BENCH_PROFILE, RunConfig, load_config_file
from .errors import StageError

logger = logging.getLogger("dcrank")

_HELP = {
    "d": "hidden width", "n_heads": "attention heads", "n_lower": "independent encoder layers",
    "k_layers": "interaction layers K", "arch": "dc | dc-linear | concat",
    "max_q_len": "question length Lq incl. CLS/SEP", "max_d_len": "document length Ld incl. CLS/SEP",
    "neg_ratio": "negatives per positive ('all' keeps every negative)",
    "pool_size": "first-stage candidates per question", "top_k": "documents kept after reranking",
    "eval_ns": "comma-separated N values for P@N", "eval_questions": "held-out questions (JSONL)",
    "out_dir": "directory for all artifacts (default ./run)",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", metavar="FILE", help="JSON or key=value file; flags override it")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        # Strings for everything; RunConfig.from_dict coerces, so file and flag values parse identically.
        g.add_argument(flag, dest=f.name, default=argparse.SUPPRESS, metavar=f.name.upper(),
                       help=_HELP.get(f.name, f.name.replace("_", " ")))


def build_config(args: argparse.Namespace, base: dict | None = None) -> RunConfig:
    values = dict(base or {})
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    names = {f.name for f in dataclasses.fields(RunConfig)}
    values.update({k: v for k, v in vars(args).items() if k in names})
    return RunConfig.from_dict(values)


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcrank", description="Decoupled question/document reranking.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_, description=help_)
        _add_config_flags(p)
        return p

    add("ingest", "validate corpus/questions and print a summary")
    add("index", "build the TF-IDF index and first-stage lists")
    add("train", "label retrieved pairs and train the reranker")
    add("encode-docs", "precompute document encodings into the cache file")
    for name, help_ in (("rerank", "rerank each question's first-stage pool"),
                        ("eval", "compute P@N, PBT@N and PTB@N")):
        p = add(name, help_)
        p.add_argument("--mode", choices=pipeline.MODES, help="default: cached, or concat for arch=concat")
    p = add("bench", "measure counters and latency for all modes")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--bench-questions", type=int, default=2)
    p.add_argument("--nd-sweep", type=_ints, default=[1, 8, 20, 40, 80])
    p.add_argument("--k-sweep", type=_ints, default=[1, 2, 3])
    p.add_argument("--build-cache", action="store_true", help="encode the bench documents into --cache first")
    p = add("report", "render the results table, CSV and figures")
    p.add_argument("--metrics", nargs="*", default=[], help="metrics JSON files (default: OUT_DIR/metrics.json)")
    p.add_argument("--bench", help="bench JSON file")
    p.add_argument("--n", type=int, help="N for the table columns (default: top_k)")
    p.add_argument("--no-figures", action="store_true")
    add("pipeline", "run ingest through eval and report")
    p = sub.add_parser("synth", help="write the synthetic dataset as JSONL")
    p.add_argument("out", type=Path)
    p.add_argument("--seed", type=int, default=13)
    return parser


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def _synth(out: Path, seed: int) -> dict:
    from .data import write_corpus, write_questions
    from .synthetic import generate

    ds = generate(seed=seed)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(out / "corpus.jsonl", ds.corpus.values())
    write_questions(out / "train.jsonl", ds.train)
    write_questions(out / "dev.jsonl", ds.dev)
    return {"documents": len(ds.corpus), "train": len(ds.train), "dev": len(ds.dev), "out": str(out)}


def run(args: argparse.Namespace) -> object:
    cmd = args.command
    if cmd == "synth":
        return pipeline.run_stage(cmd, _synth, args.out, args.seed)
    config = pipeline.run_stage("config", build_config, args, BENCH_PROFILE if cmd == "bench" else None)
    stages = {
        "ingest": lambda: pipeline.stage_ingest(config),
        "index": lambda: pipeline.stage_index(config),
        "train": lambda: pipeline.stage_train(config),
        "encode-docs": lambda: pipeline.stage_encode_docs(config),
        "rerank": lambda: pipeline.stage_rerank(config, args.mode),
        "eval": lambda: pipeline.stage_eval(config, args.mode),
        "bench": lambda: pipeline.stage_bench(config, args.reps, args.bench_questions, args.nd_sweep,
                                              args.k_sweep, args.build_cache),
        "report": lambda: pipeline.stage_report(config, args.metrics, args.bench, args.n,
                                                not args.no_figures),
        "pipeline": lambda: pipeline.cmd_pipeline(
            config, lambda name, res: logger.info("%s done", name)),
    }
    return pipeline.run_stage(cmd, stages[cmd])


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        result = run(args)
    except StageError as exc:
        print(f"dcrank: error in stage '{exc.stage}': {type(exc.cause).__name__}: {exc.cause}", file=sys.stderr)
        return 1
    if args.command == "report":
        print(result["table"])
        for path in result["written"]:
            print(f"wrote {path}", file=sys.stderr)
    elif args.command == "pipeline":
        print(result["report"]["table"])
    else:
        _print_json(result)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

