"""Command-line interface.

Subcommands mirror the pipeline stages (ingest, annotate, encode, train,
generate, insert, evaluate, report) plus `pipeline` to run them all. Exit
codes: 0 success, 1 usage, 2 data error, 3 stage dependency not met.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from .entities import EntityTag, Gazetteer, annotate, load_external_annotations
from .errors import DataError, DependencyError
from .pipeline import (
    PipelineConfig,
    StageContext,
    consolidated_report,
    format_report_table,
    run_pipeline,
    run_stage,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DEPENDENCY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="newscap", description=__doc__)
    parser.add_argument("--config", help="pipeline config file (key = value lines)")
    parser.add_argument("--workdir", help="stage artifact directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--force", action="store_true", help="rebuild stages even when fresh")
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", metavar="command")

    p_ingest = sub.add_parser("ingest", help="read a JSONL corpus and split it")
    p_ingest.add_argument("--input", help="corpus JSONL (standalone mode)")
    p_ingest.add_argument("--out", help="output directory (standalone mode)")
    p_ingest.add_argument("--split", default="0.8,0.1,0.1", help="train,val,test ratios")

    for stage in ("annotate", "encode", "train", "generate", "insert", "report"):
        sub.add_parser(stage, help=f"run the {stage} stage")

    p_eval = sub.add_parser("evaluate", help="run the evaluate stage or score two files")
    p_eval.add_argument("--pred", help="predictions JSONL (standalone mode)")
    p_eval.add_argument("--gt", help="ground-truth corpus JSONL (standalone mode)")
    p_eval.add_argument("--report", help="where to write the standalone report JSON")

    sub.add_parser("pipeline", help="run every stage in order")
    return parser


def _make_context(args) -> StageContext:
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workdir:
        overrides["workdir"] = args.workdir
    if args.config:
        config = PipelineConfig.from_file(args.config, overrides)
    else:
        raise DataError("this command needs --config (or standalone flags)")
    workdir = Path(str(config["workdir"]))
    workdir.mkdir(parents=True, exist_ok=True)
    return StageContext(config=config, workdir=workdir, force=args.force)


def _cmd_ingest_standalone(args) -> int:
    if not args.out:
        raise DataError("ingest --input also needs --out")
    report = corpus_mod.ingest_jsonl(args.input)
    for err in report.errors:
        log.warning("%s:%d: %s", args.input, err.line_no, err.message)
    if not report.bundles:
        raise DataError(f"no valid samples in {args.input}")
    ratios = tuple(float(x) for x in args.split.split(","))
    if len(ratios) != 3:
        raise DataError(f"--split needs 3 ratios, got {args.split!r}")
    split = corpus_mod.split_dataset(report.bundles, ratios, args.seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus_mod.emit_jsonl(report.bundles, out / "bundles.jsonl")
    (out / "split.json").write_text(
        json.dumps(corpus_mod.split_to_json(split), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    print(
        f"ingested {len(report.bundles)} samples "
        f"({len(report.errors)} bad lines) into {out}"
    )
    return EXIT_OK


def _gold_mentions(bundle) -> list[tuple[str, EntityTag]]:
    if bundle.entities:
        ext = load_external_annotations(bundle)
        ents = ext.caption
    else:
        ents = annotate(bundle.caption.raw_text, Gazetteer())
    return [(e.surface_text, e.tag) for e in ents]


def _cmd_evaluate_standalone(args) -> int:
    if not (args.gt and args.report):
        raise DataError("evaluate --pred also needs --gt and --report")
    gt_report = corpus_mod.ingest_jsonl(args.gt)
    if gt_report.errors:
        for err in gt_report.errors:
            log.warning("%s:%d: %s", args.gt, err.line_no, err.message)
    gt = {b.id: b for b in gt_report.bundles}

    candidates = []
    references = []
    pred_mentions = []
    gold_mentions = []
    with open(args.pred, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            if row["id"] not in gt:
                raise DataError(f"prediction id {row['id']!r} not in ground truth")
            bundle = gt[row["id"]]
            candidates.append(list(row["filled"]))
            references.append(list(bundle.caption.tokens))
            pred_mentions.append(
                [
                    (p["surface"], EntityTag(p["tag"]))
                    for p in row.get("provenance", [])
                    if p.get("surface") is not None
                ]
            )
            gold_mentions.append(_gold_mentions(bundle))
    report = metrics_mod.score_captions(candidates, references, pred_mentions, gold_mentions)
    Path(args.report).write_text(
        json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {args.report}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    try:
        if args.command == "ingest" and args.input:
            return _cmd_ingest_standalone(args)
        if args.command == "evaluate" and args.pred:
            return _cmd_evaluate_standalone(args)

        ctx = _make_context(args)
        if args.command == "pipeline":
            run_pipeline(ctx)
            rows = consolidated_report(ctx)
            print(format_report_table(rows), end="")
        elif args.command == "report":
            run_stage(ctx, "report")
            rows = consolidated_report(ctx)
            print(format_report_table(rows), end="")
        else:
            run_stage(ctx, args.command)
    except DependencyError as exc:
        print(f"newscap: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except DataError as exc:
        print(f"newscap: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"newscap: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
