"""
Command-line entry point.

Subcommands: import, build, eval, score, rank, spanf1, report, export-ft.
Every subcommand prints a one-line JSON summary to stdout; failures print
``{"status": "error", ...}`` and exit with status 1.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError

from longform_mqm.__about__ import __version__
from longform_mqm.artifacts import dumps, read_json, read_jsonl, write_json, write_jsonl
from longform_mqm.cache import ResponseCache
from longform_mqm.config import RunConfig, apply_overrides, compute_run_id, file_digest, load_config
from longform_mqm.corpus import (
    CorpusFormat,
    build_granularity,
    corpus_stats,
    import_corpus,
    read_units,
    write_segments,
    write_units,
)
from longform_mqm.errors import ConfigError, LongformMqmError, ManifestError, MetaEvalError
from longform_mqm.ftexport import DEFAULT_EPOCHS_NOTE, export_ft
from longform_mqm.metaeval import (
    length_report,
    pairwise_accuracy,
    prf_report,
    span_count_report,
    unit_prf,
    write_table,
)
from longform_mqm.models import (
    EvalUnit,
    Granularity,
    ManifestTiming,
    ParseStatus,
    PromptFamily,
    RunManifest,
    ScoreMethod,
    SeverityWeights,
    UnitResult,
)
from longform_mqm.pipeline import build_requests, collect_results, execute, make_backend
from longform_mqm.prompting import build_demo_pool, load_demo_pool, write_demo_pool
from longform_mqm.scoring import da_unit_scores, gold_system_scores, mqm_unit_scores, system_scores
from longform_mqm.synthetic import make_corpus
from longform_mqm.tokens import get_counter

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
UNITS = "units.jsonl"
RESULTS = "results.jsonl"
SCORES = "scores.jsonl"
SYSTEM_SCORES = "system_scores.json"
RANK = "rank.json"
SPANF1 = "spanf1.json"

# per-response fields that differ between a fresh and a resumed run
_VOLATILE = {"responses": {"__all__": {"latency_ms", "from_cache"}}}


##################################################
# argument types
##################################################


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _weights(value: str) -> Dict[str, Any]:
    try:
        return SeverityWeights.parse_flag(value).model_dump()
    except (ValueError, ValidationError) as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _emit(command: str, **fields: Any) -> None:
    print(dumps({"status": "ok", "command": command, **fields}))


def _config(args: argparse.Namespace, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    return apply_overrides(load_config(args.config), overrides or {})


##################################################
# import / build
##################################################


def cmd_import(args: argparse.Namespace) -> int:
    if args.synthetic:
        segments = make_corpus(args.synthetic, n_systems=args.systems, seed=args.seed, lp=args.lp or "en-de")
    elif args.data:
        segments = import_corpus(args.data, args.format, lp=args.lp or "")
    else:
        raise ConfigError("import needs --data or --synthetic")
    out = Path(args.out) / "segments.jsonl"
    write_segments(out, segments)
    _emit(
        "import",
        segments=len(segments),
        documents=len({s.doc_id for s in segments}),
        output=str(out),
    )
    return 0


def cmd_build(args: argparse.Namespace) -> int:
    config = _config(args, {"corpus.group_size": args.group_size, "seeds.grouping": args.seed})
    segments = import_corpus(args.data, CorpusFormat.CANONICAL_JSONL)
    level = Granularity(args.level)
    units = build_granularity(
        segments,
        level,
        group_size=config.corpus.group_size,
        seed=config.seeds.grouping,
        joiner=config.corpus.joiner,
    )
    out = Path(args.out) / f"units.{level.value}.jsonl"
    write_units(out, units)
    counter = get_counter(config.backend.token_counter)
    stats = [row.model_dump(mode="json") for row in corpus_stats(units, counter) if row.granularity == level]
    fields: Dict[str, Any] = {"units": len(units), "output": str(out), "stats": stats}
    if args.demos_out:
        pool = build_demo_pool(
            segments,
            group_size=config.corpus.group_size,
            seed=config.seeds.grouping,
            joiner=config.corpus.joiner,
            counter=counter,
        )
        write_demo_pool(args.demos_out, pool)
        fields["demonstrations"] = len(pool)
    _emit("build", **fields)
    return 0


##################################################
# eval
##################################################


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config(
        args,
        {
            "prompt.family": args.prompt,
            "prompt.n_shots": args.shots,
            "prompt.with_explanations": args.explanations,
            "prompt.with_da": args.da,
            "prompt.demos_path": args.demos,
            "prompt.demo_match": args.demo_match,
            "backend.kind": args.backend,
            "backend.model": args.model,
            "backend.concurrency": args.concurrency,
            "backend.cache_dir": args.cache_dir,
            "scoring.weights": args.weights,
            "seeds.demos": args.seed,
            "seeds.simulator": args.seed,
        },
    )
    run_dir = Path(args.out)
    opts = config.prompt.to_options()
    units = read_units(args.data)
    inputs = {Path(args.data).name: file_digest(args.data)}

    demo_pool = None
    if opts.family == PromptFamily.GMICL:
        if not config.prompt.demos_path:
            raise ConfigError("gmicl needs a demonstration pool (--demos)")
        demo_pool = load_demo_pool(config.prompt.demos_path)
        inputs[Path(config.prompt.demos_path).name] = file_digest(config.prompt.demos_path)

    run_id = compute_run_id(config, dumps(inputs))
    logger.info("Run %s: %d units, method %s, backend %s", run_id, len(units), opts.method_label, config.backend.kind)
    write_units(run_dir / UNITS, [u.model_copy(update={"run_id": run_id}) for u in units])

    counter = get_counter(config.backend.token_counter)
    requests = build_requests(
        units,
        opts,
        config.prompt.decoding_for,
        demo_pool=demo_pool,
        demo_seed=config.seeds.demos,
        demo_match=config.prompt.demo_match,
        counter=counter,
    )
    backend = make_backend(config, {u.unit_id: u for u in units}, counter)
    cache = ResponseCache(config.backend.cache_dir or run_dir / "responses")

    started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    started = time.perf_counter()
    responses = execute(
        requests,
        backend,
        cache,
        concurrency=config.backend.concurrency,
        rate_limit_rpm=config.backend.rate_limit_rpm,
        progress=not args.no_progress,
    )
    wall_ms = int((time.perf_counter() - started) * 1000)

    results = collect_results(run_id, units, requests, responses, opts)
    write_jsonl(run_dir / RESULTS, (r.model_dump(mode="json", exclude=_VOLATILE) for r in results))

    total_spans = sum(r.n_errors for r in results)
    manifest = RunManifest(
        run_id=run_id,
        command="eval",
        config=config.model_dump(mode="json"),
        inputs=inputs,
        counts={
            "units": len(units),
            "requests": len(requests),
            "failed": sum(r.parse_status == ParseStatus.FAILED for r in results),
            "recovered": sum(r.parse_status == ParseStatus.RECOVERED for r in results),
            "dropped_annotations": sum(r.n_dropped for r in results),
            "clamped_scores": sum(r.n_clamped for r in results),
        },
        total_spans=total_spans,
        timing=ManifestTiming(
            started_at=started_at,
            wall_clock_ms=wall_ms,
            spans_per_second=total_spans / (wall_ms / 1000) if wall_ms else 0.0,
            cache_hits=cache.hits,
            cache_misses=cache.misses,
        ),
    )
    write_json(run_dir / MANIFEST, manifest)
    _emit("eval", run_id=run_id, units=len(units), requests=len(requests), total_spans=total_spans, output=str(run_dir))
    return 0


##################################################
# run loading
##################################################


def load_run(run_dir: Path) -> Tuple[RunManifest, List[EvalUnit], List[UnitResult]]:
    """
    Read a run directory and check that its results belong to its manifest.

    Raises:
        ManifestError: If an artifact is missing or names another run
    """
    for name in (MANIFEST, UNITS, RESULTS):
        if not (run_dir / name).is_file():
            raise ManifestError(f"{run_dir}: missing {name}")
    try:
        manifest = RunManifest.model_validate(read_json(run_dir / MANIFEST))
    except ValidationError as e:
        raise ManifestError(f"{run_dir / MANIFEST}: schema mismatch: {e}") from e
    results = read_jsonl(run_dir / RESULTS, UnitResult)
    units = read_units(run_dir / UNITS)
    carried = {RESULTS: {r.run_id for r in results}, UNITS: {u.run_id for u in units}}
    for name, run_ids in carried.items():
        foreign = sorted(run_ids - {manifest.run_id})
        if foreign:
            raise ManifestError(f"{run_dir}: {name} carries run_ids {foreign}, manifest is {manifest.run_id}")
    return manifest, units, results


def _run_config(manifest: RunManifest) -> RunConfig:
    return RunConfig.model_validate(manifest.config)


def _run_weights(manifest: RunManifest, flag: Optional[Dict[str, Any]]) -> SeverityWeights:
    if flag is not None:
        return SeverityWeights.model_validate(flag)
    return _run_config(manifest).scoring.weights


def _granularity(results: Sequence[UnitResult]) -> Optional[str]:
    levels = sorted({r.granularity.value for r in results})
    return levels[0] if len(levels) == 1 else None


def _method(results: Sequence[UnitResult]) -> Optional[str]:
    methods = sorted({r.method for r in results})
    return methods[0] if len(methods) == 1 else None


def _ranking(
    manifest: RunManifest, units: Sequence[EvalUnit], results: Sequence[UnitResult], w: SeverityWeights
) -> Dict[str, Any]:
    """System scores, gold scores and pairwise accuracy of one run."""
    config = _run_config(manifest)
    gold = gold_system_scores(units, w, config.scoring.gold_critical_as_major)
    methods = {"mqm": system_scores(results, w)}
    if config.prompt.to_options().with_da:
        methods["da"] = system_scores(results, w, method=ScoreMethod.DA)
    out: Dict[str, Any] = {"gold": gold}
    for name, scores in methods.items():
        metric = {s: v.score for s, v in scores.items()}
        unranked = sorted(set(metric) ^ set(gold))
        if unranked:
            logger.warning("%s: systems without both metric and gold scores are not ranked: %s", name, unranked)
        shared = sorted(set(metric) & set(gold))
        accuracy: Optional[float]
        try:
            accuracy = pairwise_accuracy({s: metric[s] for s in shared}, {s: gold[s] for s in shared})
        except MetaEvalError as e:
            logger.warning("%s: pairwise accuracy unavailable: %s", name, e)
            accuracy = None
        out[name] = {"systems": metric, "pairwise_accuracy": accuracy}
    return out


##################################################
# score / rank / spanf1
##################################################


def cmd_score(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    manifest, _, results = load_run(run_dir)
    w = _run_weights(manifest, args.weights)
    unit_scores = mqm_unit_scores(results, w)
    with_da = _run_config(manifest).prompt.to_options().with_da
    if with_da:
        unit_scores += da_unit_scores(results)
    write_jsonl(run_dir / SCORES, (u.model_copy(update={"run_id": manifest.run_id}) for u in unit_scores))

    systems = {"mqm": {s: v.model_dump(mode="json") for s, v in system_scores(results, w).items()}}
    if with_da:
        systems["da"] = {
            s: v.model_dump(mode="json") for s, v in system_scores(results, w, method=ScoreMethod.DA).items()
        }
    write_json(
        run_dir / SYSTEM_SCORES,
        {
            "run_id": manifest.run_id,
            "granularity": _granularity(results),
            "method": _method(results),
            "weights": w.model_dump(mode="json"),
            "systems": systems,
        },
    )
    _emit("score", run_id=manifest.run_id, unit_scores=len(unit_scores), systems=len(systems["mqm"]))
    return 0


def cmd_rank(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    manifest, units, results = load_run(run_dir)
    ranking = _ranking(manifest, units, results, _run_weights(manifest, args.weights))
    write_json(
        run_dir / RANK,
        {"run_id": manifest.run_id, "granularity": _granularity(results), "method": _method(results), **ranking},
    )
    _emit("rank", run_id=manifest.run_id, pairwise_accuracy=ranking["mqm"]["pairwise_accuracy"])
    return 0


def cmd_spanf1(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    manifest, units, results = load_run(run_dir)
    by_id = {u.unit_id: u for u in units}
    rows = [
        (r.method, r.granularity.value, r.lp, unit_prf(by_id[r.unit_id], r))
        for r in results
        if by_id[r.unit_id].has_gold
    ]
    table = prf_report(rows)
    records = table.astype(object).where(pd.notna(table), None).to_dict(orient="records")
    write_json(run_dir / SPANF1, {"run_id": manifest.run_id, "rows": records})
    _emit("spanf1", run_id=manifest.run_id, rows=records)
    return 0


##################################################
# report
##################################################


def cmd_report(args: argparse.Namespace) -> int:
    runs = [load_run(Path(r)) for r in args.runs]
    run_ids = sorted({m.run_id for m, _, _ in runs})
    if len(run_ids) > 1 and not args.compare:
        raise ManifestError(f"runs {run_ids} differ; pass --compare to report across runs")
    if args.out:
        out = Path(args.out)
    elif len(args.runs) == 1:
        out = Path(args.runs[0]) / "reports"
    else:
        raise ConfigError("report over several runs needs --out")

    all_results = [r for _, _, results in runs for r in results]
    prf_rows = []
    accuracy_rows = []
    throughput_rows = []
    for manifest, units, results in runs:
        by_id = {u.unit_id: u for u in units}
        prf_rows.extend(
            (r.method, r.granularity.value, r.lp, unit_prf(by_id[r.unit_id], r))
            for r in results
            if by_id[r.unit_id].has_gold
        )
        ranking = _ranking(manifest, units, results, _run_config(manifest).scoring.weights)
        keys = {"run_id": manifest.run_id, "method": _method(results), "granularity": _granularity(results)}
        accuracy_rows.append(
            {
                **keys,
                "n_units": len(results),
                "total_spans": manifest.total_spans,
                "pairwise_accuracy": ranking["mqm"]["pairwise_accuracy"],
                "pairwise_accuracy_da": ranking["da"]["pairwise_accuracy"] if "da" in ranking else None,
            }
        )
        throughput_rows.append(
            {
                **keys,
                "total_spans": manifest.total_spans,
                "wall_clock_ms": manifest.timing.wall_clock_ms,
                "spans_per_second": manifest.timing.spans_per_second,
            }
        )

    counter = get_counter(_run_config(runs[0][0]).backend.token_counter)
    tables = {
        "span_counts": span_count_report(all_results),
        "lengths": length_report(all_results, counter),
        "accuracy": pd.DataFrame(accuracy_rows),
        "char_prf": prf_report(prf_rows),
        "throughput": pd.DataFrame(throughput_rows),
    }
    for name, table in tables.items():
        write_table(table, out / name, run_ids)
    _emit("report", run_ids=run_ids, output=str(out), tables=sorted(tables))
    return 0


##################################################
# export-ft
##################################################


def cmd_export_ft(args: argparse.Namespace) -> int:
    config = _config(args, {"corpus.group_size": args.group_size, "seeds.grouping": args.seed})
    segments = import_corpus(args.data, CorpusFormat.CANONICAL_JSONL)
    stats = export_ft(
        segments,
        args.out,
        group_size=config.corpus.group_size,
        seed=config.seeds.grouping,
        epochs_note=args.epochs_note,
        joiner=config.corpus.joiner,
    )
    _emit("export-ft", output=str(args.out), **stats)
    return 0


##################################################
# parser
##################################################


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longform-mqm", description="Long-form MQM evaluation harness")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="Import a corpus (or generate a synthetic one) into segments.jsonl")
    p.add_argument("--data", help="Corpus file")
    p.add_argument("--format", default=CorpusFormat.CANONICAL_JSONL.value, choices=[f.value for f in CorpusFormat])
    p.add_argument("--lp", help="Translation direction for records that carry none")
    p.add_argument("--synthetic", type=int, metavar="N_DOCS", help="Generate a synthetic corpus instead")
    p.add_argument("--systems", type=int, default=3, help="Systems in the synthetic corpus")
    p.add_argument("--seed", type=int, default=0, help="Synthetic corpus seed")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("build", help="Build evaluation units at one granularity")
    p.add_argument("--data", required=True, help="segments.jsonl")
    p.add_argument("--level", default=Granularity.SEG.value, choices=[g.value for g in Granularity])
    p.add_argument("--group-size", type=int, help="Documents per doc5 group")
    p.add_argument("--seed", type=int, help="Grouping seed")
    p.add_argument("--demos-out", help="Also write a demonstration pool built from these segments")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("eval", help="Run an evaluation over a unit file")
    p.add_argument("--data", required=True, help="units.<level>.jsonl")
    p.add_argument("--prompt", choices=[f.value for f in PromptFamily])
    p.add_argument("--shots", type=int, choices=[0, 3, 5])
    p.add_argument("--explanations", type=_on_off, metavar="{on,off}")
    p.add_argument("--da", type=_on_off, metavar="{on,off}")
    p.add_argument("--backend", choices=["live", "oracle", "sim"])
    p.add_argument("--model", help="Model name for the live backend")
    p.add_argument("--weights", type=_weights, help="minor,major,critical[,cap]")
    p.add_argument("--seed", type=int, help="Seed for demonstration selection and the simulator")
    p.add_argument("--demos", help="Demonstration pool JSONL (gmicl)")
    p.add_argument("--demo-match", choices=["granularity", "length"])
    p.add_argument("--concurrency", type=int)
    p.add_argument("--cache-dir", help="Response cache directory (default <out>/responses)")
    p.add_argument("--no-progress", action="store_true", help="Hide the progress bar")
    p.add_argument("--out", required=True, help="Run directory")
    p.set_defaults(func=cmd_eval)

    for name, func, text in (
        ("score", cmd_score, "Unit and system scores of a run"),
        ("rank", cmd_rank, "System ranking accuracy of a run against gold"),
        ("spanf1", cmd_spanf1, "Character-level span P/R/F1 of a run"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--run", required=True, help="Run directory")
        if name != "spanf1":
            p.add_argument("--weights", type=_weights, help="minor,major,critical[,cap]")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="Report tables over one or more runs")
    p.add_argument("--runs", nargs="+", required=True, help="Run directories")
    p.add_argument("--compare", action="store_true", help="Allow runs with different run_ids")
    p.add_argument("--out", help="Report directory (default <run>/reports for a single run)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-ft", help="Export chat fine-tuning data from a gold-annotated corpus")
    p.add_argument("--data", required=True, help="segments.jsonl")
    p.add_argument("--group-size", type=int)
    p.add_argument("--seed", type=int, help="Grouping seed")
    p.add_argument("--epochs-note", default=DEFAULT_EPOCHS_NOTE)
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(func=cmd_export_ft)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point.

    Returns:
        int: 0 on success, 1 on a handled failure (argparse exits with 2)
    """
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level))
    func: Callable[[argparse.Namespace], int] = args.func
    try:
        return func(args)
    except (LongformMqmError, OSError, ValidationError, UnicodeDecodeError) as e:
        logger.exception("%s failed", args.command)
        print(dumps({"status": "error", "command": args.command, "error_type": type(e).__name__, "message": str(e)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
