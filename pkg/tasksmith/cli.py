"""
Command-line entry points.

Usage:
  python main.py run --config config/toy_run.yaml [--seed 7] [--resume] [--out-dir runs/toy]
  python main.py eval --config config/toy_run.yaml --mode forward|matrix|orders [--checkpoints "runs/toy/checkpoints/*.ckpt"]
  python main.py score --config config/toy_run.yaml --input samples.jsonl [--strict]
  python main.py gen-pool --config config/toy_run.yaml [--task toy-t0]
"""

import argparse
import asyncio
import glob
import json
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict
from rich.table import Table

from tasksmith import settings
from tasksmith.backends.gateway import BackendGateway
from tasksmith.exceptions import ConfigError, ConfigValidationError, ParseError, PreconditionError, TaskFailedError, TasksmithError, UnknownLabel
from tasksmith.schemas.policy import PolicyKind
from tasksmith.schemas.records import RecordError, read_jsonl, write_dict_jsonl, write_json, write_jsonl
from tasksmith.schemas.report import StreamReport
from tasksmith.schemas.sample import SynthSample
from tasksmith.services.config_service import RunConfig, get_config_service
from tasksmith.services.evaluation.diversity import diversity_report, write_diversity_report
from tasksmith.services.evaluation.orders import order_indices, order_rows, permute_stream, stage_means, write_orders_report
from tasksmith.services.evaluation.toy_family import materialize_family
from tasksmith.services.evaluation.transfer import build_transfer_matrix, cell_rng, eval_forward_transfer, write_forward_transfer, write_transfer_matrix
from tasksmith.services.evaluation.utility import toy_utility
from tasksmith.services.orchestrator.checkpoint import CHECKPOINT_SUFFIX, PARTIAL_SUFFIX, find_latest_checkpoint, list_checkpoints, load_checkpoint, new_rng
from tasksmith.services.orchestrator.stream_runner import StreamRunner
from tasksmith.services.prompt_engine_service import PromptEngineService
from tasksmith.services.scoring.scoring_service import ScoringService

logger = logging.getLogger("tasksmith.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_TASK_FAILED = 3
EXIT_RECORDS = 4


class ScoreInput(BaseModel):
    """One line of an external sample file handed to ``score``."""

    model_config = ConfigDict(extra="ignore")

    text: str
    task_id: str
    label: str
    prompt_id: str = "external"


class RecordsRejected(TasksmithError):
    def __init__(self, path: str, errors: list[RecordError]):
        self.path = path
        self.errors = errors
        first = errors[0]
        super().__init__(f"{path}:{first.line}: {first.message} ({len(errors)} rejected record(s))")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tasksmith", description="Stream-trained synthetic data engine")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="config/toy_run.yaml", help="Path to the run config YAML")
    common.add_argument("--seed", type=int, default=None, help="Override the config seed")
    common.add_argument("--strict", action="store_true", default=None, help="Reject unknown keys in input records")
    common.add_argument("--out-dir", default=None, help="Override orchestrator.output_dir")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="Train through the task stream")
    run.add_argument("--resume", action="store_true", help="Continue from the latest task-boundary checkpoint")
    run.add_argument("--allow-config-drift", action="store_true", help="Resume even if the config digest changed")

    evaluate = sub.add_parser("eval", parents=[common], help="Evaluate checkpoints on the toy family")
    evaluate.add_argument("--mode", choices=["forward", "matrix", "orders"], default="forward")
    evaluate.add_argument("--checkpoints", default=None, help="Glob of checkpoint files (default: this stream's boundary checkpoints)")
    evaluate.add_argument("--allow-config-drift", action="store_true", help="Accept checkpoints written under another config digest")

    score = sub.add_parser("score", parents=[common], help="Score an external JSONL sample file")
    score.add_argument("--input", required=True, help="JSONL with text, task_id and label per line")
    score.add_argument("--output", default=None, help="Enriched JSONL path (default: <out-dir>/scored.jsonl)")

    pool = sub.add_parser("gen-pool", parents=[common], help="Build and export prompt pools only")
    pool.add_argument("--task", action="append", default=None, help="Task id to build (repeatable; default: every task)")
    return parser


def error_payload(error: BaseException) -> tuple[int, dict]:
    payload = {"error": type(error).__name__, "message": str(error)}
    if isinstance(error, TaskFailedError):
        payload["task_id"] = error.task_id
        payload["cause"] = type(error.cause).__name__
        return EXIT_TASK_FAILED, payload
    if isinstance(error, ParseError):
        payload.update({"path": error.path, "line": error.line, "column": error.column})
    if isinstance(error, ConfigValidationError):
        payload["issues"] = [issue.model_dump(exclude_none=True) for issue in error.issues]
    if isinstance(error, ConfigError):
        return EXIT_CONFIG, payload
    if isinstance(error, RecordsRejected):
        payload["path"] = error.path
        payload["records"] = [e.model_dump() for e in error.errors]
        return EXIT_RECORDS, payload
    return EXIT_ERROR, payload


def load_config(args) -> RunConfig:
    service = get_config_service(args.config)
    service.load(seed=args.seed, strict=args.strict)
    service.with_output_dir(args.out_dir)
    return service.config


def print_report(report: StreamReport):
    table = Table(title=f"Stream {report.stream_id} · seed {report.seed}", title_style="title")
    for column in ["task", "steps", "mean rs", "mean ds", "mean r_total"]:
        table.add_column(column, justify="right" if column != "task" else "left")
    for row in report.rows:
        table.add_row(row.task_id, str(row.steps), f"{row.mean_rs:.3f}", f"{row.mean_ds:.3f}", f"{row.mean_r_total:.3f}")
    settings.console.print(table)


async def run_stream(config: RunConfig, gateway: BackendGateway, stream, resume: bool, allow_drift: bool) -> tuple[StreamRunner, object, StreamReport]:
    runner = StreamRunner(config, gateway)
    checkpoint = None
    if resume:
        path = find_latest_checkpoint(runner.checkpoint_dir, stream.stream_id)
        if path is None:
            logger.warning(f"⚠️ No checkpoint for {stream.stream_id} in {runner.checkpoint_dir}; starting from the first task")
        else:
            checkpoint = load_checkpoint(path, expected_digest=runner.digest, allow_drift=allow_drift)
    state, report = await runner.run_stream(stream, checkpoint)
    return runner, state, report


async def cmd_run(args) -> int:
    config = load_config(args)
    gateway = BackendGateway(config.backends)
    runner, state, report = await run_stream(config, gateway, config.task_stream(), args.resume, args.allow_config_drift)

    json_path, csv_path = report.write(runner.output_dir)
    if state.pool.entries:
        diversity = await diversity_report(state.pool.samples, gateway, config.roles.embedder)
        write_diversity_report(diversity, runner.output_dir, "pool-diversity")
    print_report(report)
    logger.info(f"📝 Report written to {csv_path} and {json_path}")
    return EXIT_OK


def boundary_checkpoints(pattern: str, digest: str, allow_drift: bool):
    """(checkpoint id, state) for every task-boundary checkpoint matching ``pattern``, ordered by task cursor."""
    paths = sorted(p for p in glob.glob(pattern) if p.endswith(CHECKPOINT_SUFFIX) and not p.endswith(PARTIAL_SUFFIX))
    states = []
    for path in paths:
        state = load_checkpoint(path, expected_digest=digest, allow_drift=allow_drift).state
        if state.task_cursor > 0:
            states.append((Path(path).name.removesuffix(CHECKPOINT_SUFFIX), state))
    return sorted(states, key=lambda item: item[1].task_cursor)


async def cmd_eval(args) -> int:
    config = load_config(args)
    if config.stream.toy_family is None:
        raise PreconditionError("evaluation needs a stream.toy_family in the run config")
    family = materialize_family(config.stream.toy_family)
    stream = config.task_stream()
    out_dir = Path(config.orchestrator.output_dir)

    if args.mode == "orders":
        return await eval_orders(args, config, family, stream, out_dir)

    checkpoint_dir = out_dir / "checkpoints"
    pattern = args.checkpoints or str(checkpoint_dir / f"{glob.escape(stream.stream_id)}-task*{CHECKPOINT_SUFFIX}")
    states = boundary_checkpoints(pattern, config.digest(), args.allow_config_drift)
    if not states:
        raise PreconditionError(f"no task-boundary checkpoints match {pattern}")
    checkpoints = [(checkpoint_id, state.policy) for checkpoint_id, state in states]

    for seed in config.eval.seeds:
        stem = f"{args.mode}-{stream.stream_id}-seed{seed}"
        if args.mode == "forward":
            report = eval_forward_transfer(checkpoints, family, config.eval.draws, seed)
            write_forward_transfer(report, out_dir / "eval", stem)
            table = Table(title=f"Forward transfer · seed {seed}", title_style="title")
            for column in ["from", "to", "utility", "baseline", "delta"]:
                table.add_column(column)
            for t in report.transitions:
                table.add_row(t.from_task, t.to_task, f"{t.utility:.3f}", f"{t.baseline:.3f}", f"{t.delta:+.3f}")
        else:
            matrix = build_transfer_matrix(checkpoints, family, config.eval.draws, seed, include_untrained=config.eval.include_untrained_row)
            write_transfer_matrix(matrix, out_dir / "eval", stem)
            table = Table(title=f"Transfer matrix · seed {seed}", title_style="title")
            table.add_column("checkpoint")
            for task_id in matrix.col_tasks:
                table.add_column(task_id, justify="right")
            for checkpoint_id, values in zip(matrix.row_checkpoints, matrix.values, strict=True):
                table.add_row(checkpoint_id, *(f"{v:.3f}" for v in values))
        settings.console.print(table)
    logger.info(f"📝 {args.mode} reports written to {out_dir / 'eval'}")
    return EXIT_OK


async def eval_orders(args, config: RunConfig, family, stream, out_dir: Path) -> int:
    """Run (or pick up) one stream per configured order and compare them stage by stage."""
    names = config.eval.permutations or list(config.stream.orders)
    if not names:
        raise PreconditionError("orders mode needs stream.orders in the run config")
    gateway = BackendGateway(config.backends)
    family_index = {task_id: i for i, task_id in enumerate(family.task_ids)}
    rows = []
    for name in names:
        permuted = permute_stream(stream, order_indices(stream, config.stream.orders[name]), name)
        runner, _, report = await run_stream(config, gateway, permuted, resume=True, allow_drift=args.allow_config_drift)
        utilities = {}
        seed = config.eval.seeds[0]
        for _, path in list_checkpoints(runner.checkpoint_dir, permuted.stream_id):
            state = load_checkpoint(path, expected_digest=runner.digest, allow_drift=args.allow_config_drift).state
            if state.task_cursor == 0 or state.policy.kind != PolicyKind.TOY_DISCRETE:
                continue
            task_id = permuted.tasks[state.task_cursor - 1].task_id
            if task_id in family_index:
                utilities[task_id] = toy_utility(state.policy, family_index[task_id], family, config.eval.draws, cell_rng(path.name, task_id, seed))
        rows.extend(order_rows(name, report, utilities))

    stem = f"orders-{stream.stream_id}-seed{config.eval.seeds[0]}"
    write_orders_report(rows, out_dir / "eval", stem)
    table = Table(title="Stage means of r_total per order", title_style="title")
    for column in ["order", "early", "intermediate", "late"]:
        table.add_column(column)
    for order, stages in stage_means(rows).items():
        table.add_row(order, *(f"{stages[s]:.3f}" if s in stages else "-" for s in ["early", "intermediate", "late"]))
    settings.console.print(table)
    return EXIT_OK


async def cmd_score(args) -> int:
    config = load_config(args)
    tasks = {task.task_id: task for task in config.stream.tasks}
    records, errors = read_jsonl(args.input, ScoreInput, strict=config.strict_parsing)

    accepted: list[tuple[int, ScoreInput]] = []
    for line, record in records:
        task = tasks.get(record.task_id)
        if task is None:
            errors.append(RecordError(line=line, message=f"unknown task '{record.task_id}'"))
        elif record.label not in task.label_set:
            errors.append(RecordError(line=line, message=str(UnknownLabel(record.label, task.label_set))))
        else:
            accepted.append((line, record))
    errors.sort(key=lambda e: e.line)
    for error in errors:
        logger.warning(f"⚠️ {args.input}:{error.line}: {error.message}")
    if errors and config.strict_parsing:
        raise RecordsRejected(args.input, errors)
    if not accepted:
        logger.warning(f"⚠️ {args.input} holds no scorable records")

    gateway = BackendGateway(config.backends)
    samples = {line: SynthSample.create(text=r.text, task_id=r.task_id, prompt_id=r.prompt_id, label=r.label) for line, r in accepted}
    scored: dict[int, SynthSample] = {}
    for task_id, task in tasks.items():
        lines = [line for line, r in accepted if r.task_id == task_id]
        if not lines:
            continue
        results = await ScoringService(gateway, config.task_scoring(task)).score_batch([samples[line] for line in lines])
        scored.update(zip(lines, results, strict=True))

    out_dir = Path(config.orchestrator.output_dir)
    output = Path(args.output) if args.output else out_dir / "scored.jsonl"
    rows = []
    for line in sorted(scored):
        sample = scored[line]
        rows.append({"line": line, "sample_id": sample.sample_id, "task_id": sample.task_id, "label": sample.label, "text": sample.text, **sample.rewards.model_dump()})
    write_dict_jsonl(output, rows)

    summary = {"input": args.input, "scored": len(rows), "rejected": [e.model_dump() for e in errors]}
    if rows:
        summary["mean_rs"] = sum(r["rs"] for r in rows) / len(rows)
        summary["mean_ds"] = sum(r["ds"] for r in rows) / len(rows)
        summary["mean_r_total"] = sum(r["r_total"] for r in rows) / len(rows)
        diversity = await diversity_report(list(scored.values()), gateway, config.roles.embedder)
        write_diversity_report(diversity, output.parent, output.stem + "-diversity")
        summary["mean_similarity"] = diversity.mean_similarity
        summary["distinct_ngram_ratio"] = diversity.distinct_ngram_ratio
    write_json(output.with_suffix(".summary.json"), summary)

    table = Table(title=f"Scored {len(rows)} record(s) · rejected {len(errors)}", title_style="title")
    for column in ["line", "task", "rs", "ds", "r_total"]:
        table.add_column(column)
    for row in rows:
        table.add_row(str(row["line"]), row["task_id"], f"{row['rs']:.3f}", f"{row['ds']:.3f}", f"{row['r_total']:.3f}")
    settings.console.print(table)
    return EXIT_OK


async def cmd_gen_pool(args) -> int:
    config = load_config(args)
    wanted = set(args.task or [])
    unknown = wanted - {t.task_id for t in config.stream.tasks}
    if unknown:
        raise PreconditionError(f"unknown task(s) {sorted(unknown)}")

    gateway = BackendGateway(config.backends)
    engine = PromptEngineService(gateway, config.roles.evolution_backend, config.decoding)
    rng = new_rng(config.seed)
    out_dir = Path(config.orchestrator.output_dir) / "pools"

    table = Table(title="Prompt pools", title_style="title")
    for column in ["task", "prompts", "dispersion"]:
        table.add_column(column)
    for task in config.stream.tasks:
        if wanted and task.task_id not in wanted:
            continue
        setup = config.prompts[task.prompt_template_ref]
        engine.parallelism = setup.evolution.parallelism
        pool = await engine.build_prompt_pool(task, setup, rng)
        write_jsonl(out_dir / f"{task.task_id}.jsonl", pool.prompts)
        write_jsonl(out_dir / f"{task.task_id}.log.jsonl", pool.generation_log)
        dispersion = await engine.pool_dispersion(pool, config.roles.embedder)
        table.add_row(task.task_id, str(len(pool.prompts)), f"{dispersion:.4f}")
    settings.console.print(table)
    logger.info(f"📝 Prompt pools written to {out_dir}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "score": cmd_score, "gen-pool": cmd_gen_pool}


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    settings.set_verbose(args.verbose)
    settings.print_startup_banner(args.command)

    try:
        return asyncio.run(COMMANDS[args.command](args))
    except (TasksmithError, OSError) as e:
        code, payload = error_payload(e)
        logger.error(f"❌ {payload['error']}: {payload['message']}")
        print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)
        return code
