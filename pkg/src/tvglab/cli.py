"""Command-line surface.

Subcommands: invert, score, train-toy, rollout, serve-rewards, sample-tasks.
Exit codes: 0 success, 1 I/O failure, 2 validation or protocol failure.
All commands are deterministic given identical inputs and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .core import TaskKind
from .datasets import FORMATS, LoadError, read_annotations
from .invert import DEFAULT_TEMPLATES, PromptTemplates, invert_dataset
from .metrics import score_run
from .records import (
    RecordError,
    breakdown_to_record,
    dumps,
    instance_from_record,
    instance_to_record,
    read_records,
)
from .rewards import combined_reward, sample_task_kind

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fail(message: str, code: int) -> "CliError":
    return CliError(message, code)


def _read_instances(path: Path):
    instances = []
    try:
        with path.open(encoding="utf-8") as fp:
            for line_no, record in read_records(fp):
                try:
                    instances.append(instance_from_record(record))
                except RecordError as exc:
                    raise _fail(f"{path}:{line_no}: {exc}", EXIT_INVALID) from exc
    except FileNotFoundError as exc:
        raise _fail(f"cannot read {path}: {exc}", EXIT_IO) from exc
    except RecordError as exc:
        raise _fail(f"{path}: {exc}", EXIT_INVALID) from exc
    return instances


def _apply_lexicon_override(path: str | None) -> None:
    if path:
        from .verbs import set_default_lexicon_path

        if not Path(path).is_file():
            raise _fail(f"lexicon file not found: {path}", EXIT_IO)
        set_default_lexicon_path(path)


def cmd_invert(args: argparse.Namespace) -> int:
    _apply_lexicon_override(args.lexicon)
    durations = None
    if args.durations:
        try:
            durations = json.loads(Path(args.durations).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise _fail(f"cannot read durations file: {exc}", EXIT_IO) from exc
        except json.JSONDecodeError as exc:
            raise _fail(f"bad durations file: {exc}", EXIT_INVALID) from exc
    templates = DEFAULT_TEMPLATES
    if args.prompts:
        try:
            templates = PromptTemplates.from_file(args.prompts)
        except FileNotFoundError as exc:
            raise _fail(f"cannot read prompts file: {exc}", EXIT_IO) from exc
        except ValueError as exc:
            raise _fail(f"bad prompts file: {exc}", EXIT_INVALID) from exc
    try:
        report = read_annotations(args.input, args.format, strict=args.strict,
                                  durations=durations)
    except FileNotFoundError as exc:
        raise _fail(str(exc), EXIT_IO) from exc
    except LoadError as exc:
        raise _fail(f"validation failure: {exc}", EXIT_INVALID) from exc
    kinds = []
    for name in args.kinds.split(","):
        try:
            kinds.append(TaskKind(name.strip()))
        except ValueError:
            raise _fail(f"unknown task kind {name.strip()!r}", EXIT_INVALID) from None
    verb_choice = args.verb_choice
    if verb_choice not in ("first", "all"):
        try:
            verb_choice = int(verb_choice)
        except ValueError:
            raise _fail(
                f"--verb-choice must be 'first', 'all', or an index, got {verb_choice!r}",
                EXIT_INVALID,
            ) from None
    instances, summary = invert_dataset(
        report.annotations, verb_choice=verb_choice, kinds=kinds, templates=templates
    )
    try:
        with open(args.output, "w", encoding="utf-8") as fp:
            for instance in instances:
                fp.write(dumps(instance_to_record(instance)) + "\n")
    except OSError as exc:
        raise _fail(f"cannot write {args.output}: {exc}", EXIT_IO) from exc
    print(
        f"annotations={len(report.annotations)} skipped_records={len(report.skips)} "
        f"instances={summary.total} no_verb_skips={summary.skipped_no_verb} "
        + " ".join(f"{k}={v}" for k, v in sorted(summary.counts.items())),
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    _apply_lexicon_override(args.lexicon)
    instances = _read_instances(Path(args.instances))
    responses_raw = []
    try:
        with open(args.responses, encoding="utf-8") as fp:
            for line_no, record in read_records(fp):
                if "response" not in record or not isinstance(record["response"], str):
                    raise _fail(
                        f"{args.responses}:{line_no}: record needs a string 'response'",
                        EXIT_INVALID,
                    )
                responses_raw.append((record.get("id"), record["response"]))
    except FileNotFoundError as exc:
        raise _fail(f"cannot read {args.responses}: {exc}", EXIT_IO) from exc
    except RecordError as exc:
        raise _fail(f"{args.responses}: {exc}", EXIT_INVALID) from exc
    if not responses_raw:
        raise _fail("empty responses file", EXIT_INVALID)

    # Match by id whenever ids are present, else by source order.
    if any(ident is not None for ident, _ in responses_raw):
        by_id = {}
        for ident, response in responses_raw:
            if ident is None:
                raise _fail("mixed id-matched and order-matched responses", EXIT_INVALID)
            by_id[ident] = response
        responses = []
        for instance in instances:
            ident = instance.source_annotation_id
            key = f"{ident}/{instance.kind.value}"
            if key in by_id:
                responses.append(by_id[key])
            elif ident in by_id:
                responses.append(by_id[ident])
            else:
                raise _fail(f"no response for instance id {ident!r}", EXIT_INVALID)
    else:
        if len(responses_raw) != len(instances):
            raise _fail(
                f"{len(instances)} instances but {len(responses_raw)} responses",
                EXIT_INVALID,
            )
        responses = [response for _, response in responses_raw]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        with (out_dir / "breakdowns.jsonl").open("w", encoding="utf-8") as fp:
            for instance, response in zip(instances, responses):
                breakdown = combined_reward(instance, response)
                fp.write(
                    dumps(breakdown_to_record(breakdown, instance.source_annotation_id)) + "\n"
                )
        report = score_run(instances, responses)
        report.metadata["run"] = "score"
        report.write(out_dir, csv_too=True)
    except OSError as exc:
        raise _fail(f"cannot write report: {exc}", EXIT_IO) from exc
    print((out_dir / "report.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_train_toy(args: argparse.Namespace) -> int:
    from .toy.train import run_toy_training, toylab_config_from_mapping

    try:
        values = load_config(args.config)
        config = toylab_config_from_mapping(values)
    except FileNotFoundError as exc:
        raise _fail(str(exc), EXIT_IO) from exc
    except (ConfigError, ValueError) as exc:
        raise _fail(f"bad config: {exc}", EXIT_INVALID) from exc
    _apply_lexicon_override(values.get("lexicon_path"))
    try:
        report = run_toy_training(config, args.out)
    except OSError as exc:
        raise _fail(f"cannot write outputs: {exc}", EXIT_IO) from exc
    print(report.to_table(), end="")
    return EXIT_OK


def cmd_rollout(args: argparse.Namespace) -> int:
    from .bridge import BridgeClient, collect_rollouts

    instances = _read_instances(Path(args.instances))
    if not instances:
        raise _fail("empty instances file", EXIT_INVALID)
    client = BridgeClient(args.endpoint, backoff_s=args.backoff)
    try:
        records, summary = collect_rollouts(
            client, instances, group_size=args.group_size, parallel=args.parallel
        )
    finally:
        client.close()
    try:
        with open(args.out, "w", encoding="utf-8") as fp:
            for record in records:
                fp.write(dumps(record.to_record()) + "\n")
    except OSError as exc:
        raise _fail(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    print(f"scored={summary.scored} failures={summary.failures}", file=sys.stderr)
    return EXIT_OK


def cmd_serve_rewards(args: argparse.Namespace) -> int:
    from .service import serve_rewards

    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise _fail(f"--bind must be host:port, got {args.bind!r}", EXIT_INVALID)
    serve_rewards(host=host, port=int(port))
    return EXIT_OK


def cmd_sample_tasks(args: argparse.Namespace) -> int:
    if not 0.0 <= args.p <= 1.0:
        raise _fail(f"--p must be in [0, 1], got {args.p}", EXIT_INVALID)
    if args.n < 1:
        raise _fail("--n must be positive", EXIT_INVALID)
    rng = np.random.default_rng(args.seed)
    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for _ in range(args.n):
            sink.write(sample_task_kind(rng, args.p).value + "\n")
    finally:
        if sink is not sys.stdout:
            sink.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvglab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("invert", help="expand annotations into task instances")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=FORMATS, default="native")
    p.add_argument("--verb-choice", default="first", help="first, all, or an occurrence index")
    p.add_argument("--kinds", default="tvg,vc,ar,vd")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--durations", help="JSON file mapping video id to duration seconds")
    p.add_argument("--prompts", help="prompt template override file")
    p.add_argument("--lexicon", help="verb lexicon file override")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("score", help="score a responses file against an instances file")
    p.add_argument("--instances", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--lexicon", help="verb lexicon file override")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("train-toy", help="run the synthetic training loop")
    p.add_argument("--config", help="key=value config file (or $TVGLAB_CONFIG)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("rollout", help="sample and score groups from a bridge endpoint")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--group-size", type=int, default=8)
    p.add_argument("--parallel", type=int, default=4)
    p.add_argument("--backoff", type=float, default=0.5)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("serve-rewards", help="run the reward-scoring service")
    p.add_argument("--bind", default="127.0.0.1:8710")
    p.set_defaults(func=cmd_serve_rewards)

    p = sub.add_parser("sample-tasks", help="emit a seeded task-kind draw stream")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample_tasks)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
