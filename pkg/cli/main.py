"""
Command surface: ``train``, ``eval``, ``compare``, ``gen-task``, ``gradcheck`` and
``fetch-corpus``.

Every RunConfig field is a flag of the same name. Values are layered as
defaults < environment < ``--config`` file < flags. Exit codes: 0 success,
1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import enum
import logging
import sys
import typing
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from config.settings import FETCHED_CORPUS, configure_logging, load_config_file, settings
from core.cells import CellKind
from core.errors import ConfigError, ContractError, PrnnError
from models.run_models import RunConfig, TaskKind
from services.compare_service import COMPARE_FILE, PLOT_SCRIPT, CompareService
from services.corpus_fetch_service import DEFAULT_BOOKS, CorpusFetchService
from services.gradcheck_service import GradcheckService
from services.task_export_service import TaskExportService
from services.training_service import TrainingService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

training_service = TrainingService()
export_service = TaskExportService()


class CliParser(argparse.ArgumentParser):
    """argparse reports problems through ConfigError instead of exiting."""

    def error(self, message: str) -> typing.NoReturn:
        raise ConfigError(f"{self.prog}: {message}")


def parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {raw!r}")


def parse_cell(raw: str) -> CellKind:
    try:
        return CellKind.parse(raw)
    except ContractError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def parse_int_list(raw: str) -> List[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from None


def parse_cell_list(raw: str) -> List[CellKind]:
    return [parse_cell(part) for part in raw.split(",") if part.strip()]


def _flag_kwargs(annotation: Any) -> Dict[str, Any]:
    """argparse keyword arguments for a RunConfig field annotation."""
    args = typing.get_args(annotation)
    if typing.get_origin(annotation) is typing.Union:
        annotation = next(a for a in args if a is not type(None))
        args = typing.get_args(annotation)
    if annotation is CellKind:
        return {"type": parse_cell, "metavar": "{" + ",".join(k.value for k in CellKind) + "}"}
    if isinstance(annotation, type) and issubclass(annotation, enum.Enum):
        return {"choices": [member.value for member in annotation]}
    if typing.get_origin(annotation) is typing.Literal:
        return {"choices": list(args)}
    if annotation is bool:
        return {"type": parse_bool, "metavar": "{true,false}"}
    if annotation in (int, float):
        return {"type": annotation}
    return {"type": str}


def add_run_flags(parser: argparse.ArgumentParser, skip: Sequence[str] = ()) -> None:
    group = parser.add_argument_group("run configuration")
    for name, info in RunConfig.model_fields.items():
        if name in skip:
            continue
        group.add_argument(
            f"--{name}",
            dest=name,
            default=argparse.SUPPRESS,
            help=info.description,
            **_flag_kwargs(info.annotation),
        )
    parser.add_argument("--config", help="flat key=value file; flags override its values")


def build_config(args: argparse.Namespace, **forced: Any) -> RunConfig:
    """Merge the config file (if any) with explicitly given flags."""
    values: Dict[str, Any] = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in RunConfig.model_fields:
        if name in vars(args):
            values[name] = getattr(args, name)
    values.update(forced)
    return RunConfig(**values)


def _emit(text: str) -> None:
    sys.stdout.write(text.rstrip("\n") + "\n")


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------
def cmd_train(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    result = training_service.train(cfg, resume=args.resume)
    _emit(result.model_dump_json(indent=2))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    result = training_service.evaluate(args.checkpoint, cfg)
    _emit(result.model_dump_json(indent=2))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.cells) < 2:
        raise ConfigError("compare needs at least two cells in --cells")
    if not args.seeds:
        raise ConfigError("compare needs at least one seed in --seeds")
    base = build_config(args)
    cfgs = [base.model_copy(update={"cell": cell}) for cell in args.cells]
    service = CompareService(training_service, workers=args.workers)
    rows = service.compare(cfgs, args.seeds)
    table = service.write_table(rows, f"{base.output_dir}/{COMPARE_FILE}")
    if args.emit_plot_script:
        script = service.write_plot_script(cfgs, args.seeds, f"{base.output_dir}/{PLOT_SCRIPT}")
        logger.info(f"Wrote plot script {script}")
    _emit(table.read_text(encoding="utf-8"))
    failed = sum(row.failures for row in rows)
    if failed:
        logger.error(f"{failed} run(s) failed; see the FAILED markers in {table}")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_gen_task(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    if cfg.task == TaskKind.CHARLM:
        raise ConfigError("gen-task supports --task adding or copying")
    path = export_service.export(cfg.task, cfg.T, cfg.seed, cfg.batch_size, args.out or cfg.output_dir)
    _emit(str(path))
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    kinds = list(CellKind) if args.cell is None else [args.cell]
    service = GradcheckService(steps=args.steps)
    max_entries = args.max_entries if args.max_entries > 0 else None
    failed = []
    for kind in kinds:
        report = service.check(kind, seed=args.seed, max_entries=max_entries)
        for name, err in report.per_tensor.items():
            _emit(f"{kind.value} {name} {err:.3e}")
        _emit(f"{kind.value} max relative error {report.max_rel_error:.3e} ({'ok' if report.passed else 'FAILED'})")
        if not report.passed:
            failed.append(kind.value)
    if failed:
        logger.error(f"Gradient check failed for {', '.join(failed)}")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_fetch_corpus(args: argparse.Namespace) -> int:
    path = CorpusFetchService().fetch(args.out, books=args.books, overwrite=args.overwrite)
    _emit(str(path))
    return EXIT_OK


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------
def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument("--log_level", default=None, help="overrides PRNN_LOG_LEVEL")

    parser = CliParser(
        prog="prnn",
        description="Persistent recurrent units and baseline cells: training and benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", metavar="{train,eval,compare,gen-task,gradcheck,fetch-corpus}", parser_class=CliParser)

    train = sub.add_parser("train", parents=[common], help="train one cell on one task")
    add_run_flags(train)
    train.add_argument("--resume", default=None, help="continue from a last.prnn checkpoint")
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", parents=[common], help="validation and test loss of a checkpoint")
    add_run_flags(evaluate)
    evaluate.add_argument("--checkpoint", required=True, help="a .prnn file written by train")
    evaluate.set_defaults(handler=cmd_eval)

    compare = sub.add_parser("compare", parents=[common], help="several cells over several seeds")
    add_run_flags(compare, skip=("cell", "seed"))
    compare.add_argument("--cells", type=parse_cell_list, required=True, help="comma-separated cell kinds")
    compare.add_argument("--seeds", type=parse_int_list, default=[1, 2, 3], help="comma-separated seeds")
    compare.add_argument("--workers", type=int, default=settings.workers, help="runs trained in parallel")
    compare.add_argument("--emit-plot-script", dest="emit_plot_script", action="store_true",
                         help="also write a matplotlib script plotting every run")
    compare.set_defaults(handler=cmd_compare)

    gen = sub.add_parser("gen-task", parents=[common], help="write one generated batch as CSV")
    add_run_flags(gen)
    gen.add_argument("--out", default=None, help="directory for the CSV (default: output_dir)")
    gen.set_defaults(handler=cmd_gen_task)

    grad = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the cell gradients")
    grad.add_argument("--cell", type=parse_cell, default=None, help="cell kind; all kinds when omitted")
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--steps", type=int, default=20, help="unrolled sequence length")
    grad.add_argument("--max_entries", type=int, default=0, help="entries sampled per tensor; 0 checks all")
    grad.set_defaults(handler=cmd_gradcheck)

    fetch = sub.add_parser("fetch-corpus", parents=[common], help="download the Gutenberg language-model corpus")
    fetch.add_argument("--out", default=str(FETCHED_CORPUS), help="sentence-per-line output file")
    fetch.add_argument("--books", type=parse_int_list, default=list(DEFAULT_BOOKS), help="comma-separated Gutenberg ids")
    fetch.add_argument("--overwrite", action="store_true", help="replace an existing file")
    fetch.set_defaults(handler=cmd_fetch_corpus)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    if getattr(args, "handler", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG

    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ValidationError as e:
        print(f"invalid configuration:\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PrnnError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"{args.command} failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


__all__ = ["main", "build_parser", "build_config", "EXIT_OK", "EXIT_CONFIG", "EXIT_RUNTIME"]
