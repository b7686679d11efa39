"""Command-line front end.

Results go to standard output (or --out); logs go to standard error. Every
library error carries its exit code: 2 for bad input or config, 3 for domain
errors, 4 for internal invariant violations.
"""
import argparse
import csv
import io
import json
import logging
import sys
import uuid
from pathlib import Path
from typing import List, Optional

from .core.convergence import PRESETS, convergence_experiment, parse_functional, preset_config, sample_functionals
from .core.counterexamples import counterexample_report
from .core.metric import skorokhod_distance
from .core.paths import compose, time_change
from .core.processes import sampler_from_descriptor
from .utils.db_handler import LedgerDB
from .utils.errors import CadlagLineError, ConfigError
from .utils.experiment_config import ConvergeConfig, CounterexampleConfig, SimulateConfig
from .utils.hardware_probe import HardwareProbe
from .utils.logger_config import setup_logging
from .utils.path_io import dumps_path, load_path, path_csv, path_to_dict, paths_csv
from .utils.project_config import SessionConfig
from .utils.seeding import SeedKey

logger = logging.getLogger(__name__)


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser.
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="root seed for stochastic commands")
    flags.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="distance tolerance")
    flags.add_argument("--out", default=argparse.SUPPRESS, help="write the result here instead of stdout")
    flags.add_argument("--format", choices=["json", "csv"], default=argparse.SUPPRESS)
    flags.add_argument("--session", default=argparse.SUPPRESS, help="session config JSON")
    flags.add_argument("--ledger", default=argparse.SUPPRESS, help="record the run in this SQLite ledger")
    flags.add_argument("--progress", action="store_true", default=argparse.SUPPRESS)
    flags.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return flags


def build_parser() -> argparse.ArgumentParser:
    flags = _global_flags()
    parser = argparse.ArgumentParser(
        prog="cadlag-line", parents=[flags],
        description="Skorokhod distances, random time substitution and convergence experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distance", parents=[flags], help="rho_k distance of two path files")
    p.add_argument("path_a")
    p.add_argument("path_b")
    p.add_argument("--k", type=float, default=None, help="interval [0, k]; defaults to the common horizon")
    p.add_argument("--no-witness", action="store_true")

    p = sub.add_parser("compose", parents=[flags], help="outer o inner of two path files")
    p.add_argument("outer")
    p.add_argument("inner")
    p.add_argument("--mesh", type=int, default=None, help="extra uniform rows in CSV output")

    p = sub.add_parser("simulate", parents=[flags], help="sample paths or functionals from a config")
    p.add_argument("config")

    p = sub.add_parser("converge", parents=[flags], help="convergence experiment from a config or preset")
    p.add_argument("config", nargs="?", default=None)
    p.add_argument("--preset", choices=PRESETS, default=None)
    p.add_argument("--a", type=float, default=None, help="preset intensity parameter")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--n-values", type=int, nargs="+", default=None)
    p.add_argument("--checkpoint", default="", help="resume file for interrupted runs")
    p.add_argument("--plot", default="", help="write plot data CSV here")

    p = sub.add_parser("counterexample", parents=[flags], help="distance tables of the counterexamples")
    p.add_argument("which", nargs="?", default=None, help="1, 2, lemma1 or lemma2")
    p.add_argument("--config", dest="config_file", default=None)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--families", type=int, default=None)
    p.add_argument("--variant", choices=["repaired", "as_stated"], default=None)
    return parser


def _opt(args, name, default=None):
    return getattr(args, name, default)


def _emit(text: str, args):
    out = _opt(args, "out")
    if out:
        path = Path(out)
        if str(path.parent):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info("OUTPUT_WRITTEN: %s", path)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _tol(args, session: SessionConfig) -> float:
    tol = _opt(args, "tol")
    return session.exact_tol if tol is None else tol


# Commands

def cmd_distance(args, session: SessionConfig) -> int:
    x = load_path(args.path_a)
    y = load_path(args.path_b)
    k = args.k if args.k is not None else min(x.horizon, y.horizon)
    result = skorokhod_distance(x, y, k, _tol(args, session), want_witness=not args.no_witness)
    if _opt(args, "format") == "csv":
        _emit(f"value,gap\n{result.value!r},{result.certified_gap!r}\n", args)
    else:
        _emit(json.dumps(result.to_dict(include_witness=not args.no_witness)), args)
    return 0


def cmd_compose(args, session: SessionConfig) -> int:
    outer = load_path(args.outer)
    inner = time_change(load_path(args.inner))
    result = compose(outer, inner)
    if _opt(args, "format") == "csv":
        _emit(path_csv(result, args.mesh), args)
    else:
        _emit(dumps_path(result), args)
    return 0


def _functional_csv(table: dict, names: List[str], count: int) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["sample"] + names)
    for i in range(count):
        writer.writerow([i] + [repr(float(table[name][i])) for name in names])
    return buffer.getvalue()


def cmd_simulate(args, session: SessionConfig) -> int:
    config = SimulateConfig.load(args.config)
    seed = config.require_seed(_opt(args, "seed"))
    sampler = sampler_from_descriptor(config.sampler_descriptor())
    functionals = [parse_functional(f) for f in config.functionals]
    names = [f.name for f in functionals]
    as_json = _opt(args, "format") == "json"

    if functionals:
        table = (sample_functionals(sampler, functionals, config.samples, seed, session)
                 if config.samples else {name: [] for name in names})
        if as_json:
            _emit(json.dumps({name: [float(v) for v in table[name]] for name in names}), args)
        else:
            _emit(_functional_csv(table, names, config.samples), args)
        return 0

    key = SeedKey(seed)
    paths = [sampler.sample(key.spawn(i)) for i in range(config.samples)]
    if as_json:
        _emit(json.dumps({"samples": [path_to_dict(p) for p in paths]}), args)
    else:
        _emit(paths_csv(paths, config.mesh), args)
    return 0


def _converge_config(args) -> ConvergeConfig:
    if args.preset and args.config:
        raise ConfigError("Give either a config file or --preset, not both")
    if args.preset:
        config = preset_config(args.preset, a=args.a, n_values=args.n_values, samples=args.samples,
                               replicates=args.replicates or 1)
    elif args.config:
        config = ConvergeConfig.load(args.config)
        if args.samples is not None:
            config.samples = args.samples
        if args.replicates is not None:
            config.replicates = args.replicates
        if args.n_values is not None:
            config.n_values = list(args.n_values)
        config.validate()
    else:
        raise ConfigError("converge needs a config file or --preset")
    return config


def cmd_converge(args, session: SessionConfig) -> int:
    config = _converge_config(args)
    seed = config.require_seed(_opt(args, "seed"))
    report = convergence_experiment(config, seed, session, checkpoint_path=args.checkpoint)
    _emit(report.to_json() if _opt(args, "format") == "json" else report.to_csv(), args)

    plot = args.plot
    out = _opt(args, "out")
    if not plot and out:
        plot = str(Path(out).with_suffix(".plot.csv"))
    if plot:
        Path(plot).write_text(report.plot_csv())
        logger.info("PLOT_DATA_WRITTEN: %s", plot)
    for name, entry in report.summary.items():
        logger.info("CONVERGENCE_SUMMARY: %s non_increasing=%s", name, entry["non_increasing"])
    return 0


def _counterexample_config(args) -> CounterexampleConfig:
    data = {}
    if args.config_file:
        data = CounterexampleConfig.load(args.config_file).to_dict()
    overrides = {"which": args.which, "n_max": args.n_max, "rate": args.rate,
                 "families": args.families, "variant": args.variant, "tol": _opt(args, "tol")}
    for name, value in overrides.items():
        if value is not None:
            data[name] = value
    if "which" not in data:
        raise ConfigError("counterexample needs a selector: 1, 2, lemma1 or lemma2")
    return CounterexampleConfig.from_dict(data)


def cmd_counterexample(args, session: SessionConfig) -> int:
    config = _counterexample_config(args)
    seed = config.require_seed(_opt(args, "seed")) if config.stochastic else None
    report = counterexample_report(config, seed, session)
    _emit(report.to_csv() if _opt(args, "format") == "csv" else report.to_json(), args)
    logger.info("COUNTEREXAMPLE_VERDICT: %s", report.verdict)
    return 0


COMMANDS = {
    "distance": cmd_distance,
    "compose": cmd_compose,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "counterexample": cmd_counterexample,
}


def _session(args) -> SessionConfig:
    session = SessionConfig.load(_opt(args, "session", ""))
    if _opt(args, "progress"):
        session.show_progress = True
    ledger = _opt(args, "ledger")
    if ledger:
        session.ledger_db_path = ledger
    return session


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    session = _session(args)
    run_id = str(uuid.uuid4())
    setup_logging(session, logging.DEBUG if _opt(args, "verbose") else logging.WARNING,
                  command=args.command, run_id=run_id)

    ledger = LedgerDB.safe_open(session.ledger_db_path)
    if ledger is not None:
        try:
            ledger.run_start(run_id, args.command, cpu_workers=session.cpu_workers)
        except Exception as e:
            logger.warning("LEDGER_WRITE_FAILED: %s", e)
            ledger = None

    status, code = "success", 0
    try:
        code = COMMANDS[args.command](args, session)
    except CadlagLineError as e:
        logger.error("%s: %s", type(e).__name__, e)
        sys.stderr.write(f"error: {e}\n")
        status, code = "failed", e.exit_code
    except Exception as e:
        logger.exception("UNEXPECTED_FAILURE: %s", e)
        sys.stderr.write(f"internal error: {e}\n")
        status, code = "failed", 4

    if ledger is not None:
        try:
            ledger.metric(run_id, args.command, "rss", HardwareProbe.get_process_rss_mb(), "mb")
            ledger.run_finish(run_id, status, notes=f"exit={code}")
        except Exception as e:
            logger.warning("LEDGER_WRITE_FAILED: %s", e)
    return code
