import argparse
import logging
import sys
from pathlib import Path

import yaml


class CLIException(Exception):
    pass


def reasoner_arguments(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    """Enriches a command's subparser with the reasoner and budget options shared by run and suite.

    Args:
        parser (argparse.ArgumentParser): Subparser to enrich.

    Returns:
        argparse.ArgumentParser: Enriched subparser.
    """
    parser.add_argument("--reasoner", choices=("oracle", "vlm"), default="oracle", help="who answers the checks")
    parser.add_argument("--endpoint-config", type=Path, help="endpoint config file (vlm reasoner)")
    parser.add_argument("--max-ticks", type=int, default=100, help="tick budget per run")
    parser.add_argument("--history-window", type=int, help="history entries shown to the reasoner")
    parser.add_argument("--max-queries", type=int, help="reasoner query budget per run")
    parser.add_argument("-o", "--report-out", type=Path, help="write the report here instead of stdout")
    return parser


def setup_logging(verbosity: int):
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def build_factory(arguments: argparse.Namespace):
    from recoverbt.config import ConfigException, load_endpoint_config
    from recoverbt.reasoners import make_reasoner_factory

    endpoint = None
    if arguments.reasoner == "vlm":
        if arguments.endpoint_config is None:
            raise CLIException("--endpoint-config is required with --reasoner vlm")
        try:
            endpoint = load_endpoint_config(arguments.endpoint_config)
        except ConfigException as e:
            raise CLIException(str(e))
        endpoint = endpoint.override(history_window=arguments.history_window)
    return make_reasoner_factory(arguments.reasoner, endpoint)


def build_run_config(arguments: argparse.Namespace):
    from recoverbt.pipeline import PipelineException, RunConfig

    values = {"max_ticks": arguments.max_ticks, "max_queries": arguments.max_queries}
    if arguments.history_window is not None:
        values["history_window"] = arguments.history_window
    try:
        return RunConfig(**values)
    except PipelineException as e:
        raise CLIException(str(e))


def emit(text: str, out: Path | None):
    if out is None:
        print(text)
    else:
        out.write_text(text)


def cmd_run(arguments: argparse.Namespace) -> int:
    from recoverbt.pipeline import run_task
    from recoverbt.scenario import load_scenario

    scenario = load_scenario(arguments.scenario)
    report = run_task(scenario, arguments.mode, build_factory(arguments), build_run_config(arguments))
    emit(report.yaml(), arguments.report_out)
    return 0 if report.success else 1


def cmd_suite(arguments: argparse.Namespace) -> int:
    from recoverbt.report import run_suite

    modes = [m.strip() for m in arguments.modes.split(",") if m.strip()]
    suite = run_suite(
        arguments.directory,
        modes,
        build_factory(arguments),
        reasoner=arguments.reasoner,
        config=build_run_config(arguments),
        repetitions=arguments.repetitions,
        workers=arguments.workers,
    )
    if arguments.report_out is not None:
        arguments.report_out.write_text(suite.yaml())
    print(suite.table())
    for errored in suite.errored:
        print("errored: %s" % yaml.safe_dump(errored, default_flow_style=True).strip(), file=sys.stderr)
    return 0 if suite.ok else 1


def cmd_replay(arguments: argparse.Namespace) -> int:
    from recoverbt.report import narrate

    if not arguments.report.exists():
        raise CLIException("Could not find report file: %s" % arguments.report)
    try:
        d = yaml.safe_load(arguments.report.read_text())
    except yaml.YAMLError as e:
        raise CLIException("%s: invalid YAML: %s" % (arguments.report, e))
    print(narrate(d))
    return 0


def main(argv: list[str] | None = None) -> int:
    """Main entrypoint for the rbt CLI.

    Returns:
        int: 0 on success; 1 when a run or suite failed; 2 on usage, load or parse errors.
    """
    from recoverbt.config import ConfigException
    from recoverbt.pipeline import MODES, PipelineException
    from recoverbt.reasoners import ReasonerException
    from recoverbt.report import ReportException
    from recoverbt.scenario import ScenarioException

    argparser = argparse.ArgumentParser(prog="rbt", description="behavior-tree failure recovery runtime")
    argparser.add_argument("-v", "--verbose", action="count", default=0, help="log INFO (-v) or DEBUG (-vv)")
    cmd_subparser = argparser.add_subparsers(title="cmd", dest="cmd")

    # cmd subparser for running one scenario
    run_subparser = cmd_subparser.add_parser("run", help="run one scenario and print its report")
    run_subparser.add_argument("scenario", type=Path, help="scenario file")
    run_subparser.add_argument("--mode", choices=MODES, default="combined")
    reasoner_arguments(run_subparser)

    # cmd subparser for suites
    suite_subparser = cmd_subparser.add_parser("suite", help="run a scenario directory under several modes")
    suite_subparser.add_argument("directory", type=Path, help="scenario directory")
    suite_subparser.add_argument("--modes", default=",".join(MODES), help="comma-separated modes")
    suite_subparser.add_argument("--repetitions", type=int, default=10)
    suite_subparser.add_argument("--workers", type=int, default=1)
    reasoner_arguments(suite_subparser)

    # cmd subparser for replaying a report
    replay_subparser = cmd_subparser.add_parser("replay", help="narrate a run report")
    replay_subparser.add_argument("report", type=Path, help="run report file")

    arguments = argparser.parse_args(argv)
    setup_logging(arguments.verbose)

    commands = {"run": cmd_run, "suite": cmd_suite, "replay": cmd_replay}
    try:
        if not arguments.cmd:
            raise CLIException("cmd required")
        if arguments.cmd not in commands:
            raise CLIException("unexpected cmd: %r" % arguments.cmd)
        return commands[arguments.cmd](arguments)
    except (
        CLIException,
        ConfigException,
        PipelineException,
        ReasonerException,
        ReportException,
        ScenarioException,
    ) as e:
        print("rbt: error: %s" % e, file=sys.stderr)
        return 2
