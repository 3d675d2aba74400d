#!/bin/python3
import logging
import os
import sys
from importlib.util import find_spec
from pathlib import Path

import typer

# this will make abcdkit find its modules if you call it directly (i.e. no symlinks)
sys.path.append(str(Path(os.path.realpath(__file__)).parent.parent))

try:
    find_spec("abcdkit")
except ModuleNotFoundError:
    raise RuntimeError(f"cannot find abcdkit modules; check your PATH={sys.path}.")


def main():
    from abcdkit.conf.conf import print_current_config, print_defaults
    from abcdkit.logger import LOG_FORMAT, LOGLEVEL, logger
    from abcdkit.report.commands import (
        decay,
        describe,
        design_anchors,
        first_stage,
        ingest,
        iv,
        placebo,
        plot,
        simulate,
    )
    from abcdkit.version import print_abcd_version

    app = typer.Typer(
        name="abcd",
        help="""
        Randomized anchors as instruments for the causal effect of beliefs.

        Every command writes report.json and tables.txt into its --out directory.""",
        no_args_is_help=True,
        rich_markup_mode="markdown",
    )
    app.command(name="version")(print_abcd_version)
    app.command(name="ingest", no_args_is_help=True)(ingest)
    app.command(name="describe", no_args_is_help=True)(describe)
    app.command(name="first-stage", no_args_is_help=True)(first_stage)
    app.command(name="iv", no_args_is_help=True)(iv)
    app.command(name="placebo", no_args_is_help=True)(placebo)
    app.command(name="decay", no_args_is_help=True)(decay)
    app.command(name="design-anchors", no_args_is_help=True)(design_anchors)
    app.command(name="simulate")(simulate)
    app.command(name="plot", no_args_is_help=True)(plot)

    conf = typer.Typer(
        name="conf",
        help="""abcdkit configuration.\n\n
        The default profile is copied into your ``~/.config/abcdkit/config.toml``
        on first use (``$ABCD_DATA/config.toml`` if set).\n\n
        Reset to factory settings:\n
         - `abcd conf default > ~/.config/abcdkit/config.toml`\n\n
        Command-line flags always take precedence over the config file.
        """,
        no_args_is_help=True,
    )
    conf.command(name="default")(print_defaults)
    conf.command(name="current")(print_current_config)

    app.add_typer(conf, no_args_is_help=True)

    @app.callback()
    def logging_config(
        loglevel: str = typer.Option(None, help="DEBUG, INFO, WARNING, ERROR or CRITICAL."),
        log_to_file: Path = typer.Option(None, help="Also write the log to this file."),
    ):
        if loglevel:
            loglevel = loglevel.upper()
            if loglevel not in {"CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"}:
                exit(f"invalid loglevel {loglevel!r}")

            typer.echo(f"::= Verbose mode ({loglevel}). =::")
            logger.setLevel(loglevel)
            logging.basicConfig(stream=sys.stderr)

        if log_to_file:
            handler = logging.FileHandler(log_to_file, encoding="utf-8")
            handler.setFormatter(logging.Formatter(LOG_FORMAT))
            logger.addHandler(handler)

    if LOGLEVEL != "WARNING":
        typer.echo(f"::= Verbose mode ({LOGLEVEL}). =::")

    app()


if __name__ == "__main__":
    main()
