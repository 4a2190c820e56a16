"""Operator CLI: serve the service, replay scripted sessions, inspect
policies, export summaries, validate correspondence expressions.

Exit codes for ``gdm run``: 0 closed with everything resolved, 2 unresolved
proposals remain (or the script did not close the collaboration), 3 script
error, 4 engine error.
"""

from __future__ import annotations

import sys

import click

from . import notation
from .canonical import canon_dumps
from .config import load_config
from .errors import GdmError, ScriptError
from .eventlog import LogStore
from .lifecycle import Engine
from .session import EXIT_ENGINE_ERROR, EXIT_SCRIPT_ERROR, SessionScript, run_script
from .summary import build_summary, summary_csv, summary_markdown


@click.group()
def main():
    """Group decision-making engine."""


@main.command()
@click.argument("script_path", type=click.Path())
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="Append the session's command/event log to this file.")
@click.option("--json-out", type=click.Path(), default=None,
              help="Write the canonical summary JSON to this file.")
@click.option("--quiet", is_flag=True, default=False)
def run(script_path, log_path, json_out, quiet):
    """Execute a session script against an embedded engine."""
    try:
        script = SessionScript.load(script_path)
    except ScriptError as exc:
        click.echo(f"script error: {exc.detail}", err=True)
        sys.exit(EXIT_SCRIPT_ERROR)
    log = LogStore(log_path, fsync=False) if log_path else None
    try:
        result = run_script(script, log=log)
    except ScriptError as exc:
        click.echo(f"script error: {exc.detail}", err=True)
        sys.exit(EXIT_SCRIPT_ERROR)
    finally:
        if log is not None:
            log.close()
    if result.error:
        click.echo(f"engine error: {result.error}", err=True)
        sys.exit(EXIT_ENGINE_ERROR)
    if json_out:
        with open(json_out, "w", encoding="utf-8") as fh:
            fh.write(canon_dumps(result.summary))
    if not quiet:
        click.echo(summary_markdown(result.summary), nl=False)
        click.echo(f"state: {result.summary['state']}  round: {result.summary['round']}")
    sys.exit(result.exit_code)


@main.group()
def policies():
    """Inspect the decision-policy repository."""


@policies.command("list")
def policies_list():
    engine = Engine()
    for name in engine.policies.names():
        click.echo(name)


@policies.command("describe")
@click.argument("name")
def policies_describe(name):
    engine = Engine()
    try:
        descriptor = engine.policies.describe(name)
        policy = engine.policies.get(name)
    except GdmError as exc:
        click.echo(f"error: {exc.code}: {exc.detail}", err=True)
        sys.exit(EXIT_ENGINE_ERROR)
    click.echo(f"Name: {descriptor.name}")
    click.echo(f"Intent: {descriptor.intent}")
    click.echo("Applications:")
    for item in descriptor.applications:
        click.echo(f"  - {item}")
    click.echo(f"Solution: {descriptor.solution}")
    click.echo("Known uses:")
    for item in descriptor.known_uses:
        click.echo(f"  - {item}")
    click.echo(f"Related patterns: {', '.join(descriptor.related_patterns) or '-'}")
    co = policy.co_decision
    click.echo(f"Co-decision: {co.process_kind.value}, threshold {co.threshold.value}, "
               f"preference {co.preference_kind.value}")
    click.echo(f"Participation: {policy.participation.type.value}; "
               f"iteration: {policy.iteration_class.value}; maxRounds: {policy.max_rounds}")


@main.command()
@click.argument("collaboration_id")
@click.option("--log", "log_path", type=click.Path(exists=True), required=True,
              help="Event log to rebuild the collaboration from.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "md"]), default="md")
def summary(collaboration_id, log_path, fmt):
    """Print a closed (or in-flight) collaboration's evaluation summary."""
    log = LogStore(log_path, fsync=False)
    try:
        engine = Engine.from_log(log)
        collab = engine.get(collaboration_id)
    except GdmError as exc:
        click.echo(f"error: {exc.code}: {exc.detail}", err=True)
        sys.exit(EXIT_ENGINE_ERROR)
    finally:
        log.close()
    data = build_summary(collab)
    if fmt == "json":
        click.echo(canon_dumps(data))
    elif fmt == "csv":
        click.echo(summary_csv(data), nl=False)
    else:
        click.echo(summary_markdown(data), nl=False)


@main.command()
@click.argument("expression")
def parse(expression):
    """Validate a correspondence expression and print its canonical form."""
    try:
        correspondence = notation.parse(expression)
    except GdmError as exc:
        click.echo(f"error: {exc.code}: {exc.detail}", err=True)
        sys.exit(EXIT_SCRIPT_ERROR)
    click.echo(notation.render(correspondence))
    click.echo(canon_dumps(correspondence.to_json()))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML config file (defaults to $GDM_CONFIG).")
def serve(config_path):
    """Run the HTTP service."""
    from .service import serve as _serve

    _serve(load_config(config_path))


if __name__ == "__main__":
    main()
