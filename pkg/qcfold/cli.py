"""
Command line: build, audit and render scenarios.

Exit codes: 0 on success, 1 when an audit fails, 2 for a usage or scenario
error, 3 when the construction cannot be built.
"""

from qcfold import logging, orchestrator, scenario
from qcfold.blaschke import SelectionError
from qcfold.cache import ArtifactCache, dump_json, write_manifest
from qcfold.model_domain import TractParameterError
from qcfold.pipeline import Pipeline, build_pipeline, write_artifacts
from qcfold.render import RenderTarget, render as render_target
from qcfold.riemann_map import BuildError, InverseError
from qcfold.scenario import ConfigError, Scenario

from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
import json

from rich import box
from rich.console import Console
from rich.table import Table
import trio
import typer

from collections.abc import Iterator
from typing import Annotated, Any, Optional


logger = logging.getLogger(__name__)

EXIT_AUDIT_FAILED = 1
EXIT_USAGE = 2
EXIT_BUILD_FAILED = 3

app = typer.Typer(
    name="qcfold",
    help="Quasiconformal folding of Eremenko-Lyubich model functions.",
    add_completion=False,
    rich_markup_mode="rich",
)
console = Console()
errors = Console(stderr=True)


ConfigOption = Annotated[
    str,
    typer.Option("--config", "-c", help="Scenario file or bundled scenario name"),
]
OutOption = Annotated[
    Optional[Path],
    typer.Option("--out", "-o", help="Output directory, defaults to the scenario's"),
]
SeedOption = Annotated[
    Optional[int],
    typer.Option("--seed", help="Override the scenario seed"),
]
NoCacheOption = Annotated[
    bool,
    typer.Option("--no-cache", help="Rebuild the Riemann map even if it is cached"),
]
LogLevelOption = Annotated[
    str,
    typer.Option("--log-level", help="none, debug, info, notice, warning, error or critical"),
]


def _fail(code: int, message: str) -> typer.Exit:
    errors.print(f"[bold red]error:[/bold red] {message}")
    return typer.Exit(code)


@contextmanager
def _logging(level: str) -> Iterator[None]:
    try:
        loglevel = logging.LogLevel[level.upper()]

    except KeyError:
        raise _fail(EXIT_USAGE, f"unknown log level {level!r}") from None

    with logging.handler(loglevel).applicationbound():
        yield


def _load(config: str, seed: Optional[int], out: Optional[Path]) -> tuple[Scenario, Path]:
    try:
        loaded = scenario.load(config)

    except ConfigError as err:
        raise _fail(EXIT_USAGE, str(err)) from None

    if seed is not None:
        loaded = replace(loaded, seed=seed)

    return loaded, out if out is not None else Path(loaded.output)


def _build(config: Scenario, out: Path, no_cache: bool, strict: bool = False) -> Pipeline:
    cache = ArtifactCache(out / "cache", enabled=not no_cache)

    try:
        return build_pipeline(config, cache=cache, strict=strict)

    except (TractParameterError, SelectionError) as err:
        raise _fail(EXIT_USAGE, str(err)) from None

    except (BuildError, InverseError) as err:
        raise _fail(EXIT_BUILD_FAILED, str(err)) from None


@app.command()
def build(
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    no_cache: NoCacheOption = False,
    log_level: LogLevelOption = "notice",
) -> None:
    """
    Build every stage of a scenario and write the artefacts with their manifest.
    """

    with _logging(log_level):
        loaded, directory = _load(config, seed, out)
        pipeline = _build(loaded, directory, no_cache, strict=True)
        files = write_artifacts(pipeline, directory)
        manifest = write_manifest(directory, files, loaded.config_hash)

    source = "cached" if pipeline.cached else "built"
    console.print(f"[green]built[/green] {loaded.name}: Riemann map {source}, {pipeline.blaschke.zeros.size} zeros")
    console.print(f"manifest: {manifest}")


@app.command()
def verify(
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    no_cache: NoCacheOption = False,
    jobs: Annotated[int, typer.Option("--jobs", "-j", min=1, help="Audits run at once")] = 1,
    log_level: LogLevelOption = "notice",
) -> None:
    """
    Run every audit and write `report.json`; exit 1 if any audit fails.
    """

    with _logging(log_level):
        loaded, directory = _load(config, seed, out)
        pipeline = _build(loaded, directory, no_cache)
        results = trio.run(orchestrator.run_audits, orchestrator.audit_specs(pipeline), jobs)
        payload = orchestrator.report(loaded, results)
        path = dump_json(directory / "report.json", payload)

    _print_report(payload)
    console.print(f"report: {path}")

    if not payload["passed"]:
        failing = [audit["id"] for audit in payload["audits"] if not audit["passed"]]
        raise _fail(EXIT_AUDIT_FAILED, f"failing audits: {', '.join(failing)}")


@app.command()
def render(
    target: Annotated[RenderTarget, typer.Argument(help="What to draw")],
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    no_cache: NoCacheOption = False,
    log_level: LogLevelOption = "notice",
) -> None:
    """
    Draw tracts, partitions, zeros, the dilatation heatmap or the Julia raster.
    """

    with _logging(log_level):
        loaded, directory = _load(config, seed, out)
        pipeline = _build(loaded, directory, no_cache)

        try:
            written = render_target(pipeline, target, directory / "figures")

        except BuildError as err:
            raise _fail(EXIT_BUILD_FAILED, str(err)) from None

    for path in written:
        console.print(f"wrote {path}")


@app.command()
def report(
    config: ConfigOption,
    out: OutOption = None,
    log_level: LogLevelOption = "notice",
) -> None:
    """
    Show the last audit report and write a compact `summary.json`.
    """

    with _logging(log_level):
        loaded, directory = _load(config, None, out)
        path = directory / "report.json"

        if not path.is_file():
            raise _fail(EXIT_USAGE, f"no report at {path}, run verify first")

        payload = json.loads(path.read_text(encoding="utf-8"))

        if payload.get("config_hash") != loaded.config_hash:
            logger.warning(f"{path} was produced by another configuration")

        summary = {
            "scenario": payload["scenario"],
            "config_hash": payload["config_hash"],
            "passed": payload["passed"],
            "failing": [audit["id"] for audit in payload["audits"] if not audit["passed"]],
            "audits": len(payload["audits"]),
        }
        dump_json(directory / "summary.json", summary)

    _print_report(payload)


def _print_report(payload: dict[str, Any]) -> None:
    table = Table(
        title=f"{payload['scenario']} ({payload['config_hash'][:12]})",
        box=box.ROUNDED,
        show_header=True,
        header_style="bold magenta",
    )
    table.add_column("audit")
    table.add_column("status")
    table.add_column("measured", overflow="fold")

    for audit in payload["audits"]:
        status = "[green]pass[/green]" if audit["passed"] else "[red]FAIL[/red]"
        measured = ", ".join(f"{key}={value}" for key, value in sorted(audit["measured"].items()))
        table.add_row(audit["id"], status, measured)

    console.print(table)


if __name__ == "__main__":
    app()
