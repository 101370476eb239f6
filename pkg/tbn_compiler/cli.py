"""Command-line interface for the TBN compiler."""

import functools
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
from rich import box
from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from .config import Config, configure_logging
from .core.evidence import Advance, Observe, Query, evidence_by_slice, load_stream
from .core.model import classify, metrics, validate as validate_model
from .core.oracle import query_brute
from .core.parser import load_model
from .errors import ConfigError, EvidenceError, TbnError, UnknownNameError
from .runtime.compiler import compile_model
from .runtime.instance import new_instance
from .runtime.plan import EvaluationPlan, PlanStats, load_plan, save_plan

console = Console()
error_console = Console(stderr=True)

IO_ERROR_EXIT = 3


def handle_errors(func):
    """Map package errors to their exit codes and I/O errors to 3."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except TbnError as e:
            error_console.print(f"[red]Error: {escape(str(e))}[/red]")
            sys.exit(e.exit_code)
        except OSError as e:
            error_console.print(f"[red]Error: {escape(str(e))}[/red]")
            sys.exit(IO_ERROR_EXIT)

    return wrapper


def format_distribution(
    step: int, target: str, values: Sequence[float], digits: int, fmt: str
) -> str:
    numbers = [f"{float(v):.{digits}g}" for v in values]
    if fmt == "tsv":
        return "\t".join([str(step), target] + numbers)
    return f"t={step} {target} " + " ".join(numbers)


def metrics_table(values: Dict[str, int], title: str = "Model Metrics") -> Table:
    table = Table(title=title, box=box.ROUNDED, show_header=True, header_style="bold magenta")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right", style="white")
    for key, value in values.items():
        table.add_row(key.replace("_", " ").capitalize(), str(value))
    return table


def stats_table(stats: PlanStats) -> Table:
    table = Table(title="Plan Statistics", box=box.ROUNDED, show_header=True, header_style="bold magenta")
    table.add_column("Routine", style="cyan")
    table.add_column("Instructions", justify="right", style="white")
    table.add_column("Multiplications", justify="right", style="white")
    table.add_column("Largest table", justify="right", style="white")
    for name, routine in stats.routines.items():
        table.add_row(
            name,
            str(routine.instructions),
            str(routine.multiplications),
            str(routine.largest_table),
        )
    return table


def totals_table(stats: PlanStats) -> Table:
    return metrics_table(
        {
            "past_factor_count": stats.past_factor_count,
            "past_entries": stats.past_entries,
            "largest_intermediate_table": stats.largest_intermediate_table,
            "constant_table_entries": stats.constant_table_entries,
            "precomputed_entries": stats.precomputed_entries,
            "total_buffer_entries": stats.total_buffer_entries,
        },
        title="Plan Totals",
    )


def render_factorization(factors: List[List[str]]) -> str:
    return "{" + ",".join("(" + ",".join(f) + ")" for f in factors) + "}"


@click.group()
@click.option("--log-level", default=None, help="Logging level (overrides TBN_LOG_LEVEL)")
@click.pass_context
def cli(ctx, log_level: Optional[str]):
    """TBN compiler - exact fixed-resource filtering for temporal Bayes nets."""
    try:
        config = Config.from_env()
        if log_level:
            config.log_level = log_level
        config.validate()
    except ConfigError as e:
        error_console.print(f"[red]Error: {escape(str(e))}[/red]")
        sys.exit(e.exit_code)
    configure_logging(config)
    ctx.obj = config


@cli.command()
@click.argument("model_path", type=click.Path(dir_okay=False))
@handle_errors
def validate(model_path: str):
    """Check a model file and show its node classification.

    Exits 1 if any invariant is violated.
    """
    model = load_model(model_path)
    report = validate_model(model)
    if not report.ok:
        table = Table(
            title="Validation Report", box=box.ROUNDED, show_header=True, header_style="bold magenta"
        )
        table.add_column("Code", style="cyan")
        table.add_column("Node", style="yellow")
        table.add_column("Message", style="white")
        for v in report:
            table.add_row(v.code, v.node or "-", v.message)
        console.print(table)
        console.print(f"[red]{len(report)} violation(s)[/red]")
        sys.exit(1)

    cls = classify(model)
    console.print(metrics_table(metrics(model, cls)))
    console.print(f"Static parents R: {', '.join(sorted(cls.static_parents)) or '(none)'}")
    console.print(f"Transitional T: {', '.join(sorted(cls.transitional)) or '(none)'}")
    console.print(f"Interface I: {', '.join(sorted(cls.interface)) or '(none)'}")
    console.print("[green]Model is valid[/green]")


@cli.command("compile")
@click.argument("model_path", type=click.Path(dir_okay=False))
@click.option("-o", "--output", "output", type=click.Path(dir_okay=False), help="Plan file to write")
@click.option("--cap", type=click.IntRange(min=1), help="Largest buffer in entries")
@click.pass_obj
@handle_errors
def compile_cmd(config: Config, model_path: str, output: Optional[str], cap: Optional[int]):
    """Compile a model into an evaluation plan file."""
    model = load_model(model_path)
    plan = compile_model(model, buffer_cap=cap or config.buffer_cap)
    out = Path(output) if output else Path(model_path).with_suffix(".plan.json")
    save_plan(plan, out)
    console.print(metrics_table(plan.metrics))
    console.print(
        f"Past expression: {len(plan.factorization)} factor(s) "
        f"{escape(render_factorization(plan.factorization))}, "
        f"stable after {plan.iterations} iteration(s)"
    )
    console.print(stats_table(plan.stats))
    console.print(totals_table(plan.stats))
    console.print(f"[bold blue]Plan written to:[/bold blue] {out}")


def _emit(config: Config, fmt: str, step: int, target: str, values) -> None:
    click.echo(format_distribution(step, target, values, config.significant_digits, fmt))


@cli.command()
@click.argument("plan_path", type=click.Path(dir_okay=False))
@click.argument("stream_path", type=click.Path(dir_okay=False))
@click.option("-t", "--target", "targets", multiple=True, help="Emit this target at every advance")
@click.option("--format", "fmt", type=click.Choice(["records", "tsv"]), default=None)
@click.pass_obj
@handle_errors
def run(config: Config, plan_path: str, stream_path: str, targets: Tuple[str, ...], fmt: Optional[str]):
    """Run an evidence stream through a compiled plan."""
    fmt = fmt or config.output_format
    plan = load_plan(plan_path)
    records = load_stream(stream_path)
    instance = new_instance(plan)
    for record in records:
        try:
            if isinstance(record, Observe):
                instance.post_observation(record.observable, record.likelihood)
            elif isinstance(record, Query):
                _emit(config, fmt, instance.step, record.target, instance.query(record.target))
            else:
                for target in targets:
                    _emit(config, fmt, instance.step, target, instance.query(target))
                instance.advance()
        except (UnknownNameError, EvidenceError) as e:
            raise type(e)(f"line {record.line}: {e}") from None


@cli.command()
@click.argument("model_path", type=click.Path(dir_okay=False))
@click.argument("stream_path", type=click.Path(dir_okay=False))
@click.option("-t", "--target", "targets", multiple=True, help="Target node (default: declared queries)")
@click.option("--step", type=click.IntRange(min=0), help="Time step (default: last slice of the stream)")
@click.option("--cap", type=click.IntRange(min=1), help="Largest joint table in entries")
@click.option("--format", "fmt", type=click.Choice(["records", "tsv"]), default=None)
@click.pass_obj
@handle_errors
def oracle(
    config: Config,
    model_path: str,
    stream_path: str,
    targets: Tuple[str, ...],
    step: Optional[int],
    cap: Optional[int],
    fmt: Optional[str],
):
    """Brute-force posterior over the fully unrolled net."""
    fmt = fmt or config.output_format
    model = load_model(model_path)
    slices = evidence_by_slice(load_stream(stream_path))
    t = len(slices) - 1 if step is None else step
    for target in targets or model.query_targets:
        values = query_brute(model, target, slices, t, cap=cap or config.oracle_cap)
        _emit(config, fmt, t, target, values)


def _checkpoints(plan: EvaluationPlan, records) -> List[Tuple[int, str, Tuple[float, ...]]]:
    """Plan posteriors for every declared target before each advance and at the end."""
    instance = new_instance(plan)
    results = []

    def snapshot():
        for target in plan.targets:
            results.append((instance.step, target, tuple(instance.query(target))))

    for record in records:
        if isinstance(record, Observe):
            instance.post_observation(record.observable, record.likelihood)
        elif isinstance(record, Advance):
            snapshot()
            instance.advance()
    snapshot()
    return results


@cli.command()
@click.argument("model_path", type=click.Path(dir_okay=False))
@click.argument("stream_path", type=click.Path(dir_okay=False))
@click.option("--plan", "plan_path", type=click.Path(dir_okay=False), help="Check this plan file instead of compiling")
@click.option("--tolerance", type=float, default=None, help="Largest accepted absolute difference")
@click.option("--cap", type=click.IntRange(min=1), help="Oracle and buffer cap in entries")
@click.pass_obj
@handle_errors
def diff(
    config: Config,
    model_path: str,
    stream_path: str,
    plan_path: Optional[str],
    tolerance: Optional[float],
    cap: Optional[int],
):
    """Compare plan posteriors with the brute-force oracle at every step.

    Exits 0 iff every difference is within the tolerance.
    """
    tolerance = config.tolerance if tolerance is None else tolerance
    if not tolerance > 0:
        raise ConfigError("Tolerance must be positive")
    model = load_model(model_path)
    records = load_stream(stream_path)
    if plan_path:
        plan = load_plan(plan_path)
    else:
        plan = compile_model(model, buffer_cap=cap or config.buffer_cap)
    slices = evidence_by_slice(records)

    table = Table(title="Plan vs Oracle", box=box.ROUNDED, show_header=True, header_style="bold magenta")
    table.add_column("Step", justify="right", style="cyan")
    table.add_column("Target", style="cyan")
    table.add_column("Max abs difference", justify="right", style="white")
    worst = 0.0
    for step, target, values in _checkpoints(plan, records):
        expected = query_brute(model, target, slices[: step + 1], step, cap=cap or config.oracle_cap)
        if len(expected) != len(values):
            raise TbnError(f"Plan and model disagree on the states of {target!r}")
        delta = max(abs(float(a) - float(b)) for a, b in zip(values, expected))
        worst = max(worst, delta)
        style = "green" if delta <= tolerance else "red"
        table.add_row(str(step), target, f"[{style}]{delta:.3e}[/{style}]")
    console.print(table)
    if worst > tolerance:
        console.print(f"[red]Max difference {worst:.3e} exceeds tolerance {tolerance:g}[/red]")
        sys.exit(1)
    console.print(f"[green]Max difference {worst:.3e} within tolerance {tolerance:g}[/green]")


@cli.command()
@click.argument("plan_path", type=click.Path(dir_okay=False))
@handle_errors
def inspect(plan_path: str):
    """Show a plan's factorization, trees, routines and statistics."""
    plan = load_plan(plan_path)
    console.print(metrics_table(plan.metrics))

    history = "\n".join(
        f"{i}: {escape(render_factorization(f))}" for i, f in enumerate(plan.stabilization)
    )
    console.print(
        Panel(
            f"Stable factorization: {escape(render_factorization(plan.factorization))}\n"
            f"Iterations: {plan.iterations}\n{history}",
            title="Past Expression",
            border_style="blue",
        )
    )
    for name, lines in plan.trees.items():
        console.print(Panel(escape("\n".join(lines)), title=f"Factoring tree {name}", border_style="cyan"))

    for name, routine in plan.routines():
        body = "\n".join(escape(ins.render()) for ins in routine) or "(none)"
        console.print(Panel(body, title=f"Routine {name}", border_style="green"))

    console.print(stats_table(plan.stats))
    console.print(totals_table(plan.stats))


if __name__ == "__main__":
    cli()
