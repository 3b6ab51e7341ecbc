"""Command-line entry points: run a pentest, ingest RAG documents, drive a
scored benchmark session, or serve the control API."""

from __future__ import annotations

import logging
import sys
import threading
import time
from datetime import datetime

import click

from . import runtime
from .approval import ApprovalQueue, policy_for
from .bench import BenchSession, load_checklist
from .control import RunManager, create_app
from .domain import InvalidTarget, RunConfig, format_usd, validate_target
from .events import EventKind, EventLog
from .graph import RunAborted
from .rag.corpus import fetch_snapshots, ingest_snapshots, load_manifest
from .rag.store import VectorStore
from .gateway import LlmGateway

logger = logging.getLogger(__name__)

_EVENT_COLORS = {
    EventKind.PLAN_CREATED: "cyan",
    EventKind.STEP_ROUTED: "cyan",
    EventKind.WORKER_ACTION: "white",
    EventKind.TOOL_OUTPUT: "bright_black",
    EventKind.APPROVAL_REQUESTED: "yellow",
    EventKind.APPROVAL_RESOLVED: "yellow",
    EventKind.OBSERVATION_RECORDED: "green",
    EventKind.REPLANNED: "cyan",
    EventKind.FINISHED: "green",
    EventKind.WARNING: "red",
}


def _print_event(event) -> None:
    color = _EVENT_COLORS.get(event.kind)
    if event.kind is EventKind.COST_UPDATED:
        return
    summary = {
        EventKind.PLAN_CREATED: lambda p: "plan:\n  " + "\n  ".join(p["steps"]),
        EventKind.STEP_ROUTED: lambda p: f"step -> {p['worker']}: {p['step']}",
        EventKind.WORKER_ACTION: lambda p: (
            f"[{p['worker']}] {p.get('tool', 'final')}"
            + (f" {p.get('arguments')}" if p.get("arguments") else "")
            if p["action"] == "tool_call"
            else f"[{p['worker']}] reports back"
        ),
        EventKind.TOOL_OUTPUT: lambda p: p["output"],
        EventKind.APPROVAL_REQUESTED: lambda p: f"approval needed for {p['tool']}: {p['command']}",
        EventKind.APPROVAL_RESOLVED: lambda p: f"approval {p['id']}: {p['decision']}",
        EventKind.OBSERVATION_RECORDED: lambda p: f"observation [{p['worker']}]: {p['summary']}",
        EventKind.REPLANNED: lambda p: (
            "replanned:\n  " + "\n  ".join(p["steps"]) if p["action"] == "plan" else "replanned: responding"
        ),
        EventKind.FINISHED: lambda p: f"finished: {p['final_response']}",
        EventKind.SUBTASK_MARKED: lambda p: f"subtask marked: {p}",
        EventKind.WARNING: lambda p: f"warning: {p.get('message', p)}",
    }.get(event.kind, lambda p: str(p))(event.payload)
    click.secho(f"[{event.kind.value}] {summary}", fg=color)


@click.group()
def main() -> None:
    """Autonomous black-box penetration testing against a single target host."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("target")
@click.option("--no-review", is_flag=True, help="Execute commands without human approval.")
@click.option("--budget-min", type=float, default=None, help="Session budget in minutes.")
@click.option("--serve", is_flag=True, help="Expose the control API and take approvals there.")
@click.option("--port", type=int, default=8000, show_default=True, help="Control API port.")
@click.option("--own-ip", default=None, help="Attacker-side IP placed in the objective prompt.")
@click.option("--username", default=None, help="Attacker-side user placed in the objective prompt.")
def run(target, no_review, budget_min, serve, port, own_ip, username) -> None:
    """Run a penetration test against TARGET (IP address or hostname)."""
    review = runtime.review_enabled_from_env() and not no_review
    try:
        parsed = validate_target(
            target,
            own_ip=own_ip or runtime.detect_own_ip(),
            username=username or runtime.detect_username(),
        )
    except InvalidTarget as exc:
        raise click.UsageError(str(exc))
    kwargs = {"target": parsed, "review_enabled": review}
    if budget_min is not None:
        kwargs["session_budget"] = budget_min * 60.0
    config = RunConfig(**kwargs)

    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    log_path = runtime.runs_dir() / f"{stamp}-{parsed.host}" / "events.jsonl"
    event_log = EventLog(path=log_path)
    queue = ApprovalQueue()
    cancel = threading.Event()

    printer = threading.Thread(
        target=lambda: [_print_event(e) for e in event_log.stream()], daemon=True
    )
    printer.start()

    server_thread = None
    if serve:
        manager = _single_run_manager(config, event_log, queue, cancel)
        server_thread = _start_server(manager, port)
        policy = policy_for(review, serve=True)
        graph = runtime.build_graph(config, event_log, queue, cancel, policy=policy)
    else:
        policy = policy_for(review, serve=False)
        graph = runtime.build_graph(
            config, event_log, queue, cancel, policy=policy, approval_reader=None
        )
    try:
        report = graph.run()
    except RunAborted:
        click.secho("run cancelled", fg="red")
        sys.exit(1)
    except Exception as exc:
        click.secho(f"run failed: {exc}", fg="red", err=True)
        sys.exit(1)
    finally:
        printer.join(timeout=5)
    click.echo()
    click.secho(report.final_response, fg="green", bold=True)
    click.echo(
        f"tokens: {report.usage.input_tokens} in / {report.usage.output_tokens} out, "
        f"cost {format_usd(report.cost_micro)}"
    )
    click.echo(f"event log: {report.event_log_path}")


def _single_run_manager(config, event_log, queue, cancel) -> RunManager:
    from .control import ManagedRun

    manager = RunManager(launcher=runtime.default_launcher, max_concurrent=1)
    manager.approvals = queue
    manager.adopt(ManagedRun(id="local", config=config, event_log=event_log, cancel=cancel))
    return manager


def _start_server(manager: RunManager, port: int) -> threading.Thread:
    import uvicorn

    app = create_app(manager)
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started and thread.is_alive():
        time.sleep(0.05)
    click.echo(f"control API on http://127.0.0.1:{port}{'' if True else ''}")
    return thread


@main.command("ingest-docs")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Per-worker document manifest (defaults to the shipped one).")
@click.option("--snapshots", type=click.Path(file_okay=False), default="rag-snapshots",
              show_default=True, help="Directory of fetched document snapshots.")
@click.option("--index", "index_dir", type=click.Path(file_okay=False), default="rag-index",
              show_default=True, help="Vector index output directory.")
@click.option("--fetch/--no-fetch", default=True, show_default=True,
              help="Download missing snapshots before ingesting.")
def ingest_docs(manifest, snapshots, index_dir, fetch) -> None:
    """Fetch the per-worker document corpus and build the vector index."""
    docs = load_manifest(manifest)
    if fetch:
        fetched = fetch_snapshots(docs, snapshots)
        click.echo(f"fetched {fetched} new snapshot(s) into {snapshots}")
    store = VectorStore()
    gateway = LlmGateway(
        chat=None, embeddings=runtime.build_embedding_provider()  # chat unused for ingestion
    )
    counts = ingest_snapshots(docs, snapshots, store, gateway)
    store.save(index_dir)
    for worker, count in sorted(counts.items()):
        click.echo(f"{worker}: {count} chunks")
    click.echo(f"index written to {index_dir}")


@main.command()
@click.argument("machine")
@click.option("--approach", default="autopentest", show_default=True, help="Label for the score row.")
@click.option("--target", "target_arg", default=None, help="Target host for the underlying runs.")
@click.option("--budget-min", type=float, default=120.0, show_default=True)
@click.option("--restart-gap-min", type=float, default=20.0, show_default=True)
@click.option("--port", type=int, default=8000, show_default=True,
              help="Control API port for marking subtasks.")
@click.option("--checklist", "checklist_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Custom checklist JSON instead of a shipped machine.")
def bench(machine, approach, target_arg, budget_min, restart_gap_min, port, checklist_path) -> None:
    """Run a scored two-hour benchmark session against MACHINE."""
    try:
        checklist = load_checklist(machine, path=checklist_path)
    except KeyError:
        raise click.UsageError(
            f"unknown machine {machine!r}; shipped checklists: Devvortex, Broker, Codify"
        )
    if target_arg is None:
        raise click.UsageError("--target is required to run the approach")
    try:
        parsed = validate_target(
            target_arg, own_ip=runtime.detect_own_ip(), username=runtime.detect_username()
        )
    except InvalidTarget as exc:
        raise click.UsageError(str(exc))

    queue = ApprovalQueue()
    manager = RunManager(launcher=runtime.default_launcher)
    manager.approvals = queue

    def run_factory():
        cancel = threading.Event()
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        log_path = runtime.runs_dir() / f"bench-{stamp}-{parsed.host}" / "events.jsonl"
        event_log = EventLog(path=log_path)
        config = RunConfig(
            target=parsed,
            review_enabled=runtime.review_enabled_from_env(),
            session_budget=budget_min * 60.0,
            restart_gap=restart_gap_min * 60.0,
        )
        graph = runtime.build_graph(
            config, event_log, queue, cancel, policy=policy_for(config.review_enabled, serve=True)
        )

        def start() -> None:
            try:
                graph.run()
            except RunAborted:
                pass
            except Exception as exc:
                logger.error("bench run failed: %s", exc)

        return start, cancel.set

    session = BenchSession(
        checklist,
        approach,
        run_factory,
        clock=time.time,
        sleeper=time.sleep,
        session_budget=budget_min * 60.0,
        restart_gap=restart_gap_min * 60.0,
    )
    manager.register_bench(session)
    _start_server(manager, port)
    click.echo(
        f"bench session for {checklist.machine} started; mark subtasks with\n"
        f"  curl -X POST http://127.0.0.1:{port}/v1/bench/{checklist.machine}/subtasks/<index>"
    )
    result = session.run()
    click.echo(
        f"{result.machine}: {result.completed}/{result.total} subtasks ({result.percentage:.2f} %), "
        f"{session.restart_count} restart(s)"
    )


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(port, host) -> None:
    """Serve the control API for the web console."""
    import uvicorn

    manager = RunManager(launcher=runtime.default_launcher)
    uvicorn.run(create_app(manager), host=host, port=port)


if __name__ == "__main__":
    main()
