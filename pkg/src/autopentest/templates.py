"""Prompt template assets and their rendering.

Templates are text files with brace placeholders; the baseline_* pair is the
alternate template set for manual baseline replication.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .domain import Observation, Plan, WorkerName


class MissingPlaceholder(ValueError):
    """A template substitution was empty where content is required."""


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    text = resources.files("autopentest").joinpath(f"prompts/{name}.txt").read_text("utf-8")
    return text[:-1] if text.endswith("\n") else text


@lru_cache(maxsize=None)
def load_specialization(worker: WorkerName) -> str:
    text = (
        resources.files("autopentest")
        .joinpath(f"prompts/specializations/{worker.value}.txt")
        .read_text("utf-8")
    )
    return text[:-1] if text.endswith("\n") else text


def build_initial_user_prompt(
    target_host: str, own_ip: str, username: str, services_context: str
) -> str:
    """Render the run's objective prompt; every placeholder must be non-empty."""
    fields = {
        "target_host": target_host,
        "own_ip": own_ip,
        "username": username,
        "services": services_context,
    }
    for key, value in fields.items():
        if not str(value).strip():
            raise MissingPlaceholder(f"placeholder {{{key}}} is empty")
    return load_template("initial_objective").format(**fields)


def planner_system_prompt() -> str:
    return load_template("planner_system")


def render_plan(plan: Plan) -> str:
    return "\n".join(plan.steps)


def render_past_steps(observations: tuple[Observation, ...] | list[Observation]) -> str:
    blocks = []
    for o in observations:
        marker = " (synthesized)" if o.synthesized else ""
        blocks.append(f"Step: {o.step}\nWorker: {o.worker.value}{marker}\nObservation: {o.summary}")
    return "\n\n".join(blocks)


def replanner_system_prompt(
    initial_input: str, plan: Plan, observations: tuple[Observation, ...]
) -> str:
    """Planner system message during re-planning: the plan-creation preamble
    extended with objective, current plan, and worker observations."""
    extension = load_template("replanner_extension").format(
        input=initial_input,
        plan=render_plan(plan),
        past_steps=render_past_steps(observations),
    )
    return f"{planner_system_prompt()}\n\n{extension}"


def supervisor_intro_prompt(members: tuple[str, ...]) -> str:
    return load_template("supervisor_intro").format(members=", ".join(members))


def supervisor_select_prompt(options: tuple[str, ...]) -> str:
    return load_template("supervisor_select").format(options=", ".join(options))


def worker_system_prompt(specialization: str, extra_instructions: str = "") -> str:
    prompt = load_template("worker_system").format(specialization=specialization)
    if extra_instructions:
        prompt = f"{prompt}\n{extra_instructions}"
    return prompt


def baseline_system_prompt() -> str:
    return load_template("baseline_system")


def baseline_user_prompt(ip_address: str) -> str:
    if not ip_address.strip():
        raise MissingPlaceholder("placeholder {ip_address} is empty")
    return load_template("baseline_user").format(ip_address=ip_address)
