"""Shared fixtures: mounted synthetic sites and scripted-backend helpers."""

from __future__ import annotations

import json

import pytest

from webtraverse.model_client import ScriptedBackend
from webtraverse.simsite import SiteSpec, generate_site, mount, oracle_scripts, plant_qa
from webtraverse.webenv import Fetcher, FetchPolicy, InMemoryTransport


@pytest.fixture
def small_site() -> SiteSpec:
    """Depth 3, branching 2: 7 pages."""
    return generate_site(seed=7, depth=3, branching=2, facts=2)


@pytest.fixture
def small_env(small_site) -> Fetcher:
    return Fetcher(mount(small_site), FetchPolicy())


def make_env(*specs: SiteSpec, transport: InMemoryTransport | None = None) -> Fetcher:
    transport = transport or InMemoryTransport()
    for spec in specs:
        mount(spec, transport)
    return Fetcher(transport, FetchPolicy())


def oracle_backends(spec: SiteSpec, qa, frontier_mode: str = "global_frontier"):
    """Fresh scripted explorer/critic queues for a perfect run on ``spec``."""
    from webtraverse.agent_core import RunBackends

    explorer, critic = oracle_scripts(spec, qa, frontier_mode)
    return RunBackends(explorer=ScriptedBackend(explorer),
                       critic=ScriptedBackend(critic))


def never_judging_critic(n_steps: int) -> ScriptedBackend:
    replies = []
    for _ in range(n_steps):
        replies.append(json.dumps({"usefulness": False}))
        replies.append(json.dumps({"judge": False}))
    return ScriptedBackend(replies)


def click_first_explorer(n_steps: int) -> ScriptedBackend:
    reply = "Thought: keep exploring the first listed button.\nAction: visit_page\nAction Input: [0]"
    return ScriptedBackend([reply] * n_steps)
