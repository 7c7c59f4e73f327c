from __future__ import annotations

import json
import random

import pytest

from webtraverse.agent_core import (
    ABORTED,
    ANSWERED,
    REFUSED,
    STEP_LIMIT,
    TRUNCATION_NOTICE,
    Action,
    Memory,
    Observation,
    Query,
    RunBackends,
    RunConfig,
    StepRecord,
    Trajectory,
    critic_answer,
    critic_observe,
    parse_react_output,
    render_explorer_prompt,
    resolve_action,
    run_query,
    run_react_baseline,
)
from webtraverse.errors import AlreadyVisited, AmbiguousTarget, FormatViolation, UnknownTarget
from webtraverse.htmlview import Button
from webtraverse.model_client import ScriptedBackend
from webtraverse.simsite import generate_site, mount, plant_qa
from webtraverse.webenv import ObservationLimits, Page, build_observation

from conftest import click_first_explorer, make_env, never_judging_critic, oracle_backends

ROOT = "https://site.test/"


def _btn(i: int, name: str, text: str | None = None) -> Button:
    return Button(i, text if text is not None else name.upper(), f"{ROOT}{name}")


def _obs(buttons: list[Button], markdown: str = "body", step: int = 1,
         truncated: bool = False) -> Observation:
    page = Page(url=ROOT, title="T", markdown=markdown, buttons=tuple(buttons),
                truncated=truncated)
    return Observation(page=page, frontier_view=tuple(buttons), step_index=step)


def _trajectory(buttons: list[Button]) -> Trajectory:
    obs = _obs(buttons)
    traj = Trajectory(root_observation=obs)
    traj.mark_visited(ROOT)
    traj.absorb(obs)
    return traj


QUERY = Query("What is the venue address?", ROOT)


# -- prompt rendering ---------------------------------------------------------

def test_fresh_prompt_contains_question_once_and_button_lines():
    traj = _trajectory([_btn(0, "a"), _btn(1, "b")])
    messages = render_explorer_prompt(QUERY, traj, traj.root_observation)
    user = messages[-1].content
    assert user.count(QUERY.question) == 1
    assert user.count("] A -> ") == 1 and user.count("] B -> ") == 1
    assert len([line for line in user.splitlines() if line.startswith("[")]) == 2
    assert user.rstrip().endswith("Thought:")


def test_prompt_observation_markers_match_completed_steps():
    traj = _trajectory([_btn(0, "a"), _btn(1, "b"), _btn(2, "c"), _btn(3, "d")])
    for step in (1, 2, 3):
        button = traj.root_observation.frontier_view[step - 1]
        traj.mark_visited(button.target)
        traj.steps.append(StepRecord(
            index=step,
            thought=f"t{step}",
            action=Action(button.target, button.text, button.target),
            observation=_obs([], step=step + 1),
        ))
    messages = render_explorer_prompt(QUERY, traj, traj.steps[-1].observation)
    user = messages[-1].content
    assert user.count("Observation:") == 3
    system = messages[0].content
    assert "Observation: the result of the action" in system


def test_prompt_includes_truncation_notice():
    obs = _obs([], truncated=True)
    traj = Trajectory(root_observation=obs)
    messages = render_explorer_prompt(QUERY, traj, obs)
    assert TRUNCATION_NOTICE in messages[-1].content


def test_prompt_tools_listed_in_system():
    traj = _trajectory([_btn(0, "a")])
    system = render_explorer_prompt(QUERY, traj, traj.root_observation)[0].content
    assert "[visit_page]" in system
    baseline = render_explorer_prompt(QUERY, traj, traj.root_observation,
                                      tools=("visit_page", "final_answer"))[0].content
    assert "[visit_page, final_answer]" in baseline


# -- parse_react_output -------------------------------------------------------

def test_parse_full_react_reply():
    reply = "Thought: the venue page looks relevant\nAction: visit_page\nAction Input: https://x.org/venue/"
    parsed = parse_react_output(reply)
    assert parsed.thought == "the venue page looks relevant"
    assert parsed.action == "visit_page"
    assert parsed.action_input == "https://x.org/venue/"


def test_parse_missing_action_line():
    with pytest.raises(FormatViolation):
        parse_react_output("Thought: I wonder about many things")


def test_parse_unknown_tool():
    reply = "Thought: t\nAction: answer_question\nAction Input: x"
    with pytest.raises(FormatViolation):
        parse_react_output(reply)


def test_parse_accepts_label_free_leading_thought():
    parsed = parse_react_output("the cue already said Thought\nAction: visit_page\nAction Input: [0]")
    assert parsed.thought == "the cue already said Thought"


def test_parse_rejects_reply_without_any_thought_text():
    with pytest.raises(FormatViolation):
        parse_react_output("Action: visit_page\nAction Input: [0]")


def test_parse_final_answer_when_allowed():
    reply = "Thought: done\nAction: final_answer\nAction Input: 42"
    parsed = parse_react_output(reply, tools=("visit_page", "final_answer"))
    assert parsed.action == "final_answer"
    assert parsed.action_input == "42"


# -- resolve_action -----------------------------------------------------------

def test_resolve_by_exact_url():
    traj = _trajectory([_btn(0, "a"), _btn(1, "b")])
    action = resolve_action(f"{ROOT}b", traj, "global_frontier",
                            traj.root_observation.frontier_view)
    assert action.target == f"{ROOT}b"
    assert f"{ROOT}b" not in traj.frontier


def test_resolve_unknown_url_is_rejected():
    traj = _trajectory([_btn(0, "a")])
    with pytest.raises(UnknownTarget):
        resolve_action("https://evil.example.com/", traj, "global_frontier",
                       traj.root_observation.frontier_view)


def test_resolve_ambiguous_text():
    traj = _trajectory([_btn(0, "a", text="More"), _btn(1, "b", text="More")])
    with pytest.raises(AmbiguousTarget):
        resolve_action("More", traj, "global_frontier", traj.root_observation.frontier_view)


def test_resolve_unique_text_match():
    traj = _trajectory([_btn(0, "a", text="Venue"), _btn(1, "b", text="More")])
    action = resolve_action("venue", traj, "global_frontier",
                            traj.root_observation.frontier_view)
    assert action.target == f"{ROOT}a"


def test_resolve_ordinal_reference():
    traj = _trajectory([_btn(0, "a"), _btn(1, "b")])
    action = resolve_action("[1]", traj, "global_frontier",
                            traj.root_observation.frontier_view)
    assert action.target == f"{ROOT}b"


def test_resolve_visited_url():
    traj = _trajectory([_btn(0, "a")])
    traj.mark_visited(f"{ROOT}a")
    with pytest.raises(AlreadyVisited):
        resolve_action(f"{ROOT}a", traj, "global_frontier", ())


def test_resolve_page_mode_restricted_to_latest_view():
    traj = _trajectory([_btn(0, "a"), _btn(1, "b")])
    latest_view = (_btn(0, "c"),)
    traj.absorb(_obs([_btn(0, "c")], step=2))
    with pytest.raises(UnknownTarget):
        resolve_action(f"{ROOT}a", traj, "current_page_only", latest_view)
    assert resolve_action(f"{ROOT}c", traj, "current_page_only", latest_view).target == f"{ROOT}c"


# -- critic -------------------------------------------------------------------

def _action() -> Action:
    return Action(f"{ROOT}deep", "Deep", f"{ROOT}deep")


def test_critic_observe_useful_appends_memory():
    memory = Memory()
    backend = ScriptedBackend([json.dumps(
        {"usefulness": True, "information": "deadline is March 21, 2025"})])
    verdict = critic_observe(QUERY, _action(), _obs([], step=2), memory, backend)
    assert verdict.usefulness and verdict.information == "deadline is March 21, 2025"
    assert len(memory.entries) == 1
    assert memory.entries[0].source_url == f"{ROOT}deep"
    assert memory.entries[0].step_index == 1


def test_critic_observe_not_useful_leaves_memory():
    memory = Memory()
    backend = ScriptedBackend([json.dumps({"usefulness": False})])
    verdict = critic_observe(QUERY, _action(), _obs([], step=2), memory, backend)
    assert not verdict.usefulness
    assert memory.entries == []


def test_critic_observe_garbage_twice_degrades_to_not_useful():
    memory = Memory()
    backend = ScriptedBackend(["prose only", "still prose"])
    verdict = critic_observe(QUERY, _action(), _obs([], step=2), memory, backend, reasks=1)
    assert not verdict.usefulness
    assert memory.entries == []
    assert len(backend.calls) == 2


def test_critic_answer_judges_sufficient():
    memory = Memory()
    backend = ScriptedBackend([json.dumps(
        {"judge": True, "answer": "March 21, 2025; Brune-Kreisky-Platz 1"})])
    verdict = critic_answer(QUERY, memory, backend)
    assert verdict.judge
    assert verdict.answer == "March 21, 2025; Brune-Kreisky-Platz 1"


def test_critic_answer_insufficient_continues():
    backend = ScriptedBackend([json.dumps({"judge": False})])
    verdict = critic_answer(QUERY, Memory(), backend)
    assert not verdict.judge and verdict.answer == ""


def test_critic_accepts_string_booleans():
    backend = ScriptedBackend([json.dumps({"judge": "true", "answer": "x"})])
    assert critic_answer(QUERY, Memory(), backend).judge is True


# -- run_query ----------------------------------------------------------------

def test_perfect_run_depth_three_takes_two_clicks():
    site = generate_site(seed=3, depth=3, branching=2)
    qa = plant_qa(site, "single", [3])
    env = make_env(site)
    result = run_query(Query(qa.item.question, qa.item.root_url), RunConfig(),
                       oracle_backends(site, qa), env)
    assert result.outcome == ANSWERED
    assert result.action_count == qa.min_clicks == 2
    assert result.answer == qa.item.answer


def test_never_judging_critic_hits_step_limit():
    site = generate_site(seed=4, depth=4, branching=2)
    env = make_env(site)
    backends = RunBackends(explorer=click_first_explorer(10),
                           critic=never_judging_critic(10))
    result = run_query(Query("anything?", site.root_url), RunConfig(max_steps=5),
                       backends, env)
    assert result.outcome == STEP_LIMIT
    assert result.action_count == 5


def test_default_step_budget_is_fifteen():
    assert RunConfig().max_steps == 15


def test_explorer_calls_carry_observation_stop_and_default_top_p():
    site = generate_site(seed=16, depth=2, branching=2)
    qa = plant_qa(site, "single", [2])
    env = make_env(site)
    backends = oracle_backends(site, qa)
    run_query(Query(qa.item.question, qa.item.root_url), RunConfig(), backends, env)
    explorer_calls = backends.explorer.calls
    assert explorer_calls, "explorer was never called"
    for call in explorer_calls:
        assert call.params.stop_sequences == ("Observation:",)
        assert call.params.top_p == 0.8
    for call in backends.critic.calls:
        assert call.params.stop_sequences == ()


def test_explorer_format_failures_exhaust_to_refused():
    site = generate_site(seed=5, depth=2, branching=2)
    env = make_env(site)
    backends = RunBackends(explorer=ScriptedBackend(["junk one", "junk two", "junk three"]),
                           critic=never_judging_critic(2))
    result = run_query(Query("anything?", site.root_url), RunConfig(explorer_reasks=2),
                       backends, env)
    assert result.outcome == REFUSED
    assert result.action_count == 0


def test_unknown_url_never_fetched_and_reask_recovers():
    site = generate_site(seed=6, depth=2, branching=2)
    env = make_env(site)
    evil = "https://evil.example.com/"
    first_button = site.url_of(site.root.children[0])
    backends = RunBackends(
        explorer=ScriptedBackend([
            f"Thought: sneaky\nAction: visit_page\nAction Input: {evil}",
            f"Thought: fine\nAction: visit_page\nAction Input: {first_button}",
        ]),
        critic=ScriptedBackend([
            json.dumps({"usefulness": False}),
            json.dumps({"judge": True, "answer": "done"}),
        ]),
    )
    result = run_query(Query("anything?", site.root_url), RunConfig(), backends, env)
    assert result.outcome == ANSWERED
    assert evil not in env.transport.requests_seen
    assert all(not u.startswith("https://evil") for u in result.visited)


def test_script_exhaustion_aborts():
    site = generate_site(seed=8, depth=2, branching=2)
    env = make_env(site)
    backends = RunBackends(explorer=ScriptedBackend([]), critic=ScriptedBackend([]))
    result = run_query(Query("anything?", site.root_url), RunConfig(), backends, env)
    assert result.outcome == ABORTED


def test_unfetchable_root_aborts():
    env = make_env()  # empty transport: everything 404s
    backends = RunBackends(explorer=ScriptedBackend([]), critic=ScriptedBackend([]))
    result = run_query(Query("anything?", "https://nowhere.test/"), RunConfig(), backends, env)
    assert result.outcome == ABORTED
    assert result.action_count == 0


def test_broken_click_target_spends_the_click_and_continues():
    site = generate_site(seed=9, depth=2, branching=2)
    transport = mount(site)
    missing = site.url_of(site.root.children[0])
    del transport.pages[missing]
    env = make_env(transport=transport)
    backends = RunBackends(explorer=click_first_explorer(4), critic=never_judging_critic(4))
    result = run_query(Query("anything?", site.root_url), RunConfig(max_steps=2),
                       backends, env)
    assert result.outcome == STEP_LIMIT
    assert result.action_count == 2


def test_memory_monotone_and_bounded_by_steps():
    site = generate_site(seed=10, depth=4, branching=2)
    qa = plant_qa(site, "multi", [2, 3])
    env = make_env(site)
    result = run_query(Query(qa.item.question, qa.item.root_url), RunConfig(),
                       oracle_backends(site, qa), env)
    assert result.outcome == ANSWERED
    steps = [e.step_index for e in result.memory.entries]
    assert steps == sorted(steps)
    assert len(result.memory.entries) <= result.action_count


def test_count_root_flag_adds_one():
    site = generate_site(seed=11, depth=3, branching=2)
    qa = plant_qa(site, "single", [2])
    env = make_env(site)
    result = run_query(Query(qa.item.question, qa.item.root_url),
                       RunConfig(count_root=True), oracle_backends(site, qa), env)
    assert result.outcome == ANSWERED
    assert result.action_count == qa.min_clicks + 1


def test_deterministic_rerun_identical_results():
    site = generate_site(seed=12, depth=3, branching=2)
    qa = plant_qa(site, "single", [3])

    def one_run():
        env = make_env(site)
        result = run_query(Query(qa.item.question, qa.item.root_url), RunConfig(),
                           oracle_backends(site, qa), env)
        payload = result.to_json_dict(include_transcript=True)
        payload.pop("wall_clock_ms")
        return json.dumps(payload, sort_keys=True)

    assert one_run() == one_run()


# -- react baseline -----------------------------------------------------------

def test_react_baseline_click_then_final_answer():
    site = generate_site(seed=13, depth=2, branching=2)
    env = make_env(site)
    first_button = site.url_of(site.root.children[0])
    backends = RunBackends(explorer=ScriptedBackend([
        f"Thought: look\nAction: visit_page\nAction Input: {first_button}",
        "Thought: enough\nAction: final_answer\nAction Input: the code is X",
    ]))
    result = run_react_baseline(Query("anything?", site.root_url), RunConfig(policy="react_baseline"),
                                backends, env)
    assert result.outcome == ANSWERED
    assert result.answer == "the code is X"
    assert result.action_count == 1
    assert result.memory.entries == []


def test_react_baseline_without_final_answer_hits_step_limit():
    site = generate_site(seed=14, depth=4, branching=2)
    env = make_env(site)
    backends = RunBackends(explorer=click_first_explorer(5))
    result = run_react_baseline(Query("anything?", site.root_url),
                                RunConfig(policy="react_baseline", max_steps=3),
                                backends, env)
    assert result.outcome == STEP_LIMIT
    assert result.action_count == 3


def test_react_baseline_immediate_final_answer():
    site = generate_site(seed=15, depth=2, branching=2)
    env = make_env(site)
    backends = RunBackends(explorer=ScriptedBackend([
        "Thought: it is on the start page\nAction: final_answer\nAction Input: zero clicks",
    ]))
    result = run_react_baseline(Query("anything?", site.root_url),
                                RunConfig(policy="react_baseline"), backends, env)
    assert result.outcome == ANSWERED
    assert result.action_count == 0


# -- budget safety (property) --------------------------------------------------

def _random_backends(rng: random.Random, k: int) -> RunBackends:
    explorer_replies = []
    critic_replies = []
    for _ in range(3 * k + 5):
        roll = rng.random()
        if roll < 0.45:
            explorer_replies.append(
                f"Thought: pick\nAction: visit_page\nAction Input: [{rng.randrange(0, 6)}]")
        elif roll < 0.6:
            explorer_replies.append(
                f"Thought: sneak\nAction: visit_page\nAction Input: https://offsite-{rng.randrange(9)}.test/")
        elif roll < 0.75:
            explorer_replies.append("complete nonsense with no markers")
        else:
            explorer_replies.append(
                "Thought: odd\nAction: teleport\nAction Input: anywhere")
        critic_replies.append(json.dumps({"usefulness": rng.random() < 0.3,
                                          "information": "note"}))
        critic_replies.append(json.dumps({"judge": rng.random() < 0.05, "answer": "guess"}))
    return RunBackends(explorer=ScriptedBackend(explorer_replies),
                       critic=ScriptedBackend(critic_replies))


@pytest.mark.parametrize("trial", range(25))
def test_budget_and_frontier_safety_under_adversarial_scripts(trial):
    rng = random.Random(1000 + trial)
    k = rng.randint(1, 5)
    site = generate_site(seed=rng.randint(0, 50), depth=rng.randint(2, 4), branching=2)
    env = make_env(site)
    result = run_query(Query("chaos?", site.root_url), RunConfig(max_steps=k),
                       _random_backends(rng, k), env)
    assert result.action_count <= k
    shown = {b.target for b in result.trajectory.root_observation.frontier_view}
    for step in result.trajectory.steps:
        shown |= {b.target for b in step.observation.frontier_view}
    allowed = shown | {site.root_url}
    assert set(env.transport.requests_seen) <= allowed
