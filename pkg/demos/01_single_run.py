"""Walk one query end to end, offline.

Builds a deterministic synthetic website, mounts it on the in-memory
transport, drives the explorer-critic loop with scripted model replies that
follow the shortest click path, and prints the whole trajectory.
"""

from webtraverse.agent_core import Query, RunBackends, RunConfig, run_query
from webtraverse.model_client import ScriptedBackend
from webtraverse.simsite import generate_site, mount, oracle_scripts, plant_qa
from webtraverse.webenv import Fetcher, FetchPolicy

# A depth-3 site: home -> two sections -> four subsections.
site = generate_site(seed=7, depth=3, branching=2)
qa = plant_qa(site, "single", [3])  # the answer lives three levels down

print(f"question: {qa.item.question}")
print(f"root:     {qa.item.root_url}")
print(f"oracle minimum clicks: {qa.min_clicks}")
print()

env = Fetcher(mount(site), FetchPolicy())
explorer_replies, critic_replies = oracle_scripts(site, qa)
backends = RunBackends(explorer=ScriptedBackend(explorer_replies),
                       critic=ScriptedBackend(critic_replies))

result = run_query(Query(qa.item.question, qa.item.root_url), RunConfig(), backends, env)

print(f"outcome:      {result.outcome}")
print(f"answer:       {result.answer}")
print(f"click count:  {result.action_count}")
print()
print("trajectory:")
for step in result.trajectory.steps:
    print(f"  [{step.index}] thought: {step.thought}")
    print(f"      clicked: {step.action.button_text} -> {step.action.target}")
print()
print("critic memory:")
for entry in result.memory.entries:
    print(f"  step {entry.step_index} ({entry.source_url}): {entry.information}")

assert result.action_count == qa.min_clicks
