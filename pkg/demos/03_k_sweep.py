"""Sweep the step budget K and watch accuracy saturate.

Accuracy at each K should equal the fraction of items whose oracle minimum
click count fits inside the budget, so the curve is non-decreasing and fully
explained by question depth.
"""

from webtraverse.agent_core import ANSWERED, Query, RunBackends, RunConfig, run_query
from webtraverse.model_client import ScriptedBackend
from webtraverse.simsite import generate_site, mount, oracle_scripts, plant_qa
from webtraverse.webenv import Fetcher, FetchPolicy, InMemoryTransport

transport = InMemoryTransport()
suite = []
for seed in (31, 32, 33):
    site = generate_site(seed=seed, depth=4, branching=2)
    mount(site, transport)
    for kind, depths in (("single", [2]), ("single", [3]), ("single", [4]),
                         ("multi", [2, 4]), ("multi", [3, 4])):
        suite.append((site, plant_qa(site, kind, depths)))

env = Fetcher(transport, FetchPolicy())
print(f"{len(suite)} items; oracle min-click spread:",
      sorted({qa.min_clicks for _, qa in suite}))
print()
print(" K   accuracy   oracle fraction")

for budget in range(1, 7):
    answered = 0
    for site, qa in suite:
        explorer, critic = oracle_scripts(site, qa)
        backends = RunBackends(explorer=ScriptedBackend(explorer),
                               critic=ScriptedBackend(critic))
        result = run_query(Query(qa.item.question, qa.item.root_url),
                           RunConfig(max_steps=budget), backends, env)
        answered += result.outcome == ANSWERED
    accuracy = answered / len(suite)
    oracle = sum(qa.min_clicks <= budget for _, qa in suite) / len(suite)
    marker = "ok" if accuracy == oracle else "MISMATCH"
    print(f" {budget}   {accuracy:8.3f}   {oracle:8.3f}   {marker}")
