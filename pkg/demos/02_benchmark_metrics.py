"""Run a small benchmark and print the metrics grid.

Twelve planted questions across four synthetic sites, mixing single- and
multi-source items at several depths, executed concurrently with scripted
perfect policies and a scripted judge.
"""

from webtraverse.agent_core import RunConfig
from webtraverse.bench import compute_metrics, render_metrics_table, run_benchmark
from webtraverse.model_client import ScriptedBackend
from webtraverse.simsite import generate_site, mount, oracle_scripts, plant_qa
from webtraverse.webenv import Fetcher, FetchPolicy, InMemoryTransport

transport = InMemoryTransport()
suite = []
for seed in (21, 22, 23, 24):
    site = generate_site(seed=seed, depth=4, branching=2)
    mount(site, transport)
    for kind, depths in (("single", [2]), ("single", [3]), ("multi", [2, 3])):
        suite.append((site, plant_qa(site, kind, depths)))

items = [qa.item for _, qa in suite]
by_question = {qa.item.question: (site, qa) for site, qa in suite}


def backend_factory(item):
    from webtraverse.agent_core import RunBackends

    site, qa = by_question[item.question]
    explorer, critic = oracle_scripts(site, qa)
    return RunBackends(explorer=ScriptedBackend(explorer), critic=ScriptedBackend(critic))


env = Fetcher(transport, FetchPolicy())
judge_backend = ScriptedBackend(["answers match exactly.\nGRADE: CORRECT"] * len(items))

records = run_benchmark(items, RunConfig(), backend_factory=backend_factory, env=env,
                        judge_backend=judge_backend, concurrency=4)
report = compute_metrics(records)
print(render_metrics_table(report))
print()
print(f"every run answered: {all(r.outcome == 'answered' for r in records)}")
print(f"mean clicks over correct runs: {report.mean_action_count:.2f}")
