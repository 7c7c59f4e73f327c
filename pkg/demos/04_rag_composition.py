"""Compose shallow retrieval with deep traversal.

A fixture retriever returns surface snippets that do not contain the answer;
the traversal digs it out of a depth-3 page, and the combined context hands
both to the generator.
"""

from webtraverse.model_client import ScriptedBackend
from webtraverse.rag_bridge import COMBINED, NAIVE, FixtureRetriever, answer_with_rag
from webtraverse.simsite import generate_site, mount, oracle_scripts, plant_qa
from webtraverse.webenv import Fetcher, FetchPolicy
from webtraverse.agent_core import RunBackends, RunConfig

site = generate_site(seed=41, depth=3, branching=2)
qa = plant_qa(site, "single", [3])
env = Fetcher(mount(site), FetchPolicy())

retriever = FixtureRetriever({qa.item.question: [
    {"url": "https://search.example/hit-1", "snippet": "a shallow overview page"},
    {"url": "https://search.example/hit-2", "snippet": "another surface result"},
]})

print(f"question: {qa.item.question}")
print(f"planted answer (depth 3): {qa.item.answer}")
print()

naive_generator = ScriptedBackend(["I cannot find the code in these results."])
answer_with_rag(qa.item, NAIVE, retriever=retriever, generator=naive_generator)
naive_prompt = naive_generator.calls[0].messages[-1].content
print(f"naive prompt mentions the answer: {qa.item.answer in naive_prompt}")

explorer, critic = ScriptedBackend(oracle_scripts(site, qa)[0]), ScriptedBackend(
    oracle_scripts(site, qa)[1])
combined_generator = ScriptedBackend([qa.item.answer])
answer_with_rag(qa.item, COMBINED, retriever=retriever, generator=combined_generator,
                run_config=RunConfig(),
                run_backends=RunBackends(explorer=explorer, critic=critic), env=env)
combined_prompt = combined_generator.calls[0].messages[-1].content
print(f"combined prompt mentions the answer: {qa.item.answer in combined_prompt}")
print()
print("tail of the combined context:")
for line in combined_prompt.splitlines()[-6:]:
    print(f"  {line}")
