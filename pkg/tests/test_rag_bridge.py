from __future__ import annotations

import json

import pytest

from webtraverse.agent_core import MemoryEntry, RunConfig
from webtraverse.bench import BenchmarkItem
from webtraverse.model_client import ScriptedBackend
from webtraverse.rag_bridge import (
    COMBINED,
    DEFAULT_TOP_K,
    NAIVE,
    FixtureRetriever,
    RetrievedDoc,
    answer_with_rag,
    compose_context,
    render_docs,
    retrieve,
)
from webtraverse.simsite import generate_site, oracle_scripts, plant_qa

from conftest import make_env, oracle_backends

DOCS = [
    RetrievedDoc(1, "https://a.test/1", "first snippet"),
    RetrievedDoc(2, "https://a.test/2", "second snippet"),
]

ENTRY = MemoryEntry(step_index=2, information="deep fact", source_url="https://a.test/deep")


def _fixture_retriever(n: int = 3) -> FixtureRetriever:
    return FixtureRetriever({
        "what is it?": [
            {"url": f"https://r.test/{i}", "snippet": f"snippet {i}"} for i in range(1, n + 1)
        ],
    })


def _item(question: str = "what is it?", root: str = "https://site.test/") -> BenchmarkItem:
    return BenchmarkItem(
        question=question, answer="42", root_url=root,
        hop="single-source", domain="Education", language="English",
        difficulty_level="Easy", source_websites=(root + "x/",), golden_path=("root->x",),
    )


# -- retrieve -----------------------------------------------------------------

def test_fixture_retriever_returns_fewer_than_k():
    docs = retrieve("what is it?", 10, _fixture_retriever(3))
    assert [d.rank for d in docs] == [1, 2, 3]
    assert docs[0].snippet == "snippet 1"


def test_retrieve_rejects_k_below_one():
    with pytest.raises(ValueError):
        retrieve("q", 0, _fixture_retriever())


def test_retrieve_truncates_to_k():
    docs = retrieve("what is it?", 2, _fixture_retriever(5))
    assert [d.rank for d in docs] == [1, 2]


def test_default_top_k_is_ten():
    assert DEFAULT_TOP_K == 10

    class SpyRetriever:
        def __init__(self):
            self.k_seen = None

        def search(self, query, k):
            self.k_seen = k
            return []

    spy = SpyRetriever()
    answer_with_rag(_item(), NAIVE, retriever=spy, generator=ScriptedBackend(["ans"]))
    assert spy.k_seen == 10


def test_fixture_retriever_unknown_query_empty():
    assert retrieve("unknown thing", 5, _fixture_retriever()) == []


# -- compose_context ----------------------------------------------------------

def test_compose_orders_docs_before_memory():
    context = compose_context(DOCS, [ENTRY])
    rendered = context.render()
    assert rendered.index("first snippet") < rendered.index("deep fact")
    assert rendered.index("second snippet") < rendered.index("deep fact")


def test_compose_empty_memory_is_byte_identical_to_naive():
    assert compose_context(DOCS, []).render() == render_docs(DOCS)


def test_compose_memory_only_context():
    rendered = compose_context([], [ENTRY, ENTRY]).render()
    assert rendered.count("deep fact") == 2


# -- answer_with_rag ----------------------------------------------------------

def test_naive_prompt_contains_snippets_in_rank_order():
    generator = ScriptedBackend(["generated answer"])
    answer = answer_with_rag(_item(), NAIVE, retriever=_fixture_retriever(3),
                             generator=generator)
    assert answer == "generated answer"
    prompt = generator.calls[0].messages[-1].content
    assert prompt.index("snippet 1") < prompt.index("snippet 2") < prompt.index("snippet 3")
    assert "what is it?" in prompt


def test_combined_with_empty_memory_equals_naive_prompt():
    site = generate_site(seed=60, depth=2, branching=2)
    env = make_env(site)
    item = _item(root=site.root_url)

    naive_gen = ScriptedBackend(["naive answer"])
    answer_with_rag(item, NAIVE, retriever=_fixture_retriever(), generator=naive_gen)

    # a traversal whose critic never finds anything useful and never answers
    from conftest import click_first_explorer, never_judging_critic
    from webtraverse.agent_core import RunBackends

    combined_gen = ScriptedBackend(["combined answer"])
    backends = RunBackends(explorer=click_first_explorer(3), critic=never_judging_critic(3))
    answer_with_rag(item, COMBINED, retriever=_fixture_retriever(), generator=combined_gen,
                    run_config=RunConfig(max_steps=1), run_backends=backends, env=env)
    assert naive_gen.calls[0].messages[-1].content == combined_gen.calls[0].messages[-1].content


def test_combined_injects_planted_fact_into_generation_prompt():
    site = generate_site(seed=61, depth=3, branching=2)
    qa = plant_qa(site, "single", [3])
    env = make_env(site)
    item = qa.item
    generator = ScriptedBackend(["final"])
    retriever = FixtureRetriever({item.question: [
        {"url": "https://shallow.test/", "snippet": "nothing deep here"}]})
    answer_with_rag(item, COMBINED, retriever=retriever, generator=generator,
                    run_config=RunConfig(), run_backends=oracle_backends(site, qa),
                    env=env)
    prompt = generator.calls[0].messages[-1].content
    planted_code = qa.item.answer
    assert planted_code in prompt             # the deep fact reached the prompt
    assert "nothing deep here" in prompt      # retrieval docs still present
    assert prompt.index("nothing deep here") < prompt.index(planted_code)


def test_combined_degrades_to_naive_on_aborted_traversal(caplog):
    env = make_env()  # nothing mounted: the root fetch 404s and the run aborts
    item = _item(root="https://gone.test/")
    generator = ScriptedBackend(["still answers"])
    retriever = FixtureRetriever({item.question: [
        {"url": "https://r.test/1", "snippet": "shallow"}]})
    from webtraverse.agent_core import RunBackends

    with caplog.at_level("WARNING"):
        answer = answer_with_rag(item, COMBINED, retriever=retriever, generator=generator,
                                 run_config=RunConfig(),
                                 run_backends=RunBackends(ScriptedBackend([])), env=env)
    assert answer == "still answers"
    assert "degrading to naive" in caplog.text
    assert "shallow" in generator.calls[0].messages[-1].content


def test_combined_requires_run_dependencies():
    with pytest.raises(ValueError):
        answer_with_rag(_item(), COMBINED, retriever=_fixture_retriever(),
                        generator=ScriptedBackend(["x"]))


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        answer_with_rag(_item(), "hybrid", retriever=_fixture_retriever(),
                        generator=ScriptedBackend(["x"]))


def test_http_retriever_unreachable_endpoint():
    from webtraverse.errors import RetrieverUnavailable
    from webtraverse.rag_bridge import HttpRetriever

    retriever = HttpRetriever("http://127.0.0.1:9/closed", timeout_s=0.2)
    with pytest.raises(RetrieverUnavailable):
        retriever.search("q", 3)


def test_retriever_built_from_config(tmp_path):
    from webtraverse.config import RetrieverConfig

    fixture = tmp_path / "fixture.json"
    fixture.write_text(json.dumps({"q?": [{"url": "https://r.test/", "snippet": "s"}]}), "utf-8")
    retriever = RetrieverConfig(kind="fixture", path=str(fixture)).build()
    assert retrieve("q?", 5, retriever)[0].snippet == "s"
    from webtraverse.errors import ConfigError

    with pytest.raises(ConfigError):
        RetrieverConfig(kind="fixture").build()
