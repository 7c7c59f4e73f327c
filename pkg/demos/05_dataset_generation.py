"""The dataset construction pipeline, end to end and offline.

Crawl a mounted synthetic site breadth-first, synthesize question-answer
candidates with a scripted generator, filter them through the strict
verifier, and export a review queue that the benchmark loader accepts.
"""

import json
import tempfile
from pathlib import Path

from webtraverse.bench import load_dataset
from webtraverse.datagen import run_pipeline
from webtraverse.model_client import ScriptedBackend
from webtraverse.simsite import generate_site, mount
from webtraverse.webenv import Fetcher, FetchPolicy

site = generate_site(seed=51, depth=3, branching=2)
env = Fetcher(mount(site), FetchPolicy())
deep_urls = [site.url_of(n) for n in site.nodes_at(2)] + \
            [site.url_of(n) for n in site.nodes_at(3)]

generator = ScriptedBackend([
    json.dumps({"sublink_reason": "page holds a unique code",
                "sublinks": [deep_urls[0]], "reason": "single lookup",
                "query": "What reference code does the first section list?",
                "answer": "see page"}),
    json.dumps({"sublink_reason": "page holds a unique code",
                "sublinks": [deep_urls[1]], "reason": "single lookup",
                "query": "What reference code does the second section list?",
                "answer": "see page"}),
    json.dumps({"sublink_reason": "codes must be combined",
                "sublinks": [deep_urls[0], deep_urls[1]], "reason": "two lookups",
                "query": "Which codes do the first two sections list together?",
                "answer": "both codes"}),
])
verifier = ScriptedBackend(
    [json.dumps({"decision": "true", "reason": "entity answer, needs the page"})] * 3)

with tempfile.TemporaryDirectory() as tmp:
    crawl_path = Path(tmp) / "crawl.jsonl"
    queue_path = Path(tmp) / "review_queue.jsonl"
    records, passing = run_pipeline(
        site.root_url, env=env, generator=generator, verifier=verifier,
        max_depth=3, singles=2, multis=1,
        out_crawl=crawl_path, out_queue=queue_path,
        domain="Organization", language="English",
    )
    print(f"crawled pages: {len(records)}")
    for record in records:
        print(f"  depth {record.depth}: {record.url}")
    print(f"verified QAs: {len(passing)}")

    items = load_dataset(queue_path)
    print(f"review queue re-loads as {len(items)} valid benchmark items:")
    for item in items:
        print(f"  [{item.hop} / {item.difficulty_level}] {item.question}")
