"""Operator entry point.

Subcommands: run (one query), bench (a dataset), metrics (report from a
results file), judge (grade predictions), sweep-k (benchmark across step
budgets), datagen (build a review queue from a crawl), simsite (synthetic
site tooling).

Exit codes for ``run``: 0 answered, 2 step limit, 3 refused or aborted,
1 configuration or I/O problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench as bench_mod
from . import datagen as datagen_mod
from . import simsite as simsite_mod
from .agent_core import (
    ABORTED,
    ANSWERED,
    REFUSED,
    STEP_LIMIT,
    Query,
    RunBackends,
    run_query,
    run_react_baseline,
)
from .config import Config, load_config
from .errors import ConfigError, TraversalError
from .model_client import ModelBackend, ScriptedBackend
from .webenv import DiskCache, Fetcher, HttpTransport, InMemoryTransport

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STEP_LIMIT = 2
EXIT_FAILED = 3

_OUTCOME_EXIT = {
    ANSWERED: EXIT_OK,
    STEP_LIMIT: EXIT_STEP_LIMIT,
    REFUSED: EXIT_FAILED,
    ABORTED: EXIT_FAILED,
}

_POLICY_FLAG = {"webwalker": "webwalker", "react": "react_baseline"}
_FRONTIER_FLAG = {"global": "global_frontier", "page": "current_page_only"}
DEFAULT_SWEEP_KS = (5, 10, 15, 20, 25)


def exit_code_for(outcome: str) -> int:
    return _OUTCOME_EXIT.get(outcome, EXIT_FAILED)


def _load_cfg(args) -> Config:
    if getattr(args, "config", None):
        return load_config(args.config)
    return Config()


def _backend_from_flag(flag: str | None, section) -> ModelBackend:
    """--backend remote | scripted:<replies.jsonl>; falls back to config."""
    if flag:
        if flag == "remote":
            return section.build() if section.kind == "remote" else _usage(
                "--backend remote requires a remote backend in the config file")
        if flag.startswith("scripted:"):
            return ScriptedBackend.from_jsonl(flag.split(":", 1)[1])
        _usage(f"unknown --backend value {flag!r}")
    return section.build()


def _backend_factory_from_flag(flag: str | None, section):
    """Per-item backends: scripted queues are re-loaded per item so concurrent
    runs never share mutable reply state."""
    if flag and flag.startswith("scripted:"):
        path = flag.split(":", 1)[1]
        return lambda item: RunBackends(ScriptedBackend.from_jsonl(path))
    if flag == "remote" or (not flag and section.kind == "remote"):
        backend = section.build()
        return lambda item: RunBackends(backend)
    if not flag and section.kind == "scripted":
        path = section.script_path
        return lambda item: RunBackends(ScriptedBackend.from_jsonl(path))
    _usage(f"unknown --backend value {flag!r}")


def _usage(message: str):
    raise ConfigError(message)


def _make_env(args, cfg: Config) -> Fetcher:
    policy = cfg.fetch.policy()
    sites = getattr(args, "site", None) or []
    if sites:
        transport = InMemoryTransport()
        for site_path in sites:
            spec = simsite_mod.SiteSpec.from_json(Path(site_path).read_text("utf-8"))
            simsite_mod.mount(spec, transport)
    else:
        transport = HttpTransport()
    cache_dir = getattr(args, "cache_dir", None) or cfg.cache_dir
    cache = DiskCache(cache_dir) if cache_dir else None
    return Fetcher(transport, policy, cache)


def _write_or_print(payload: str, out: str | None) -> None:
    if out:
        Path(out).write_text(payload + ("" if payload.endswith("\n") else "\n"), "utf-8")
    else:
        print(payload)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    run_config = cfg.run.run_config(
        max_steps=args.k,
        policy=_POLICY_FLAG[args.policy] if args.policy else None,
        frontier_mode=_FRONTIER_FLAG[args.frontier] if args.frontier else None,
    )
    backends = RunBackends(_backend_from_flag(args.backend, cfg.agent_backend))
    env = _make_env(args, cfg)
    query = Query(question=args.question, root_url=args.root_url)
    runner = run_react_baseline if run_config.policy == "react_baseline" else run_query
    result = runner(query, run_config, backends, env)

    payload = result.to_json_dict(include_transcript=args.transcript)
    _write_or_print(json.dumps(payload, ensure_ascii=False, indent=2), args.out)
    if result.outcome == ANSWERED:
        print(f"answer: {result.answer}", file=sys.stderr)
    print(f"outcome: {result.outcome}  actions: {result.action_count}  "
          f"visited: {len(result.visited)}", file=sys.stderr)
    return exit_code_for(result.outcome)


def _run_bench(args, cfg: Config, run_config, env) -> list[bench_mod.ResultRecord]:
    items = bench_mod.load_dataset(args.dataset)
    backend_factory = _backend_factory_from_flag(args.backend, cfg.agent_backend)
    judge_backend = None
    if args.judge_backend:
        judge_backend = _backend_from_flag(args.judge_backend, cfg.judge_backend)
    elif cfg.judge_backend.kind == "remote" or cfg.judge_backend.script_path:
        judge_backend = cfg.judge_backend.build()
    return bench_mod.run_benchmark(
        items, run_config,
        backend_factory=backend_factory, env=env, judge_backend=judge_backend,
        concurrency=args.jobs, out_path=args.out, resume=args.resume,
    )


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    run_config = cfg.run.run_config(
        max_steps=args.k,
        policy=_POLICY_FLAG[args.policy] if args.policy else None,
        frontier_mode=_FRONTIER_FLAG[args.frontier] if args.frontier else None,
    )
    env = _make_env(args, cfg)
    records = _run_bench(args, cfg, run_config, env)
    report = bench_mod.compute_metrics(records)
    print(bench_mod.render_metrics_table(report))
    return EXIT_OK


def cmd_metrics(args) -> int:
    records = []
    for line in Path(args.results).read_text("utf-8").splitlines():
        if line.strip():
            records.append(bench_mod.ResultRecord.from_json_dict(json.loads(line)))
    report = bench_mod.compute_metrics(records)
    print(bench_mod.render_metrics_table(report))
    if args.json_out:
        Path(args.json_out).write_text(
            json.dumps(report.to_json_dict(), ensure_ascii=False, indent=2), "utf-8")
    return EXIT_OK


def cmd_judge(args) -> int:
    cfg = _load_cfg(args)
    backend = _backend_from_flag(args.backend, cfg.judge_backend)
    items = bench_mod.load_dataset(args.dataset)
    by_id = {item.item_id: item for item in items}
    graded_lines = []
    for line in Path(args.predictions).read_text("utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        item = by_id.get(record.get("item_id")) if record.get("item_id") else None
        if item is None and isinstance(record.get("index"), int) and record["index"] < len(items):
            item = items[record["index"]]
        if item is None:
            record["grade"] = "ungraded"
            record["judge_error"] = "no matching dataset item"
        else:
            from .judge import JudgeInput, judge as judge_fn
            verdict = judge_fn(
                JudgeInput(item.question, item.answer, record.get("answer") or ""), backend)
            record["grade"] = verdict.grade
            record["judge_explanation"] = verdict.explanation
        graded_lines.append(json.dumps(record, ensure_ascii=False))
    payload = "\n".join(graded_lines)
    _write_or_print(payload, args.out)
    return EXIT_OK


def cmd_sweep_k(args) -> int:
    cfg = _load_cfg(args)
    ks = [int(v) for v in args.k_values.split(",")] if args.k_values else list(DEFAULT_SWEEP_KS)
    env = _make_env(args, cfg)  # shared across Ks: the page cache is reused
    rows = []
    for k in ks:
        run_config = cfg.run.run_config(
            max_steps=k,
            policy=_POLICY_FLAG[args.policy] if args.policy else None,
            frontier_mode=_FRONTIER_FLAG[args.frontier] if args.frontier else None,
        )
        sweep_args = argparse.Namespace(**{**vars(args), "out": None, "resume": False})
        records = _run_bench(sweep_args, cfg, run_config, env)
        report = bench_mod.compute_metrics(records)
        rows.append((k, report))
        ac = f"{report.mean_action_count:.2f}" if report.mean_action_count is not None else "-"
        print(f"K={k:<4} accuracy={report.accuracy:.4f}  mean_action_count={ac}  n={report.n}")
    if args.csv:
        lines = ["k,accuracy,mean_action_count,n"]
        for k, report in rows:
            ac = "" if report.mean_action_count is None else f"{report.mean_action_count:.6f}"
            lines.append(f"{k},{report.accuracy:.6f},{ac},{report.n}")
        Path(args.csv).write_text("\n".join(lines) + "\n", "utf-8")
    return EXIT_OK


def cmd_datagen(args) -> int:
    cfg = _load_cfg(args)
    if args.max_depth < 1:
        _usage("--max-depth must be >= 1")
    env = _make_env(args, cfg)
    generator = _backend_from_flag(args.backend, cfg.generator_backend)
    verifier = (_backend_from_flag(args.verifier_backend, cfg.generator_backend)
                if args.verifier_backend else generator)
    records, passing = datagen_mod.run_pipeline(
        args.root_url, env=env, generator=generator, verifier=verifier,
        max_depth=args.max_depth, max_pages=args.max_pages,
        singles=args.singles, multis=args.multis,
        out_crawl=args.out_crawl, out_queue=args.out_queue,
        domain=args.domain, language=args.language,
    )
    print(f"crawled {len(records)} pages; {len(passing)} QAs passed verification")
    return EXIT_OK


def cmd_simsite(args) -> int:
    spec = simsite_mod.generate_site(args.seed, args.depth, args.branching, facts=args.facts)
    if args.out:
        Path(args.out).write_text(spec.to_json(), "utf-8")
        print(f"wrote site spec to {args.out}")
    if args.html_dir:
        count = simsite_mod.materialize(spec, args.html_dir)
        print(f"wrote {count} HTML pages under {args.html_dir}")
    if not args.out and not args.html_dir:
        print(spec.to_json())
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="webtraverse", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, backend=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--site", action="append",
                       help="mount a synthetic site spec (repeatable); offline transport")
        p.add_argument("--cache-dir", dest="cache_dir", help="persistent page cache directory")
        if backend:
            p.add_argument("--backend", help="remote | scripted:<replies.jsonl>")

    run_p = sub.add_parser("run", help="answer one question from a root URL")
    run_p.add_argument("question")
    run_p.add_argument("root_url")
    run_p.add_argument("--k", type=int, help="step budget (default from config: 15)")
    run_p.add_argument("--policy", choices=sorted(_POLICY_FLAG))
    run_p.add_argument("--frontier", choices=sorted(_FRONTIER_FLAG))
    run_p.add_argument("--out", help="write the run result JSON here")
    run_p.add_argument("--transcript", action="store_true", help="include the prompt/reply log")
    common(run_p)
    run_p.set_defaults(func=cmd_run)

    bench_p = sub.add_parser("bench", help="run a benchmark dataset")
    bench_p.add_argument("dataset")
    bench_p.add_argument("--k", type=int)
    bench_p.add_argument("--policy", choices=sorted(_POLICY_FLAG))
    bench_p.add_argument("--frontier", choices=sorted(_FRONTIER_FLAG))
    bench_p.add_argument("--jobs", type=int, default=1)
    bench_p.add_argument("--out", help="results JSONL path")
    bench_p.add_argument("--resume", action="store_true")
    bench_p.add_argument("--judge-backend", dest="judge_backend",
                         help="remote | scripted:<replies.jsonl>")
    common(bench_p)
    bench_p.set_defaults(func=cmd_bench)

    metrics_p = sub.add_parser("metrics", help="metrics report from a results file")
    metrics_p.add_argument("results")
    metrics_p.add_argument("--json-out", dest="json_out")
    metrics_p.set_defaults(func=cmd_metrics)

    judge_p = sub.add_parser("judge", help="grade a predictions file against a dataset")
    judge_p.add_argument("predictions")
    judge_p.add_argument("dataset")
    judge_p.add_argument("--out")
    common(judge_p)
    judge_p.set_defaults(func=cmd_judge)

    sweep_p = sub.add_parser("sweep-k", help="benchmark across step budgets")
    sweep_p.add_argument("dataset")
    sweep_p.add_argument("--k-values", dest="k_values",
                         help="comma-separated budgets (default 5,10,15,20,25)")
    sweep_p.add_argument("--policy", choices=sorted(_POLICY_FLAG))
    sweep_p.add_argument("--frontier", choices=sorted(_FRONTIER_FLAG))
    sweep_p.add_argument("--jobs", type=int, default=1)
    sweep_p.add_argument("--csv", help="write an accuracy-vs-K CSV here")
    sweep_p.add_argument("--judge-backend", dest="judge_backend")
    common(sweep_p)
    sweep_p.set_defaults(func=cmd_sweep_k)

    datagen_p = sub.add_parser("datagen", help="crawl a site and build a QA review queue")
    datagen_p.add_argument("root_url")
    datagen_p.add_argument("--max-depth", type=int, default=4)
    datagen_p.add_argument("--max-pages", type=int, default=500)
    datagen_p.add_argument("--singles", type=int, default=2)
    datagen_p.add_argument("--multis", type=int, default=2)
    datagen_p.add_argument("--out-crawl", dest="out_crawl")
    datagen_p.add_argument("--out-queue", dest="out_queue")
    datagen_p.add_argument("--domain", default="Organization")
    datagen_p.add_argument("--language", default="English")
    datagen_p.add_argument("--verifier-backend", dest="verifier_backend")
    common(datagen_p)
    datagen_p.set_defaults(func=cmd_datagen)

    sim_p = sub.add_parser("simsite", help="generate a synthetic site")
    sim_p.add_argument("--seed", type=int, default=0)
    sim_p.add_argument("--depth", type=int, default=3)
    sim_p.add_argument("--branching", type=int, default=2)
    sim_p.add_argument("--facts", type=int, default=0)
    sim_p.add_argument("--out", help="write the spec JSON here")
    sim_p.add_argument("--html-dir", dest="html_dir", help="materialize static HTML here")
    sim_p.set_defaults(func=cmd_simsite)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TraversalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
