"""webtraverse: explorer-critic agents that answer questions by clicking
through a website, plus the benchmark harness around them."""

from .agent_core import (
    ABORTED,
    ANSWERED,
    REFUSED,
    STEP_LIMIT,
    Memory,
    MemoryEntry,
    Query,
    RunBackends,
    RunConfig,
    RunResult,
    run_query,
    run_react_baseline,
)
from .bench import (
    BenchmarkItem,
    DepthLabel,
    MetricsReport,
    ResultRecord,
    classify_error,
    compute_metrics,
    difficulty_of,
    load_dataset,
    run_benchmark,
)
from .judge import JudgeInput, JudgeOutput, judge, parse_grade
from .model_client import (
    ChatMessage,
    GenerationParams,
    RemoteBackend,
    ScriptedBackend,
    complete,
    extract_json_object,
)
from .rag_bridge import FixtureRetriever, answer_with_rag, compose_context, retrieve
from .urls import ScopeRule, canonicalize, normalize_url
from .webenv import (
    Button,
    DiskCache,
    FetchPolicy,
    Fetcher,
    HttpTransport,
    InMemoryTransport,
    Observation,
    Page,
    RawPage,
    build_observation,
    build_page,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
