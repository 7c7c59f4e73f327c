from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, strategies as st

from webtraverse.errors import EmptyCompletion, NoJsonFound, ScriptExhausted, TransportFailure
from webtraverse.model_client import (
    ChatMessage,
    GenerationParams,
    RemoteBackend,
    ScriptedBackend,
    as_bool,
    complete,
    complete_json,
    extract_json_object,
    prompt_fingerprint,
)

PARAMS = GenerationParams()


def _user(text: str) -> list[ChatMessage]:
    return [ChatMessage("user", text)]


# -- scripted backend ---------------------------------------------------------

def test_scripted_queue_pops_in_order():
    backend = ScriptedBackend(["r1", "r2"])
    assert complete(_user("x"), PARAMS, backend) == "r1"
    assert complete(_user("x"), PARAMS, backend) == "r2"


def test_scripted_queue_exhaustion():
    backend = ScriptedBackend(["only"])
    complete(_user("x"), PARAMS, backend)
    with pytest.raises(ScriptExhausted):
        complete(_user("x"), PARAMS, backend)


def test_scripted_fingerprint_map():
    backend = ScriptedBackend(by_fingerprint={"QUESTION: what": "GRADE: CORRECT"})
    reply = complete(_user("QUESTION: what  is\n\nthe venue?"), PARAMS, backend)
    assert reply == "GRADE: CORRECT"


def test_scripted_fingerprint_longest_key_wins():
    backend = ScriptedBackend(by_fingerprint={"Q": "short", "Q: exact": "long"})
    assert complete(_user("Q: exact match"), PARAMS, backend) == "long"


def test_fingerprint_is_last_user_message_normalized():
    messages = [
        ChatMessage("system", "sys"),
        ChatMessage("user", "first"),
        ChatMessage("assistant", "a"),
        ChatMessage("user", "  padded \n out  " + "z" * 100),
    ]
    fp = prompt_fingerprint(messages)
    assert fp.startswith("padded out")
    assert len(fp) == 64


def test_scripted_determinism_across_replays():
    script = ["a", "b", "c"]
    first = [complete(_user(f"m{i}"), PARAMS, ScriptedBackend(script)) for i in range(1)]
    transcript_one = []
    transcript_two = []
    for transcript in (transcript_one, transcript_two):
        backend = ScriptedBackend(script)
        for i in range(3):
            transcript.append(complete(_user(f"m{i}"), PARAMS, backend))
    assert transcript_one == transcript_two == script
    assert first == ["a"]


def test_scripted_backend_records_calls():
    backend = ScriptedBackend(["ok"])
    complete(_user("hello"), PARAMS, backend)
    assert backend.calls[0].messages[0].content == "hello"
    assert backend.calls[0].reply == "ok"


def test_from_jsonl(tmp_path):
    path = tmp_path / "script.jsonl"
    path.write_text(
        json.dumps({"reply": "queued"}) + "\n"
        + json.dumps({"fingerprint": "Q: venue", "reply": "mapped"}) + "\n",
        "utf-8",
    )
    backend = ScriptedBackend.from_jsonl(path)
    assert complete(_user("Q: venue please"), PARAMS, backend) == "mapped"
    assert complete(_user("anything else"), PARAMS, backend) == "queued"


def test_chat_message_validation():
    with pytest.raises(ValueError):
        ChatMessage("narrator", "x")
    with pytest.raises(ValueError):
        ChatMessage("user", "")


def test_generation_params_defaults():
    assert PARAMS.top_p == 0.8
    assert PARAMS.temperature is None


# -- remote backend -----------------------------------------------------------

class _StubHandler(BaseHTTPRequestHandler):
    responses: list[tuple[int, dict]] = []
    hits: int = 0

    def do_POST(self):
        cls = type(self)
        index = min(cls.hits, len(cls.responses) - 1)
        status, payload = cls.responses[index]
        cls.hits += 1
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.hits = 0
    yield server
    server.shutdown()


def _remote(server, **kwargs) -> RemoteBackend:
    return RemoteBackend(
        endpoint=f"http://127.0.0.1:{server.server_port}/v1",
        model_name="stub-model", backoff_s=0.001, **kwargs,
    )


def test_remote_happy_path(stub_server):
    _StubHandler.responses = [(200, {"choices": [{"message": {"content": "hello"}}]})]
    assert complete(_user("hi"), PARAMS, _remote(stub_server)) == "hello"
    assert _StubHandler.hits == 1


def test_remote_retries_three_times_then_fails(stub_server):
    _StubHandler.responses = [(500, {"err": 1})]
    with pytest.raises(TransportFailure):
        complete(_user("hi"), PARAMS, _remote(stub_server))
    assert _StubHandler.hits == 3


def test_remote_recovers_after_transient_500(stub_server):
    _StubHandler.responses = [
        (500, {"err": 1}),
        (200, {"choices": [{"message": {"content": "recovered"}}]}),
    ]
    assert complete(_user("hi"), PARAMS, _remote(stub_server)) == "recovered"
    assert _StubHandler.hits == 2


def test_remote_empty_completion(stub_server):
    _StubHandler.responses = [(200, {"choices": [{"message": {"content": ""}}]})]
    with pytest.raises(EmptyCompletion):
        complete(_user("hi"), PARAMS, _remote(stub_server))


def test_empty_messages_rejected():
    with pytest.raises(ValueError):
        complete([], PARAMS, ScriptedBackend(["x"]))


# -- extract_json_object ------------------------------------------------------

def test_extract_from_fenced_block():
    text = '```json\n{"judge": true, "answer": "66 hours"}\n```'
    assert extract_json_object(text) == {"judge": True, "answer": "66 hours"}


def test_extract_from_prose():
    assert extract_json_object('Sure! {"usefulness": false} hope that helps') == {"usefulness": False}


def test_extract_no_json():
    with pytest.raises(NoJsonFound):
        extract_json_object("no structure here")


def test_extract_skips_unbalanced_prefix():
    text = 'broken { not json } ... {"ok": 1}'
    assert extract_json_object(text) == {"ok": 1}


_FLAT_VALUES = st.one_of(
    st.booleans(), st.integers(-1000, 1000),
    st.text(alphabet=st.characters(blacklist_characters="{}", blacklist_categories=("Cs",)),
            max_size=20),
)
_PROSE = st.text(alphabet=st.characters(blacklist_characters="{}", blacklist_categories=("Cs",)),
                 max_size=40)


@given(st.dictionaries(st.text(alphabet="abcdefgh", min_size=1, max_size=6), _FLAT_VALUES,
                       max_size=5),
       _PROSE, _PROSE)
def test_extract_round_trips_embedded_objects(obj, prefix, suffix):
    embedded = prefix + json.dumps(obj) + suffix
    assert extract_json_object(embedded) == obj


# -- complete_json ------------------------------------------------------------

def test_complete_json_reasks_once_with_corrective_message():
    backend = ScriptedBackend(["not json at all", '{"ok": true}'])
    obj = complete_json(_user("please"), PARAMS, backend, reasks=1)
    assert obj == {"ok": True}
    retry_messages = backend.calls[1].messages
    assert retry_messages[-1].role == "user"
    assert "JSON" in retry_messages[-1].content


def test_complete_json_gives_up_after_reasks():
    backend = ScriptedBackend(["junk", "more junk"])
    with pytest.raises(NoJsonFound):
        complete_json(_user("please"), PARAMS, backend, reasks=1)


def test_as_bool_accepts_string_forms():
    assert as_bool(True) is True
    assert as_bool("true") is True
    assert as_bool("False") is False
    with pytest.raises(Exception):
        as_bool("maybe")
