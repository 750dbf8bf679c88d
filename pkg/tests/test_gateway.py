from __future__ import annotations

import json

import pytest
import requests

from ruleforge.errors import GatewayError, MockScriptError
from ruleforge.gateway import (
    DEFAULT_TEMPERATURES,
    ChatExchange,
    CompletionRequest,
    HttpGateway,
    MockGateway,
    MockScript,
    TranscriptLog,
    approx_token_count,
)


def make_request(role="detection", user="find the spikes"):
    return CompletionRequest.for_role(role, "you label series", user)


def test_role_temperatures():
    assert make_request("detection").temperature == 1.0
    assert make_request("repair").temperature == 0.0
    assert make_request("review").temperature == 0.0
    assert set(DEFAULT_TEMPERATURES) == {"detection", "repair", "review"}


def test_request_rejects_unknown_role():
    with pytest.raises(ValueError):
        CompletionRequest.for_role("oracle", "s", "u")


class TestMockScript:
    def test_replays_in_order_per_role(self):
        script = MockScript({"detection": ["a", "b"], "repair": ["fix"]})
        assert script.next_response("detection") == "a"
        assert script.next_response("repair") == "fix"
        assert script.next_response("detection") == "b"
        assert script.calls_made("detection") == 2

    def test_underrun_fails_loudly(self):
        script = MockScript({"detection": ["only"]})
        script.next_response("detection")
        with pytest.raises(MockScriptError, match="call #2"):
            script.next_response("detection")
        with pytest.raises(MockScriptError):
            script.next_response("review")

    def test_leftovers_fail_exhaustion_check(self):
        script = MockScript({"detection": ["a", "b"]})
        script.next_response("detection")
        with pytest.raises(MockScriptError, match="unconsumed"):
            script.assert_exhausted()
        script.next_response("detection")
        script.assert_exhausted()

    def test_load_validates_shape(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(json.dumps({"detection": ["ok"]}))
        assert MockScript.load(path).next_response("detection") == "ok"

        path.write_text(json.dumps(["not", "an", "object"]))
        with pytest.raises(MockScriptError):
            MockScript.load(path)
        path.write_text(json.dumps({"detection": [1, 2]}))
        with pytest.raises(MockScriptError):
            MockScript.load(path)
        with pytest.raises(MockScriptError):
            MockScript.load(tmp_path / "absent.json")

    def test_unknown_role_rejected(self):
        with pytest.raises(MockScriptError):
            MockScript({"critic": ["nope"]})


def test_mock_gateway_builds_exchange():
    gateway = MockGateway(MockScript({"detection": ["spike at 3"]}))
    exchange = gateway.complete(make_request(user="one two three"))
    assert exchange.response == "spike at 3"
    assert exchange.backend == "mock"
    assert exchange.input_tokens == approx_token_count("you label series") + 3
    assert exchange.output_tokens == 3


class FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


def ok_payload(content="the answer", usage=None):
    body = {"choices": [{"message": {"content": content}}]}
    if usage is not None:
        body["usage"] = usage
    return body


class FakePost:
    """Scripted transport: each call pops the next canned response."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def __call__(self, url, headers=None, json=None, timeout=None):
        self.calls.append({"url": url, "headers": headers, "json": json, "timeout": timeout})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


class TestHttpGateway:
    def make(self, post, credential="sk-test", sleep=None):
        delays = []
        gateway = HttpGateway(
            endpoint="https://example.test/v1/chat/completions",
            model="demo-model",
            credential=credential,
            post=post,
            sleep=sleep or delays.append,
        )
        return gateway, delays

    def test_success_first_try(self):
        post = FakePost([FakeResponse(200, ok_payload(usage={"prompt_tokens": 11, "completion_tokens": 4}))])
        gateway, delays = self.make(post)
        exchange = gateway.complete(make_request())
        assert exchange.response == "the answer"
        assert (exchange.input_tokens, exchange.output_tokens) == (11, 4)
        assert delays == []
        sent = post.calls[0]
        assert sent["headers"]["Authorization"] == "Bearer sk-test"
        assert sent["json"]["model"] == "demo-model"
        assert sent["json"]["messages"][0]["role"] == "system"

    def test_retries_through_429_with_backoff(self):
        post = FakePost([FakeResponse(429), FakeResponse(429), FakeResponse(200, ok_payload())])
        gateway, delays = self.make(post)
        exchange = gateway.complete(make_request())
        assert exchange.response == "the answer"
        assert delays == [0.5, 1.0]
        assert len(post.calls) == 3

    def test_retries_transport_errors(self):
        post = FakePost(
            [requests.ConnectionError("refused"), FakeResponse(200, ok_payload())]
        )
        gateway, delays = self.make(post)
        assert gateway.complete(make_request()).response == "the answer"
        assert delays == [0.5]

    def test_gives_up_after_five_attempts(self):
        post = FakePost([FakeResponse(500)] * 6)
        gateway, delays = self.make(post)
        with pytest.raises(GatewayError, match="5 attempts"):
            gateway.complete(make_request())
        assert len(post.calls) == 5
        assert delays == [0.5, 1.0, 2.0, 4.0]

    def test_client_errors_do_not_retry(self):
        post = FakePost([FakeResponse(401, text="bad key")])
        gateway, _ = self.make(post)
        with pytest.raises(GatewayError, match="401"):
            gateway.complete(make_request())
        assert len(post.calls) == 1

    def test_malformed_body_raises(self):
        post = FakePost([FakeResponse(200, {"choices": []})])
        gateway, _ = self.make(post)
        with pytest.raises(GatewayError, match="malformed"):
            gateway.complete(make_request())

    def test_token_fallback_when_usage_missing(self):
        post = FakePost([FakeResponse(200, ok_payload(content="a b c"))])
        gateway, _ = self.make(post)
        exchange = gateway.complete(make_request(user="x y"))
        assert exchange.output_tokens == 3
        assert exchange.input_tokens == approx_token_count("you label series") + 2

    def test_no_credential_means_no_auth_header(self):
        post = FakePost([FakeResponse(200, ok_payload())])
        gateway, _ = self.make(post, credential=None)
        gateway.complete(make_request())
        assert "Authorization" not in post.calls[0]["headers"]


def test_transcript_round_trip(tmp_path):
    path = tmp_path / "run" / "transcripts.jsonl"
    log = TranscriptLog(path)
    gateway = MockGateway(MockScript({"detection": ["one"], "repair": ["two"]}))
    first = gateway.complete(make_request())
    second = gateway.complete(make_request("repair"))
    log.record(first)
    log.record(second)

    loaded = TranscriptLog.read(path)
    assert loaded == [first, second]
    # lines are sorted-key JSON, so reruns are byte-comparable
    lines = path.read_text().splitlines()
    assert all(json.loads(line) == dict(sorted(json.loads(line).items())) for line in lines)


def test_transcript_none_path_is_noop():
    log = TranscriptLog(None)
    log.record(
        ChatExchange(
            system_prompt="s",
            user_prompt="u",
            response="r",
            backend="mock",
            temperature=0.0,
            max_tokens=10,
            input_tokens=1,
            output_tokens=1,
        )
    )


def test_transcript_truncates_existing_file(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text("stale line\n")
    TranscriptLog(path)
    assert path.read_text() == ""
