"""Wire-contract tests against an in-process stub HTTP server."""

import math

import pytest

from multirag.embedding import RemoteProvider
from multirag.errors import (
    ConfigError,
    DimensionMismatchError,
    EmptyCompletionError,
    LogprobsMissingError,
    TransportError,
    ZeroVectorError,
)
from multirag.generation import DecodeParams, OpenAIChatBackend

from conftest import chat_route, embeddings_route


class TestEmbeddingsWire:
    def test_request_shape_and_order(self, stub_server):
        stub_server.route("/v1/embeddings", embeddings_route(dim=4))
        provider = RemoteProvider("emb-x", endpoint=stub_server.url, retries=0)
        out = provider.embed(["first", "second"])
        assert len(out) == 2 and out[0].dim == 4
        req = stub_server.requests[-1]
        assert req["path"] == "/v1/embeddings"
        assert req["body"] == {"model": "emb-x", "input": ["first", "second"]}

    def test_batching(self, stub_server):
        stub_server.route("/v1/embeddings", embeddings_route())
        provider = RemoteProvider("emb-x", endpoint=stub_server.url,
                                  batch_size=2, retries=0)
        provider.embed([f"t{i}" for i in range(5)])
        sizes = [len(r["body"]["input"]) for r in stub_server.requests]
        assert sizes == [2, 2, 1]

    def test_bearer_token_from_named_env(self, stub_server, monkeypatch):
        monkeypatch.setenv("STUB_KEY", "secret-token")
        stub_server.route("/v1/embeddings", embeddings_route())
        provider = RemoteProvider("emb-x", endpoint=stub_server.url,
                                  api_key_env="STUB_KEY", retries=0)
        provider.embed(["text"])
        auth = stub_server.requests[-1]["headers"].get("Authorization")
        assert auth == "Bearer secret-token"

    def test_missing_credential_env_fails_fast(self, monkeypatch):
        monkeypatch.delenv("STUB_MISSING", raising=False)
        with pytest.raises(ConfigError):
            RemoteProvider("emb-x", endpoint="http://x", api_key_env="STUB_MISSING")

    def test_mixed_dimensions_fatal(self, stub_server):
        def mixed(body):
            data = [{"embedding": [1.0] * (3 if i % 2 else 4)}
                    for i in range(len(body["input"]))]
            return 200, {"data": data}
        stub_server.route("/v1/embeddings", mixed)
        provider = RemoteProvider("emb-x", endpoint=stub_server.url, retries=0)
        with pytest.raises(DimensionMismatchError):
            provider.embed(["a", "b"])

    def test_zero_vector_fatal(self, stub_server):
        stub_server.route("/v1/embeddings",
                          lambda body: (200, {"data": [{"embedding": [0.0, 0.0]}]}))
        provider = RemoteProvider("emb-x", endpoint=stub_server.url, retries=0)
        with pytest.raises(ZeroVectorError):
            provider.embed(["a"])

    def test_wrong_cardinality_fatal(self, stub_server):
        stub_server.route("/v1/embeddings",
                          lambda body: (200, {"data": [{"embedding": [1.0, 2.0]}]}))
        provider = RemoteProvider("emb-x", endpoint=stub_server.url, retries=0)
        with pytest.raises(DimensionMismatchError):
            provider.embed(["a", "b"])


class TestChatWire:
    def backend(self, server, **kw):
        kw.setdefault("retries", 0)
        kw.setdefault("vocab_size", 100)
        return OpenAIChatBackend("llm-x", endpoint=server.url, **kw)

    def test_request_shape(self, stub_server):
        stub_server.route("/v1/chat/completions", chat_route(tokens=("4", "2")))
        backend = self.backend(stub_server)
        completion, steps = backend.complete(
            "what is 6 times 7", DecodeParams(temperature=0.0, top_logprobs=7))
        body = stub_server.requests[-1]["body"]
        assert body["model"] == "llm-x"
        assert body["messages"] == [{"role": "user", "content": "what is 6 times 7"}]
        assert body["temperature"] == 0.0
        assert body["logprobs"] is True
        assert body["top_logprobs"] == 7
        assert completion == "4 2"
        assert len(steps) == 2

    def test_probabilities_exponentiated(self, stub_server):
        stub_server.route("/v1/chat/completions", chat_route(tokens=("4",)))
        _, steps = self.backend(stub_server).complete("q", DecodeParams())
        step = steps[0]
        assert step.prob == pytest.approx(0.8)
        assert dict(step.dist)["x"] == pytest.approx(0.15)
        assert step.tail_mass == pytest.approx(0.05)
        assert step.vocab_size == 100

    def test_missing_logprobs_fatal(self, stub_server):
        def no_logprobs(body):
            return 200, {"choices": [{"message": {"content": "42"}}]}
        stub_server.route("/v1/chat/completions", no_logprobs)
        with pytest.raises(LogprobsMissingError):
            self.backend(stub_server).complete("q", DecodeParams())

    def test_missing_token_fields_fatal(self, stub_server):
        def partial(body):
            return 200, {"choices": [{
                "message": {"content": "42"},
                "logprobs": {"content": [{"token": "42"}]},
            }]}
        stub_server.route("/v1/chat/completions", partial)
        with pytest.raises(LogprobsMissingError):
            self.backend(stub_server).complete("q", DecodeParams())

    def test_empty_completion_fatal(self, stub_server):
        def empty(body):
            return 200, {"choices": [{"message": {"content": ""},
                                      "logprobs": {"content": []}}]}
        stub_server.route("/v1/chat/completions", empty)
        with pytest.raises(EmptyCompletionError):
            self.backend(stub_server).complete("q", DecodeParams())

    def test_chosen_token_added_to_dist(self, stub_server):
        top = [{"token": "y", "logprob": math.log(0.1)}]
        stub_server.route("/v1/chat/completions", chat_route(tokens=("4",), top=top))
        _, steps = self.backend(stub_server).complete("q", DecodeParams())
        assert "4" in dict(steps[0].dist)


class TestTransport:
    def test_retry_then_success(self, stub_server):
        attempts = {"n": 0}

        def flaky(body):
            attempts["n"] += 1
            if attempts["n"] == 1:
                return 500, {"error": "transient"}
            return embeddings_route()(body)

        stub_server.route("/v1/embeddings", flaky)
        provider = RemoteProvider("emb-x", endpoint=stub_server.url,
                                  retries=2, backoff=0.0)
        provider.embed(["a"])
        assert attempts["n"] == 2

    def test_gives_up_after_retries(self, stub_server):
        stub_server.route("/v1/embeddings", lambda body: (500, {"error": "down"}))
        provider = RemoteProvider("emb-x", endpoint=stub_server.url,
                                  retries=1, backoff=0.0)
        with pytest.raises(TransportError):
            provider.embed(["a"])
        assert len(stub_server.requests) == 2

    def test_client_error_not_retried(self, stub_server):
        stub_server.route("/v1/embeddings", lambda body: (400, {"error": "bad"}))
        provider = RemoteProvider("emb-x", endpoint=stub_server.url,
                                  retries=3, backoff=0.0)
        with pytest.raises(TransportError):
            provider.embed(["a"])
        assert len(stub_server.requests) == 1
