"""Shared fixtures. The whole suite runs offline: any attempt to open a
network connection fails the test immediately."""

from __future__ import annotations

import socket

import pytest

from ragmark.embed import HashingEmbeddingBackend, build_document_index
from ragmark.evalbench import load_ground_truth
from ragmark.llm import CompletionCache, CompletionClient
from ragmark.testing import GoldChatBackend, synthetic_corpus


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    def guard(*args, **kwargs):
        raise AssertionError("network call attempted during offline test suite")

    monkeypatch.setattr(socket.socket, "connect", guard)
    monkeypatch.setattr(socket, "create_connection", guard)


@pytest.fixture(scope="session")
def truth():
    return load_ground_truth()


@pytest.fixture(scope="session")
def hashing_backend():
    return HashingEmbeddingBackend(dims=256, seed=0)


@pytest.fixture(scope="session")
def company_indexes(truth, hashing_backend):
    return {
        doc.company_label: build_document_index(doc, hashing_backend)
        for doc in synthetic_corpus(truth)
    }


@pytest.fixture
def gold_client(truth):
    return CompletionClient(cache=CompletionCache(), backends={"mock": GoldChatBackend(truth)})
