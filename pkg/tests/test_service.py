"""HTTP endpoints: lifecycle ordering, payload shapes, error mapping."""

import json

import pytest
from fastapi.testclient import TestClient

from layerhop.service import ServiceState, create_app

CORPUS = "\n".join(
    json.dumps(row)
    for row in [
        {
            "doc_id": "A",
            "title": "Alpha",
            "summary": "about alpha",
            "components": [
                {"component_id": "c1", "modality": "paragraph", "content": "alpha body"},
                {
                    "component_id": "c2",
                    "modality": "paragraph",
                    "content": "see beta",
                    "links": ["B"],
                },
            ],
        },
        {
            "doc_id": "B",
            "title": "Beta",
            "summary": "about beta",
            "components": [
                {"component_id": "c1", "modality": "paragraph", "content": "beta body"}
            ],
        },
    ]
)

DATASET = "\n".join(
    json.dumps(row)
    for row in [
        {
            "qid": "q1",
            "question": "alpha body",
            "gold_components": [{"doc_id": "A", "component_id": "c1"}],
            "gold_answer": "",
        },
        {
            "qid": "q2",
            "question": "beta body",
            "gold_components": [{"doc_id": "B", "component_id": "c1"}],
            "gold_answer": "",
        },
    ]
)


@pytest.fixture()
def client():
    app = create_app(ServiceState(llm_factory=lambda: None))
    return TestClient(app)


def ingest_and_index(client):
    assert client.post("/corpus", json={"corpus_jsonl": CORPUS}).status_code == 200
    assert client.post("/index", json={}).status_code == 200


def test_health_reflects_lifecycle(client):
    before = client.get("/health").json()
    assert before["status"] == "ok"
    assert before["corpus_loaded"] is False and before["index_loaded"] is False

    ingest_and_index(client)
    after = client.get("/health").json()
    assert after["corpus_loaded"] is True and after["index_loaded"] is True


def test_validate_reports_problems(client):
    bad = json.dumps(
        {
            "doc_id": "A",
            "title": "t",
            "components": [
                {
                    "component_id": "c1",
                    "modality": "paragraph",
                    "content": "x",
                    "links": ["GHOST"],
                }
            ],
        }
    )
    body = client.post("/corpus/validate", json={"corpus_jsonl": bad}).json()
    assert body["clean"] is False
    assert body["dangling_links"] == [["A", "c1", "GHOST"]]


def test_ingest_counts_and_index_resets(client):
    resp = client.post("/corpus", json={"corpus_jsonl": CORPUS}).json()
    assert resp == {
        "documents": 2,
        "components": 3,
        "subcomponents": 0,
        "validation": {
            "clean": True,
            "dangling_links": [],
            "duplicate_ids": [],
            "empty_payloads": [],
        },
    }
    idx = client.post("/index", json={"dimension": 16, "seed": 3}).json()
    assert idx["nodes"] == 5  # 2 docs + 3 components
    assert idx["dimension"] == 16
    assert idx["fingerprint"].startswith("hash-")

    # re-ingesting invalidates the index
    client.post("/corpus", json={"corpus_jsonl": CORPUS})
    health = client.get("/health").json()
    assert health["index_loaded"] is False


def test_query_requires_state_then_succeeds(client):
    denied = client.post("/query", json={"question": "alpha body"})
    assert denied.status_code == 409
    assert "corpus" in denied.json()["detail"]

    ingest_and_index(client)
    resp = client.post(
        "/query",
        json={"question": "alpha body", "config": {"max_steps": 2, "top_k_final": 3}},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["query"] == "alpha body"
    assert body["terminal"] in ("stopped", "budget_exhausted")
    assert body["components"], "vector-only run must still rank something"
    top = body["components"][0]
    assert set(top) == {"doc_id", "component_id", "node", "score", "preview"}
    assert body["cost"]["llm_calls"] == 0
    assert "trace" not in body

    traced = client.post(
        "/query", json={"question": "alpha body", "include_trace": True}
    ).json()
    assert isinstance(traced["trace"], list) and traced["trace"]


def test_query_error_mapping(client):
    ingest_and_index(client)
    empty = client.post("/query", json={"question": "   "})
    assert empty.status_code == 400
    assert "EmptyQuery" in empty.json()["detail"]

    no_provider = client.post("/query", json={"question": "x", "policy": "llm"})
    assert no_provider.status_code == 409
    assert "MissingProvider" in no_provider.json()["detail"]

    bad_config = client.post(
        "/query", json={"question": "x", "config": {"max_steps": 0}}
    )
    assert bad_config.status_code == 400
    assert "ConfigError" in bad_config.json()["detail"]


def test_bench_endpoint(client):
    ingest_and_index(client)
    resp = client.post(
        "/bench",
        json={"dataset_jsonl": DATASET, "recall_ks": [1, 5], "mrr_k": 10},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["n_queries"] == 2
    assert body["variant"] == "full"
    assert set(body["aggregates"]) >= {"recall_at_1", "recall_at_5", "mrr_at_10"}
    assert [row["qid"] for row in body["rows"]] == ["q1", "q2"]

    ablated = client.post(
        "/bench", json={"dataset_jsonl": DATASET, "variant": "no_planner"}
    ).json()
    assert ablated["variant"] == "no_planner"
    assert ablated["config"]["ablations"]["no_planner"] is True

    bogus = client.post(
        "/bench", json={"dataset_jsonl": DATASET, "variant": "bogus"}
    )
    assert bogus.status_code == 400

    bad_gold = json.dumps(
        {
            "qid": "q9",
            "question": "x",
            "gold_components": [{"doc_id": "Z", "component_id": "c1"}],
        }
    )
    missing = client.post("/bench", json={"dataset_jsonl": bad_gold})
    assert missing.status_code == 400
    assert "DatasetError" in missing.json()["detail"]
