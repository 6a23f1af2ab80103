"""Shared fixtures and an acceptance-result banner.

The hook prints one PASS/FAIL line per acceptance criterion regardless of
pytest's capture settings, so the acceptance run is auditable from the
plain test output.
"""

import numpy as np
import pytest

from structembed.config import Config
from structembed.corpus import ingest


def make_corpus(tmp_path, docs, edges=(), cfg=None):
    """Write corpus/edge files and ingest them; docs is [(id, text)]."""
    import json

    corpus_path = tmp_path / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for doc_id, text in docs:
            fh.write(json.dumps({"id": doc_id, "text": text}) + "\n")
    edges_path = tmp_path / "edges.tsv"
    with open(edges_path, "w", encoding="utf-8") as fh:
        for edge in edges:
            fh.write("\t".join(str(x) for x in edge) + "\n")
    return ingest(corpus_path, edges_path, cfg or Config())


def rel_error(analytic, numeric):
    denom = max(abs(analytic), abs(numeric), 1e-12)
    return abs(analytic - numeric) / denom


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE] {name}: {outcome}", flush=True)
