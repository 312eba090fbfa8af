import math
from pathlib import Path

import pytest

import protip

DATA = Path(__file__).resolve().parents[2] / "tests" / "data"


def test_bm25_hand_corpus():
    corpus = protip.load_corpus(str(DATA / "bm25_tools.jsonl"))
    hits = protip.Bm25Index.build(corpus).topk("rain forecast", 5)
    assert [h[0] for h in hits] == ["t2", "t4"]
    assert math.isclose(hits[0][1], 2.6084874591873235, abs_tol=1e-9)


def test_loss_and_metrics():
    assert protip.contrastive_loss(0.5, 1) == pytest.approx(0.125, abs=1e-12)
    assert protip.contrastive_loss(0.1, 0) == pytest.approx(0.02, abs=1e-12)
    assert protip.rouge_lsum("the cat", "the cat sat") == pytest.approx(0.8, abs=1e-12)
    assert protip.exact_match("abc\n", "abc") == 1
    assert protip.recall_at_k(["a", "c"], ["a", "b"], 2) == 0.5
    assert protip.interleave([["a", "b"], ["c", "a"]], 4) == ["a", "c", "b"]


def test_progressive_pipeline(tmp_path):
    corpus, queries, _ = protip.generate(n_tools=40, n_queries=30, seed=4)
    base = protip.HashedBagOfWords(64, 9)
    encoder, losses = protip.train(queries, corpus, base, epochs=3, seed=2)
    assert len(losses) == 3
    store = protip.build_store(encoder, corpus)
    assert len(store) == 40
    ranked = protip.progressive_retrieve(encoder, store, queries[0].text, 6)
    assert len(ranked) == 6 and len(set(ranked)) == 6

    path = str(tmp_path / "store.bin")
    store.save(path)
    again = protip.load_store(path)
    assert again.ids == store.ids
    assert again.vector(store.ids[0]) == store.vector(store.ids[0])


def test_errors_are_typed():
    with pytest.raises(protip.IoError):
        protip.load_corpus("/nonexistent/tools.jsonl")
    with pytest.raises(protip.ProtipError):
        protip.load_corpus(str(DATA / "tools_dup.jsonl"))


def test_cli_entry_point():
    status, out, _ = protip.run_cli(
        ["retrieve", "--method", "bm25", "--corpus", str(DATA / "bm25_tools.jsonl"), "--query", "weather", "--k", "1"]
    )
    assert status == 0
    assert out.startswith("1\tt1\t")
